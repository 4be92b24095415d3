#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "rematch/match.hpp"
#include "rematch/simulator.hpp"

namespace rematch {

inline constexpr int kWireVersion = 1;

nlohmann::json to_json(const FeatureBundle& f);
FeatureBundle feature_bundle_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Assignment& a);
Assignment assignment_from_json(const nlohmann::json& j);

// Dataset / feature-log line. The same schema serves simulator exports and
// the service's own logs, so retraining needs no converter.
nlohmann::json to_json(const MatchRecord& r);
MatchRecord match_record_from_json(const nlohmann::json& j);

std::string to_jsonl(const std::vector<MatchRecord>& records);
void write_jsonl(const std::string& path, const std::vector<MatchRecord>& records);
std::vector<MatchRecord> read_jsonl(const std::string& path);

nlohmann::json to_json(const ExperimentReport& r);

}  // namespace rematch
