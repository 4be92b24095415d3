#include "rematch/jsonio.hpp"

#include <fstream>
#include <sstream>

namespace rematch {

using nlohmann::json;

namespace {

// Malformed payloads surface as StructuralError so the service can classify
// them as client errors.
template <typename F>
auto guarded(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw StructuralError(std::string("malformed payload: ") + e.what());
  }
}

json positions_to_json(const std::vector<Position>& ps) {
  json out = json::array();
  for (Position p : ps) out.push_back(position_name(p));
  return out;
}

std::vector<Position> positions_from_json(const json& j) {
  std::vector<Position> out;
  for (const auto& name : j) out.push_back(position_from_name(name.get<std::string>()));
  return out;
}

}  // namespace

json to_json(const FeatureBundle& f) {
  json steps = json::array();
  for (const ShortTermGame& g : f.short_term) {
    steps.push_back({{"champion", g.champion_id},
                     {"kills", g.kills},
                     {"deaths", g.deaths},
                     {"assists", g.assists},
                     {"position", position_name(g.position)},
                     {"win", g.win}});
  }
  const LongTermStats& lt = f.long_term;
  const RealTimeFeatures& rt = f.real_time;
  return {{"short_term", steps},
          {"long_term",
           {{"win_rate", lt.win_rate},
            {"avg_kills", lt.avg_kills},
            {"avg_deaths", lt.avg_deaths},
            {"position_counts", lt.position_counts},
            {"position_win_rates", lt.per_position_win_rate},
            {"top_champions", lt.top_champions}}},
          {"real_time",
           {{"normal_mmr", rt.normal_mmr},
            {"ranked_mmr", rt.ranked_mmr},
            {"is_promotion", rt.is_promotion},
            {"preselected", positions_to_json(rt.preselected_positions)}}}};
}

FeatureBundle feature_bundle_from_json(const json& j) {
  return guarded([&] {
    FeatureBundle f;
    for (const auto& s : j.at("short_term")) {
      ShortTermGame g;
      g.champion_id = s.at("champion");
      g.kills = s.at("kills");
      g.deaths = s.at("deaths");
      g.assists = s.at("assists");
      g.position = position_from_name(s.at("position").get<std::string>());
      g.win = s.at("win");
      f.short_term.push_back(g);
    }
    const json& lt = j.at("long_term");
    f.long_term.win_rate = lt.at("win_rate");
    f.long_term.avg_kills = lt.at("avg_kills");
    f.long_term.avg_deaths = lt.at("avg_deaths");
    for (int p = 0; p < kPositions; ++p) {
      f.long_term.position_counts[p] = lt.at("position_counts").at(p);
      f.long_term.per_position_win_rate[p] = lt.at("position_win_rates").at(p);
    }
    for (const auto& c : lt.at("top_champions")) f.long_term.top_champions.push_back(c.get<int>());
    const json& rt = j.at("real_time");
    f.real_time.normal_mmr = rt.at("normal_mmr");
    f.real_time.ranked_mmr = rt.at("ranked_mmr");
    f.real_time.is_promotion = rt.at("is_promotion");
    f.real_time.preselected_positions = positions_from_json(rt.at("preselected"));
    return f;
  });
}

json to_json(const Assignment& a) {
  json out;
  for (Team t : {Team::Blue, Team::Red}) {
    json side;
    for (Position p : all_positions()) side[position_name(p)] = a.at(t, p);
    out[team_name(t)] = side;
  }
  return out;
}

Assignment assignment_from_json(const json& j) {
  return guarded([&] {
    Assignment a;
    for (Team t : {Team::Blue, Team::Red}) {
      const json& side = j.at(team_name(t));
      for (Position p : all_positions()) {
        a.at(t, p) = side.at(position_name(p)).get<std::string>();
      }
    }
    return a;
  });
}

json to_json(const MatchRecord& r) {
  json features = json::array();
  for (const FeatureBundle& f : r.features) features.push_back(to_json(f));
  return {{"v", kWireVersion},
          {"assignment", to_json(r.assignment)},
          {"features", features},
          {"outcome", r.outcome},
          {"labeled", r.labeled},
          {"te_blue", r.te_blue},
          {"te_red", r.te_red}};
}

MatchRecord match_record_from_json(const json& j) {
  return guarded([&] {
    if (j.value("v", -1) != kWireVersion) throw StructuralError("unknown record version");
    MatchRecord r;
    r.assignment = assignment_from_json(j.at("assignment"));
    const json& feats = j.at("features");
    if (feats.size() != kPlayersPerMatch) throw StructuralError("record needs 10 feature bundles");
    for (int slot = 0; slot < kPlayersPerMatch; ++slot) {
      r.features[slot] = feature_bundle_from_json(feats.at(slot));
    }
    r.outcome = j.at("outcome");
    r.labeled = j.at("labeled");
    r.te_blue = j.at("te_blue");
    r.te_red = j.at("te_red");
    return r;
  });
}

std::string to_jsonl(const std::vector<MatchRecord>& records) {
  std::ostringstream os;
  for (const MatchRecord& r : records) os << to_json(r).dump() << '\n';
  return os.str();
}

void write_jsonl(const std::string& path, const std::vector<MatchRecord>& records) {
  std::ofstream os(path);
  if (!os) throw LoadError("cannot open for writing: " + path);
  os << to_jsonl(records);
  if (!os) throw LoadError("failed writing " + path);
}

std::vector<MatchRecord> read_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw LoadError("cannot open: " + path);
  std::vector<MatchRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw LoadError("bad record on line " + std::to_string(out.size() + 1) + ": " + e.what());
    }
    out.push_back(match_record_from_json(j));
  }
  return out;
}

json to_json(const ExperimentReport& r) {
  return {{"matches", r.matches},
          {"mr", r.mr},
          {"mr_at_1", r.mr_at_1},
          {"mean_unfairness", r.mean_unfairness},
          {"crushing_rate", r.crushing_rate},
          {"er_mean", r.er_mean},
          {"fallback_rate", r.fallback_rate},
          {"acc_mmr_sum", r.acc_mmr_sum},
          {"acc_model", r.acc_model}};
}

}  // namespace rematch
