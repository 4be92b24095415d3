#pragma once

#include <atomic>
#include <chrono>
#include <istream>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rematch/jsonio.hpp"
#include "rematch/simulator.hpp"

namespace rematch {

struct MatchRequest {
  std::string id;
  std::vector<Player> players;  // exactly 10; satisfaction derived at parse
  std::optional<Policy> policy;
};

struct MatchResponse {
  std::string id;
  Assignment assignment;
  double satisfaction = 0.0;
  double win_rate = 0.0;
  double fairness = 0.0;
  long long n_act = 0;
  long long n_full = 0;
  double er = 0.0;
  bool fallback = false;
  double latency_ms = 0.0;
};

MatchRequest match_request_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MatchRequest& r);
nlohmann::json to_json(const MatchResponse& r);

// ER histogram: bin 0 holds er < 1e-7, bins 1..8 the decades
// [1e-7,1e-6) .. [1e-1,1e0]. Every success lands in exactly one bin.
inline constexpr int kErBins = 9;

struct ServiceMetrics {
  long long successes = 0;
  long long failures = 0;
  double sr = 1.0;  // successes / (successes + failures); 1.0 when empty
  bool empty = true;
  double latency_p10 = 0.0, latency_p50 = 0.0, latency_p90 = 0.0, latency_p99 = 0.0;
  double latency_mean = 0.0;
  double qps = 0.0;  // handled requests per second since service start
  std::array<long long, kErBins> er_histogram{};
};

nlohmann::json to_json(const ServiceMetrics& m);

struct ServiceConfig {
  FilterConfig filter;
  Policy default_policy = Policy::TwoStep;
  int score_threads = 0;      // 0 = hardware concurrency
  bool single_thread = false; // deterministic replay mode
  std::string feature_log;    // append path; empty disables logging
  uint64_t seed = 0;          // tie-break seed for one-step requests
};

// One-process serving pipeline: validate -> filter -> encode -> batch score
// -> pick fairest -> respond. Handlers share an immutable model snapshot and
// a mutex-guarded metrics aggregator.
class Service {
 public:
  Service(ServiceConfig config, std::shared_ptr<const WinRateModel> model);

  // Throws StructuralError/DomainError/InfeasibleError on bad requests and
  // lets internal failures propagate; callers wanting wire-level error
  // handling use handle_line.
  MatchResponse handle(const MatchRequest& request);

  // Full wire round trip: parse, handle, serialize; errors become structured
  // error lines ({"error":{"code":400|500,...}}) and count against SR.
  std::string handle_line(const std::string& line);

  // Scores candidates against the current snapshot; order matches input.
  // Throws StructuralError on an empty batch or dimension mismatch.
  std::vector<double> score_batch(const std::vector<EncodedMatch>& batch) const;

  // Loads, smoke-tests, then atomically replaces the snapshot. On any
  // failure the old model stays active and LoadError propagates.
  void swap_model(const std::string& artifact_path);

  ServiceMetrics metrics_snapshot() const;
  std::shared_ptr<const WinRateModel> model_snapshot() const;

 private:
  ServiceConfig config_;
  std::shared_ptr<const WinRateModel> model_;
  mutable std::mutex model_mu_;

  mutable std::mutex metrics_mu_;
  long long successes_ = 0;
  long long failures_ = 0;
  std::vector<double> latencies_ms_;
  std::array<long long, kErBins> er_histogram_{};
  std::chrono::steady_clock::time_point started_ = std::chrono::steady_clock::now();

  mutable std::mutex log_mu_;

  void record_success(double latency_ms, double er);
  void record_failure(double latency_ms);
  void log_features(const MatchRequest& request, const Assignment& chosen);
};

int er_bin(double er);

// Line loop over arbitrary streams (stdio serving and tests).
void serve_stream(Service& service, std::istream& in, std::ostream& out);

// Line-delimited protocol over TCP; one thread per connection unless
// single_thread is set. Runs until the process is terminated.
void serve_tcp(Service& service, int port, bool single_thread);

// INI-style config: [filter], [model], [simulator], [service] sections.
struct FileConfig {
  FilterConfig filter;
  std::string model_path;
  LossKind loss = LossKind::BCE;
  SimConfig simulator;
  int port = 0;  // 0 = stdio
  Policy policy = Policy::TwoStep;
  int threads = 0;
  bool single_thread = false;
  std::string feature_log;
};

FileConfig parse_config_file(const std::string& path);
FileConfig parse_config_text(const std::string& text);

}  // namespace rematch
