#include "rematch/service.hpp"

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "rematch/parallel.hpp"

namespace rematch {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Wire schema

MatchRequest match_request_from_json(const json& j) {
  try {
    if (j.value("v", -1) != kWireVersion) throw StructuralError("unknown request version");
    MatchRequest r;
    r.id = j.at("id");
    if (j.contains("policy")) r.policy = policy_from_name(j.at("policy").get<std::string>());
    const json& players = j.at("players");
    if (players.size() != kPlayersPerMatch) {
      throw StructuralError("request needs exactly 10 players");
    }
    for (const json& pj : players) {
      Player p;
      p.id = pj.at("id").get<std::string>();
      p.mmr = pj.at("mmr");
      if (pj.contains("room_id") && !pj.at("room_id").is_null()) {
        p.room_id = pj.at("room_id").get<std::string>();
      }
      p.features = feature_bundle_from_json(pj.at("features"));
      if (pj.contains("preselected")) {
        p.features.real_time.preselected_positions.clear();
        for (const auto& name : pj.at("preselected")) {
          p.features.real_time.preselected_positions.push_back(
              position_from_name(name.get<std::string>()));
        }
      }
      p.satisfaction = derive_satisfaction(p.features.long_term, p.features.real_time);
      r.players.push_back(std::move(p));
    }
    return r;
  } catch (const json::exception& e) {
    throw StructuralError(std::string("malformed request: ") + e.what());
  }
}

json to_json(const MatchRequest& r) {
  json players = json::array();
  for (const Player& p : r.players) {
    json pj{{"id", p.id}, {"mmr", p.mmr}, {"features", to_json(p.features)}};
    if (p.room_id) pj["room_id"] = *p.room_id;
    json presel = json::array();
    for (Position pos : p.features.real_time.preselected_positions) {
      presel.push_back(position_name(pos));
    }
    pj["preselected"] = presel;
    players.push_back(std::move(pj));
  }
  json out{{"v", kWireVersion}, {"id", r.id}, {"players", players}};
  if (r.policy) out["policy"] = policy_name(*r.policy);
  return out;
}

json to_json(const MatchResponse& r) {
  return {{"v", kWireVersion},
          {"id", r.id},
          {"assignment", to_json(r.assignment)},
          {"satisfaction", r.satisfaction},
          {"win_rate", r.win_rate},
          {"fairness", r.fairness},
          {"n_act", r.n_act},
          {"n_full", r.n_full},
          {"er", r.er},
          {"fallback", r.fallback},
          {"latency_ms", r.latency_ms}};
}

json to_json(const ServiceMetrics& m) {
  return {{"successes", m.successes},
          {"failures", m.failures},
          {"sr", m.sr},
          {"empty", m.empty},
          {"latency_ms",
           {{"p10", m.latency_p10},
            {"p50", m.latency_p50},
            {"p90", m.latency_p90},
            {"p99", m.latency_p99},
            {"mean", m.latency_mean}}},
          {"qps", m.qps},
          {"er_histogram", m.er_histogram}};
}

int er_bin(double er) {
  if (!(er >= 1e-7)) return 0;
  const int decade = static_cast<int>(std::floor(std::log10(er)));  // -7..0
  return std::clamp(8 + decade, 1, 8);
}

// ---------------------------------------------------------------------------
// Service

Service::Service(ServiceConfig config, std::shared_ptr<const WinRateModel> model)
    : config_(std::move(config)), model_(std::move(model)) {
  if (!model_) throw ConfigError("service needs a model");
}

std::shared_ptr<const WinRateModel> Service::model_snapshot() const {
  std::lock_guard<std::mutex> lock(model_mu_);
  return model_;
}

std::vector<double> Service::score_batch(const std::vector<EncodedMatch>& batch) const {
  if (batch.empty()) throw StructuralError("empty scoring batch");
  auto model = model_snapshot();
  std::vector<double> out(batch.size());
  const int workers =
      config_.single_thread ? 1
                            : (config_.score_threads > 0 ? config_.score_threads : default_workers());
  parallel_chunks(batch.size(), workers, [&](size_t, size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) out[i] = model->predict(batch[i]);
  });
  return out;
}

MatchResponse Service::handle(const MatchRequest& request) {
  const auto start = std::chrono::steady_clock::now();
  if (request.players.size() != kPlayersPerMatch) {
    throw StructuralError("request needs exactly 10 players");
  }
  for (size_t i = 0; i < request.players.size(); ++i) {
    for (size_t j = i + 1; j < request.players.size(); ++j) {
      if (request.players[i].id == request.players[j].id) {
        throw StructuralError("duplicate player id: " + request.players[i].id);
      }
    }
  }
  auto model = model_snapshot();

  MatchResponse resp;
  resp.id = request.id;
  const Policy policy = request.policy.value_or(config_.default_policy);
  if (policy == Policy::OneStep) {
    resp.assignment = one_step_assign(request.players, config_.seed);
    resp.satisfaction = satisfaction_product(resp.assignment, request.players);
    resp.win_rate = model->predict(
        encode_match(resp.assignment, request.players, model->config.encoder));
    resp.fairness = fairness_score(resp.win_rate);
    resp.n_act = 1;
    resp.n_full = 1;
    resp.er = 1.0;
  } else {
    FilterResult fr = enumerate_filtered(request.players, config_.filter);
    resp.n_act = fr.n_act;
    resp.n_full = fr.n_full;
    resp.er = fr.er;
    resp.fallback = fr.fallback;
    if (config_.filter.max_candidates > 0 &&
        fr.candidates.size() > static_cast<size_t>(config_.filter.max_candidates)) {
      fr.candidates.resize(config_.filter.max_candidates);
    }
    std::vector<EncodedMatch> batch(fr.candidates.size());
    const int workers = config_.single_thread ? 1 : default_workers();
    parallel_chunks(batch.size(), workers, [&](size_t, size_t begin, size_t end) {
      for (size_t i = begin; i < end; ++i) {
        batch[i] = encode_match(to_assignment(fr.candidates[i].slots, request.players),
                                request.players, model->config.encoder);
      }
    });
    const std::vector<double> scores = score_batch(batch);
    auto [best, fairness] = select_best(fr, scores, request.players);
    resp.assignment = best;
    resp.fairness = fairness;
    for (size_t i = 0; i < fr.candidates.size(); ++i) {
      if (to_assignment(fr.candidates[i].slots, request.players) == best) {
        resp.win_rate = scores[i];
        resp.satisfaction = fr.candidates[i].satisfaction;
        break;
      }
    }
  }
  log_features(request, resp.assignment);
  resp.latency_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - start)
                        .count();
  return resp;
}

std::string Service::handle_line(const std::string& line) {
  const auto start = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
  };
  std::string request_id;
  try {
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw StructuralError(std::string("malformed request: ") + e.what());
    }
    request_id = j.value("id", "");
    MatchRequest req = match_request_from_json(j);
    MatchResponse resp = handle(req);
    resp.latency_ms = elapsed_ms();
    record_success(resp.latency_ms, resp.er);
    return to_json(resp).dump();
  } catch (const std::exception& e) {
    // Client-attributable problems are 400-class; everything else is 500.
    int code = 500;
    if (dynamic_cast<const StructuralError*>(&e) || dynamic_cast<const DomainError*>(&e) ||
        dynamic_cast<const InfeasibleError*>(&e) || dynamic_cast<const EmptyResultError*>(&e)) {
      code = 400;
    }
    record_failure(elapsed_ms());
    return json{{"v", kWireVersion},
                {"id", request_id},
                {"error", {{"code", code}, {"message", e.what()}}}}
        .dump();
  }
}

void Service::swap_model(const std::string& artifact_path) {
  auto candidate = std::make_shared<const WinRateModel>(WinRateModel::load(artifact_path));
  // Smoke prediction on an all-zero encoding of matching dimensions.
  const EncoderConfig& enc = candidate->config.encoder;
  EncodedMatch smoke;
  smoke.steps.assign(kPlayersPerMatch,
                     std::vector<std::vector<double>>(
                         enc.short_term_window, std::vector<double>(enc.step_dim(), 0.0)));
  smoke.spatial.assign(kPlayersPerMatch, std::vector<double>(enc.spatial_dim(), 0.0));
  const double p = candidate->predict(smoke);
  if (!std::isfinite(p) || p <= 0.0 || p >= 1.0) {
    throw LoadError("smoke prediction failed; swap rejected");
  }
  std::lock_guard<std::mutex> lock(model_mu_);
  model_ = std::move(candidate);
}

void Service::record_success(double latency_ms, double er) {
  std::lock_guard<std::mutex> lock(metrics_mu_);
  ++successes_;
  latencies_ms_.push_back(latency_ms);
  ++er_histogram_[er_bin(er)];
}

void Service::record_failure(double latency_ms) {
  std::lock_guard<std::mutex> lock(metrics_mu_);
  ++failures_;
  latencies_ms_.push_back(latency_ms);
}

namespace {
// Nearest-rank percentile over a sorted sample.
double percentile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return 0.0;
  const size_t rank = static_cast<size_t>(std::ceil(p / 100.0 * sorted.size()));
  return sorted[std::clamp<size_t>(rank, 1, sorted.size()) - 1];
}
}  // namespace

ServiceMetrics Service::metrics_snapshot() const {
  std::lock_guard<std::mutex> lock(metrics_mu_);
  ServiceMetrics m;
  m.successes = successes_;
  m.failures = failures_;
  m.empty = successes_ + failures_ == 0;
  m.sr = m.empty ? 1.0 : double(successes_) / double(successes_ + failures_);
  std::vector<double> sorted = latencies_ms_;
  std::sort(sorted.begin(), sorted.end());
  m.latency_p10 = percentile(sorted, 10);
  m.latency_p50 = percentile(sorted, 50);
  m.latency_p90 = percentile(sorted, 90);
  m.latency_p99 = percentile(sorted, 99);
  if (!sorted.empty()) {
    double sum = 0.0;
    for (double v : sorted) sum += v;
    m.latency_mean = sum / sorted.size();
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  m.qps = elapsed > 0.0 ? (successes_ + failures_) / elapsed : 0.0;
  m.er_histogram = er_histogram_;
  return m;
}

void Service::log_features(const MatchRequest& request, const Assignment& chosen) {
  if (config_.feature_log.empty()) return;
  MatchRecord rec;
  rec.assignment = chosen;
  for (int slot = 0; slot < kPlayersPerMatch; ++slot) {
    rec.features[slot] = find_player(request.players, chosen.slots[slot]).features;
  }
  rec.labeled = false;
  std::lock_guard<std::mutex> lock(log_mu_);
  std::ofstream os(config_.feature_log, std::ios::app);
  if (os) os << to_json(rec).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Transports

void serve_stream(Service& service, std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out << service.handle_line(line) << '\n';
    out.flush();
  }
}

namespace {

void serve_connection(Service& service, int fd) {
  std::string buffer;
  char chunk[4096];
  for (;;) {
    const ssize_t n = ::read(fd, chunk, sizeof(chunk));
    if (n <= 0) break;
    buffer.append(chunk, n);
    size_t pos;
    while ((pos = buffer.find('\n')) != std::string::npos) {
      const std::string line = buffer.substr(0, pos);
      buffer.erase(0, pos + 1);
      if (line.empty()) continue;
      const std::string resp = service.handle_line(line) + "\n";
      size_t sent = 0;
      while (sent < resp.size()) {
        const ssize_t w = ::write(fd, resp.data() + sent, resp.size() - sent);
        if (w <= 0) {
          ::close(fd);
          return;
        }
        sent += w;
      }
    }
  }
  ::close(fd);
}

}  // namespace

void serve_tcp(Service& service, int port, bool single_thread) {
  const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listener < 0) throw ConfigError("cannot create listening socket");
  int one = 1;
  ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_ANY);
  addr.sin_port = htons(static_cast<uint16_t>(port));
  if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(listener);
    throw ConfigError("cannot bind port " + std::to_string(port));
  }
  if (::listen(listener, 64) != 0) {
    ::close(listener);
    throw ConfigError("cannot listen on port " + std::to_string(port));
  }
  for (;;) {
    const int fd = ::accept(listener, nullptr, nullptr);
    if (fd < 0) continue;
    if (single_thread) {
      serve_connection(service, fd);
    } else {
      std::thread([&service, fd] { serve_connection(service, fd); }).detach();
    }
  }
}

// ---------------------------------------------------------------------------
// Config file

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean for " + key + ": " + v);
}

double parse_real(const std::string& v, const std::string& key) {
  try {
    size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("bad number for " + key + ": " + v);
  }
}

long long parse_int(const std::string& v, const std::string& key) {
  try {
    size_t used = 0;
    const long long d = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("bad integer for " + key + ": " + v);
  }
}

std::string trim(const std::string& s) {
  const size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

FileConfig parse_config_text(const std::string& text) {
  FileConfig cfg;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("bad section header at line " + std::to_string(lineno));
      section = line.substr(1, line.size() - 2);
      if (section != "filter" && section != "model" && section != "simulator" &&
          section != "service") {
        throw ConfigError("unknown config section: " + section);
      }
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value at line " + std::to_string(lineno));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string qual = section + "." + key;

    if (section == "filter") {
      if (key == "threshold") cfg.filter.threshold = parse_real(value, qual);
      else if (key == "fallback_top_m") cfg.filter.fallback_top_m = int(parse_int(value, qual));
      else if (key == "max_candidates") cfg.filter.max_candidates = int(parse_int(value, qual));
      else throw ConfigError("unknown config key: " + qual);
    } else if (section == "model") {
      if (key == "path") cfg.model_path = value;
      else if (key == "loss") cfg.loss = loss_kind_from_name(value);
      else throw ConfigError("unknown config key: " + qual);
    } else if (section == "simulator") {
      SimConfig& s = cfg.simulator;
      if (key == "population") s.population = int(parse_int(value, qual));
      else if (key == "tier_sd") s.tier_sd = parse_real(value, qual);
      else if (key == "position_dev_sd") s.position_dev_sd = parse_real(value, qual);
      else if (key == "preference_concentration") s.preference_concentration = parse_real(value, qual);
      else if (key == "side_advantage") s.side_advantage = parse_real(value, qual);
      else if (key == "outcome_temperature") s.outcome_temperature = parse_real(value, qual);
      else if (key == "history_skill_scale") s.history_skill_scale = parse_real(value, qual);
      else if (key == "history_games") s.history_games = int(parse_int(value, qual));
      else if (key == "mmr_noise_sd") s.mmr_noise_sd = parse_real(value, qual);
      else if (key == "mmr_band") s.mmr_band = parse_real(value, qual);
      else if (key == "economy_base") s.economy_base = parse_real(value, qual);
      else if (key == "economy_gap_scale") s.economy_gap_scale = parse_real(value, qual);
      else if (key == "economy_noise") s.economy_noise = parse_real(value, qual);
      else if (key == "seed") s.seed = uint64_t(parse_int(value, qual));
      else throw ConfigError("unknown config key: " + qual);
    } else if (section == "service") {
      if (key == "port") cfg.port = int(parse_int(value, qual));
      else if (key == "policy") cfg.policy = policy_from_name(value);
      else if (key == "threads") cfg.threads = int(parse_int(value, qual));
      else if (key == "single_thread") cfg.single_thread = parse_bool(value, qual);
      else if (key == "feature_log") cfg.feature_log = value;
      else throw ConfigError("unknown config key: " + qual);
    } else {
      throw ConfigError("key outside any section at line " + std::to_string(lineno));
    }
  }
  return cfg;
}

FileConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw LoadError("cannot open config file: " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return parse_config_text(os.str());
}

}  // namespace rematch
