#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "rematch/service.hpp"

using namespace rematch;
using nlohmann::json;

namespace {

FileConfig load_file_config(const std::string& path) {
  return path.empty() ? FileConfig{} : parse_config_file(path);
}

int cmd_simulate(const std::string& config_path, uint64_t seed, int population, int matches,
                 const std::string& out_path) {
  FileConfig fc = load_file_config(config_path);
  SimConfig sim = fc.simulator;
  if (seed != 0) sim.seed = seed;
  if (population > 0) sim.population = population;
  const Population pop = generate_population(sim);
  const std::vector<MatchRecord> records = synthesize_dataset(pop, matches, sim, sim.seed + 1);
  write_jsonl(out_path, records);
  std::cout << json{{"population", sim.population},
                    {"matches", matches},
                    {"seed", sim.seed},
                    {"out", out_path}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_train(const std::string& data_path, const std::string& out_path,
              const std::string& loss_name, int epochs, int batch_size, double lr,
              uint64_t seed, int threads, int layers, int width, int heads) {
  const std::vector<MatchRecord> records = read_jsonl(data_path);
  ModelConfig mc;
  mc.toe.layers = mc.soe.layers = mc.poe.layers = layers;
  mc.toe.width = mc.soe.width = mc.poe.width = width;
  mc.toe.heads = mc.soe.heads = mc.poe.heads = heads;
  mc.encoder = fit_encoder(records, mc.encoder.short_term_window, mc.encoder.champion_vocab,
                           mc.encoder.bins);
  WinRateModel model = WinRateModel::init(mc, seed);

  TrainConfig tc;
  tc.loss = loss_kind_from_name(loss_name);
  tc.epochs = epochs;
  tc.batch_size = batch_size;
  tc.learning_rate = lr;
  tc.seed = seed;
  tc.threads = threads;
  const TrainLog log = train(model, records, tc);
  model.save(out_path);
  std::cout << json{{"out", out_path},
                    {"loss", loss_name},
                    {"epochs", epochs},
                    {"train_loss", log.train_loss},
                    {"val_accuracy", log.val_accuracy}}
                   .dump()
            << "\n";
  return 0;
}

Service make_service(const FileConfig& fc, const std::string& model_path, double threshold,
                     const std::string& policy_name_arg, bool single_thread) {
  ServiceConfig sc;
  sc.filter = fc.filter;
  if (threshold >= 0.0) sc.filter.threshold = threshold;
  sc.default_policy = fc.policy;
  if (!policy_name_arg.empty()) sc.default_policy = policy_from_name(policy_name_arg);
  sc.single_thread = single_thread || fc.single_thread;
  sc.score_threads = fc.threads;
  sc.feature_log = fc.feature_log;
  const std::string path = model_path.empty() ? fc.model_path : model_path;
  if (path.empty()) throw ConfigError("no model artifact given (--model or [model] path)");
  auto model = std::make_shared<const WinRateModel>(WinRateModel::load(path));
  return Service(sc, std::move(model));
}

int cmd_serve(const std::string& config_path, const std::string& model_path, int port,
              double threshold, const std::string& policy, bool single_thread) {
  FileConfig fc = load_file_config(config_path);
  if (port >= 0) fc.port = port;
  Service service = make_service(fc, model_path, threshold, policy, single_thread);
  if (fc.port == 0) {
    serve_stream(service, std::cin, std::cout);
  } else {
    std::cerr << "listening on port " << fc.port << "\n";
    serve_tcp(service, fc.port, single_thread || fc.single_thread);
  }
  return 0;
}

int cmd_match(const std::string& config_path, const std::string& model_path,
              const std::string& in_path, double threshold, const std::string& policy) {
  FileConfig fc = load_file_config(config_path);
  Service service = make_service(fc, model_path, threshold, policy, true);
  std::ifstream file;
  std::istream* in = &std::cin;
  if (!in_path.empty()) {
    file.open(in_path);
    if (!file) throw ConfigError("cannot open request file: " + in_path);
    in = &file;
  }
  std::string line;
  while (std::getline(*in, line)) {
    if (line.empty()) continue;
    std::cout << service.handle_line(line) << "\n";
  }
  return 0;
}

int cmd_experiment(const std::string& config_path, const std::string& model_path, uint64_t seed,
                   int matches, double threshold, const std::string& policy) {
  FileConfig fc = load_file_config(config_path);
  SimConfig sim = fc.simulator;
  const Population pop = generate_population(sim);
  const std::string path = model_path.empty() ? fc.model_path : model_path;
  if (path.empty()) throw ConfigError("no model artifact given (--model or [model] path)");
  const WinRateModel model = WinRateModel::load(path);
  ModelScorer scorer(model);

  ExperimentConfig ec;
  ec.n_matches = matches;
  ec.seed = seed;
  ec.filter = fc.filter;
  if (threshold >= 0.0) ec.filter.threshold = threshold;

  json out;
  auto run_policy = [&](Policy p) {
    ec.policy = p;
    return to_json(run_experiment(pop, ec, sim, &scorer));
  };
  if (policy.empty()) {
    out["one_step"] = run_policy(Policy::OneStep);
    out["two_step"] = run_policy(Policy::TwoStep);
  } else {
    out[policy_from_name(policy) == Policy::OneStep ? "one_step" : "two_step"] =
        run_policy(policy_from_name(policy));
  }
  out["seed"] = seed;
  out["matches"] = matches;
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_bench(const std::string& config_path, const std::string& model_path,
              std::vector<int> assignments, std::vector<int> concurrency, int requests) {
  FileConfig fc = load_file_config(config_path);
  const std::string path = model_path.empty() ? fc.model_path : model_path;
  if (path.empty()) throw ConfigError("no model artifact given (--model or [model] path)");
  auto model = std::make_shared<const WinRateModel>(WinRateModel::load(path));
  ServiceConfig sc;
  sc.filter = fc.filter;
  Service service(sc, model);

  // One fixed pool; the batch for each request reuses its top candidates.
  SimConfig sim = fc.simulator;
  sim.population = std::max(sim.population, 100);
  const Population pop = generate_population(sim);
  std::vector<Player> pool(pop.players.begin(), pop.players.begin() + kPlayersPerMatch);
  FilterConfig filt;
  filt.threshold = 0.0;
  FilterResult fr = enumerate_filtered(pool, filt);
  const int max_batch = *std::max_element(assignments.begin(), assignments.end());
  std::vector<EncodedMatch> encoded;
  for (int i = 0; i < max_batch; ++i) {
    encoded.push_back(encode_match(to_assignment(fr.candidates[i].slots, pool), pool,
                                   model->config.encoder));
  }

  json rows = json::array();
  bool all_ok = true;
  for (int batch : assignments) {
    const std::vector<EncodedMatch> request_batch(encoded.begin(), encoded.begin() + batch);
    for (int conc : concurrency) {
      std::vector<double> latencies(size_t(conc) * requests, 0.0);
      std::atomic<long long> fails{0};
      const auto wall_start = std::chrono::steady_clock::now();
      std::vector<std::thread> workers;
      for (int w = 0; w < conc; ++w) {
        workers.emplace_back([&, w] {
          for (int r = 0; r < requests; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            try {
              service.score_batch(request_batch);
            } catch (...) {
              ++fails;
            }
            latencies[size_t(w) * requests + r] =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
          }
        });
      }
      for (auto& t : workers) t.join();
      const double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
      std::sort(latencies.begin(), latencies.end());
      auto pct = [&](double p) {
        const size_t rank = static_cast<size_t>(std::ceil(p / 100.0 * latencies.size()));
        return latencies[std::clamp<size_t>(rank, 1, latencies.size()) - 1];
      };
      double mean = 0.0;
      for (double v : latencies) mean += v;
      mean /= latencies.size();
      all_ok = all_ok && fails.load() == 0;
      rows.push_back({{"assignments", batch},
                      {"concurrency", conc},
                      {"requests", conc * requests},
                      {"failures", fails.load()},
                      {"p10", pct(10)},
                      {"p50", pct(50)},
                      {"p90", pct(90)},
                      {"p99", pct(99)},
                      {"mean", mean},
                      {"qps", (double(conc) * requests) / wall}});
    }
  }
  std::cout << json{{"rows", rows}}.dump() << "\n";
  return all_ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MOBA re-matchmaking engine"};
  app.require_subcommand(1);

  std::string config_path, model_path, out_path, data_path, in_path;
  std::string loss = "bce", policy;
  uint64_t seed = 0;
  double threshold = -1.0;  // < 0 = keep config default
  int population = 0, matches = 1000, epochs = 10, batch_size = 32, port = -1;
  int threads = 0, layers = 2, width = 32, heads = 2, requests = 20;
  double lr = 1e-3;
  bool single_thread = false;
  std::vector<int> bench_assignments{1, 4, 8, 16};
  std::vector<int> bench_concurrency{20, 50, 100};

  auto* sim = app.add_subcommand("simulate", "generate a synthetic population and dataset");
  sim->add_option("--config", config_path);
  sim->add_option("--seed", seed);
  sim->add_option("--population", population);
  sim->add_option("--matches", matches);
  sim->add_option("--out", out_path)->required();

  auto* tr = app.add_subcommand("train", "fit the win-rate predictor on a dataset");
  tr->add_option("--data", data_path)->required();
  tr->add_option("--out", out_path)->required();
  tr->add_option("--loss", loss)->check(CLI::IsMember({"bce", "ned", "ned-smoothed"}));
  tr->add_option("--epochs", epochs);
  tr->add_option("--batch-size", batch_size);
  tr->add_option("--lr", lr);
  tr->add_option("--seed", seed);
  tr->add_option("--threads", threads);
  tr->add_option("--layers", layers);
  tr->add_option("--width", width);
  tr->add_option("--heads", heads);

  auto* sv = app.add_subcommand("serve", "serve match requests over TCP or stdio");
  sv->add_option("--config", config_path);
  sv->add_option("--model", model_path);
  sv->add_option("--port", port);
  sv->add_option("--threshold", threshold);
  sv->add_option("--policy", policy)->check(CLI::IsMember({"one-step", "two-step"}));
  sv->add_flag("--single-thread", single_thread);

  auto* mt = app.add_subcommand("match", "answer one-shot requests from a file or stdin");
  mt->add_option("--config", config_path);
  mt->add_option("--model", model_path);
  mt->add_option("--in", in_path);
  mt->add_option("--threshold", threshold);
  mt->add_option("--policy", policy)->check(CLI::IsMember({"one-step", "two-step"}));

  auto* ex = app.add_subcommand("experiment", "compare one-step and two-step policies");
  ex->add_option("--config", config_path);
  ex->add_option("--model", model_path);
  ex->add_option("--seed", seed);
  ex->add_option("--matches", matches);
  ex->add_option("--threshold", threshold);
  ex->add_option("--policy", policy)->check(CLI::IsMember({"one-step", "two-step"}));

  auto* be = app.add_subcommand("bench", "stress-test batched scoring");
  be->add_option("--config", config_path);
  be->add_option("--model", model_path);
  be->add_option("--assignments", bench_assignments)->delimiter(',');
  be->add_option("--concurrency", bench_concurrency)->delimiter(',');
  be->add_option("--requests", requests, "requests per worker");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed()) return cmd_simulate(config_path, seed, population, matches, out_path);
    if (tr->parsed())
      return cmd_train(data_path, out_path, loss, epochs, batch_size, lr, seed, threads, layers,
                       width, heads);
    if (sv->parsed()) return cmd_serve(config_path, model_path, port, threshold, policy, single_thread);
    if (mt->parsed()) return cmd_match(config_path, model_path, in_path, threshold, policy);
    if (ex->parsed()) return cmd_experiment(config_path, model_path, seed, matches, threshold, policy);
    if (be->parsed())
      return cmd_bench(config_path, model_path, bench_assignments, bench_concurrency, requests);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const LoadError& e) {
    std::cerr << "load error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
