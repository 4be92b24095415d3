#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "rematch/assignment.hpp"
#include "rematch/predictor.hpp"

namespace rematch {

// Ground-truth state for one synthetic player; hidden from the engine.
struct LatentPlayer {
  PlayerId id;
  std::array<double, kPositions> latent_skill{};
  std::array<double, kPositions> preference_weights{};  // >= 0, sum > 0
  int skill_tier = 0;  // 0 novice .. 3 expert

  void validate() const;
};

struct SimConfig {
  int population = 400;
  std::array<double, 4> tier_means{30.0, 45.0, 60.0, 75.0};
  double tier_sd = 6.0;
  double position_dev_sd = 8.0;          // per-position skill spread
  double preference_concentration = 3.0;  // softmax sharpness over skill devs
  double side_advantage = std::log(50.5 / 49.5);  // Blue logit bonus
  double outcome_temperature = 12.0;
  double history_skill_scale = 8.0;  // per-game win logit scale in history
  int history_games = 30;
  double mmr_noise_sd = 3.0;
  double mmr_band = 0.10;  // pool sampling: |mmr - pivot| <= band * pivot
  double economy_base = 10000.0;
  double economy_gap_scale = 0.3;
  double economy_noise = 0.05;
  uint64_t seed = 42;

  void validate() const;
};

struct Population {
  std::vector<LatentPlayer> latents;
  std::vector<Player> players;
};

Population generate_population(const SimConfig& config);

std::map<PlayerId, LatentPlayer> latent_index(const std::vector<LatentPlayer>& latents);

// Analytic outcome oracle: sigmoid((S_blue - S_red) / temperature +
// side_advantage) with S = sum of per-slot latent skill at the assigned
// position. Throws StructuralError on a missing latent.
double true_win_prob(const Assignment& a, const std::map<PlayerId, LatentPlayer>& latents,
                     const SimConfig& config);

// Samples an outcome and winner-skewed team economies; deterministic per seed.
MatchRecord simulate_match(const Assignment& a, const std::vector<Player>& players,
                           const std::map<PlayerId, LatentPlayer>& latents,
                           const SimConfig& config, uint64_t seed);

// Labeled training corpus: repeated MMR-band pools with uniformly random
// assignments, one independent seed stream per match.
std::vector<MatchRecord> synthesize_dataset(const Population& pop, int n_matches,
                                            const SimConfig& config, uint64_t seed,
                                            int threads = 0);

// Blue-side win probability per candidate. Implementations must be pure so
// parallel scoring stays deterministic.
struct AssignmentScorer {
  virtual ~AssignmentScorer() = default;
  virtual std::vector<double> score(const std::vector<Candidate>& candidates,
                                    const std::vector<Player>& players) const = 0;
};

class ModelScorer : public AssignmentScorer {
 public:
  explicit ModelScorer(const WinRateModel& model, int threads = 0)
      : model_(&model), threads_(threads) {}
  std::vector<double> score(const std::vector<Candidate>& candidates,
                            const std::vector<Player>& players) const override;

 private:
  const WinRateModel* model_;
  int threads_;
};

// Plugs the simulator's analytic oracle in as the predictor.
class OracleScorer : public AssignmentScorer {
 public:
  OracleScorer(const std::map<PlayerId, LatentPlayer>& latents, const SimConfig& config)
      : latents_(&latents), config_(&config) {}
  std::vector<double> score(const std::vector<Candidate>& candidates,
                            const std::vector<Player>& players) const override;

 private:
  const std::map<PlayerId, LatentPlayer>* latents_;
  const SimConfig* config_;
};

enum class Policy { OneStep, TwoStep };

Policy policy_from_name(const std::string& name);  // "one-step" | "two-step"
std::string policy_name(Policy policy);

struct ExperimentConfig {
  Policy policy = Policy::TwoStep;
  int n_matches = 500;
  FilterConfig filter;
  uint64_t seed = 7;
  int threads = 0;
};

struct ExperimentReport {
  int matches = 0;
  double mr = 0.0;               // assigned position not in preselected set
  double mr_at_1 = 0.0;          // assigned position is not the first preselect
  double mean_unfairness = 0.0;  // E |p_true - 0.5|
  double crushing_rate = 0.0;    // fraction with |p_true - 0.5| > 0.25
  double er_mean = 0.0;          // mean N_act / N_full (two-step only)
  double fallback_rate = 0.0;
  double acc_mmr_sum = 0.0;  // outcome accuracy of the higher-MMR-sum rule
  double acc_model = 0.0;    // outcome accuracy of the scorer on played matches
};

// Runs the policy over repeated MMR-band pools and scores the produced
// matches against the analytic oracle. scorer may be null for one-step
// (ConfigError if null for two-step).
ExperimentReport run_experiment(const Population& pop, const ExperimentConfig& experiment,
                                const SimConfig& config, const AssignmentScorer* scorer);

}  // namespace rematch
