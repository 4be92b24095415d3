#include "rematch/simulator.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "rematch/parallel.hpp"

namespace rematch {

namespace {

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

// splitmix64; gives each match an independent, order-free generator stream.
uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

int sample_categorical(const std::array<double, kPositions>& w, std::mt19937_64& rng) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  std::uniform_real_distribution<double> u(0.0, total);
  double r = u(rng);
  for (int i = 0; i < kPositions; ++i) {
    r -= w[i];
    if (r <= 0.0) return i;
  }
  return kPositions - 1;
}

}  // namespace

void LatentPlayer::validate() const {
  double sum = 0.0;
  for (double w : preference_weights) {
    if (w < 0.0) throw DomainError("negative preference weight");
    sum += w;
  }
  if (sum <= 0.0) throw DomainError("preference weights must not all be zero");
  if (skill_tier < 0 || skill_tier > 3) throw DomainError("skill tier out of range");
}

void SimConfig::validate() const {
  if (population < kPlayersPerMatch) throw ConfigError("population smaller than one match");
  if (!(outcome_temperature > 0.0)) throw ConfigError("outcome temperature must be positive");
  if (!(tier_sd > 0.0) || !(position_dev_sd > 0.0)) throw ConfigError("skill spreads must be positive");
  if (!(mmr_band > 0.0)) throw ConfigError("mmr band must be positive");
  if (history_games < 1) throw ConfigError("need at least one historical game");
  if (!(economy_base > 0.0)) throw ConfigError("economy base must be positive");
  for (size_t i = 1; i < tier_means.size(); ++i) {
    if (tier_means[i] <= tier_means[i - 1]) throw ConfigError("tier means must increase");
  }
}

Population generate_population(const SimConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> tier_pick(0, 3);
  std::uniform_int_distribution<int> champ_pick(0, 119);

  Population pop;
  pop.latents.reserve(config.population);
  pop.players.reserve(config.population);

  for (int n = 0; n < config.population; ++n) {
    LatentPlayer lat;
    lat.id = "p" + std::to_string(n);
    lat.skill_tier = tier_pick(rng);
    const double base = config.tier_means[lat.skill_tier] + config.tier_sd * normal(rng);
    double mean_latent = 0.0;
    for (int p = 0; p < kPositions; ++p) {
      lat.latent_skill[p] = base + config.position_dev_sd * normal(rng);
      mean_latent += lat.latent_skill[p] / kPositions;
    }
    // Players prefer where they are strong: softmax over skill deviations.
    double max_logit = -1e300;
    std::array<double, kPositions> logits{};
    for (int p = 0; p < kPositions; ++p) {
      logits[p] = config.preference_concentration *
                  (lat.latent_skill[p] - mean_latent) / config.position_dev_sd;
      max_logit = std::max(max_logit, logits[p]);
    }
    for (int p = 0; p < kPositions; ++p) {
      lat.preference_weights[p] = std::exp(logits[p] - max_logit);
    }
    lat.validate();

    Player pl;
    pl.id = lat.id;
    pl.mmr = mean_latent + config.mmr_noise_sd * normal(rng);

    // Small per-player champion pool, heavily skewed to a main pick.
    std::array<int, 3> pool{};
    for (int& c : pool) c = champ_pick(rng);
    const std::array<double, 3> pool_w{0.6, 0.3, 0.1};
    std::array<int, 3> pool_count{};

    // Historical games, oldest first; the short-term window takes the tail.
    std::vector<ShortTermGame> history;
    history.reserve(config.history_games);
    std::array<int, kPositions> pos_count{};
    std::array<int, kPositions> pos_wins{};
    double kills_sum = 0.0, deaths_sum = 0.0;
    int wins = 0;
    for (int g = 0; g < config.history_games; ++g) {
      ShortTermGame game;
      const int pos = sample_categorical(lat.preference_weights, rng);
      game.position = static_cast<Position>(pos);
      const double p_win = sigmoid((lat.latent_skill[pos] - config.tier_means[lat.skill_tier]) /
                                   config.history_skill_scale);
      game.win = unit(rng) < p_win;
      game.kills = std::poisson_distribution<int>(2.0 + 6.0 * p_win)(rng);
      game.deaths = std::poisson_distribution<int>(2.0 + 6.0 * (1.0 - p_win))(rng);
      game.assists = std::poisson_distribution<int>(3.0 + 4.0 * p_win)(rng);
      double cr = unit(rng);
      int ci = cr < pool_w[0] ? 0 : (cr < pool_w[0] + pool_w[1] ? 1 : 2);
      game.champion_id = pool[ci];
      ++pool_count[ci];
      ++pos_count[pos];
      if (game.win) {
        ++pos_wins[pos];
        ++wins;
      }
      kills_sum += game.kills;
      deaths_sum += game.deaths;
      history.push_back(game);
    }

    LongTermStats& lt = pl.features.long_term;
    lt.win_rate = double(wins) / config.history_games;
    lt.avg_kills = kills_sum / config.history_games;
    lt.avg_deaths = deaths_sum / config.history_games;
    for (int p = 0; p < kPositions; ++p) {
      lt.position_counts[p] = pos_count[p];
      lt.per_position_win_rate[p] = pos_count[p] ? double(pos_wins[p]) / pos_count[p] : 0.0;
    }
    std::array<int, 3> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return pool_count[a] != pool_count[b] ? pool_count[a] > pool_count[b] : pool[a] < pool[b];
    });
    for (int i : order) {
      if (pool_count[i] > 0) lt.top_champions.push_back(pool[i]);
    }

    // Most recent first.
    std::reverse(history.begin(), history.end());
    pl.features.short_term = std::move(history);

    RealTimeFeatures& rt = pl.features.real_time;
    rt.normal_mmr = pl.mmr;
    rt.ranked_mmr = pl.mmr + 2.0 * normal(rng);
    rt.is_promotion = unit(rng) < 0.1;
    const int primary = sample_categorical(lat.preference_weights, rng);
    rt.preselected_positions.push_back(static_cast<Position>(primary));
    if (unit(rng) < 0.5) {
      for (int tries = 0; tries < 8; ++tries) {
        const int second = sample_categorical(lat.preference_weights, rng);
        if (second != primary) {
          rt.preselected_positions.push_back(static_cast<Position>(second));
          break;
        }
      }
    }

    pl.satisfaction = derive_satisfaction(lt, rt);
    pop.latents.push_back(std::move(lat));
    pop.players.push_back(std::move(pl));
  }
  return pop;
}

std::map<PlayerId, LatentPlayer> latent_index(const std::vector<LatentPlayer>& latents) {
  std::map<PlayerId, LatentPlayer> idx;
  for (const auto& l : latents) idx[l.id] = l;
  return idx;
}

namespace {

double team_strength(const Assignment& a, const std::map<PlayerId, LatentPlayer>& latents,
                     Team team) {
  double s = 0.0;
  for (Position p : all_positions()) {
    auto it = latents.find(a.at(team, p));
    if (it == latents.end()) throw StructuralError("missing latent for player " + a.at(team, p));
    s += it->second.latent_skill[static_cast<int>(p)];
  }
  return s;
}

}  // namespace

double true_win_prob(const Assignment& a, const std::map<PlayerId, LatentPlayer>& latents,
                     const SimConfig& config) {
  const double sb = team_strength(a, latents, Team::Blue);
  const double sr = team_strength(a, latents, Team::Red);
  return sigmoid((sb - sr) / config.outcome_temperature + config.side_advantage);
}

MatchRecord simulate_match(const Assignment& a, const std::vector<Player>& players,
                           const std::map<PlayerId, LatentPlayer>& latents,
                           const SimConfig& config, uint64_t seed) {
  validate_assignment(a, players);
  const double p = true_win_prob(a, latents, config);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  MatchRecord rec;
  rec.assignment = a;
  for (int slot = 0; slot < kPlayersPerMatch; ++slot) {
    rec.features[slot] = find_player(players, a.slots[slot]).features;
  }
  rec.outcome = unit(rng) < p ? 1 : 0;
  rec.labeled = true;

  // Winner's economy exceeds the loser's in expectation; the gap widens with
  // how lopsided the matchup truly was.
  const double edge = 2.0 * std::abs(p - 0.5);
  const double margin = (rec.outcome == 1 ? 1.0 : -1.0) * (0.25 + 0.75 * edge);
  const double half_gap = config.economy_gap_scale * margin / 2.0;
  rec.te_blue = config.economy_base * std::max(0.05, 1.0 + half_gap + config.economy_noise * normal(rng));
  rec.te_red = config.economy_base * std::max(0.05, 1.0 - half_gap + config.economy_noise * normal(rng));
  return rec;
}

namespace {

// Picks 10 players with MMRs inside a band around a random pivot. Widens the
// band when the draw region is too thin.
std::vector<Player> sample_pool(const std::vector<Player>& players, double band,
                                std::mt19937_64& rng) {
  std::uniform_int_distribution<size_t> pick(0, players.size() - 1);
  double b = band;
  for (int attempt = 0; attempt < 200; ++attempt) {
    const Player& pivot = players[pick(rng)];
    const double tol = b * std::abs(pivot.mmr);
    std::vector<size_t> in_band;
    for (size_t i = 0; i < players.size(); ++i) {
      if (std::abs(players[i].mmr - pivot.mmr) <= tol) in_band.push_back(i);
    }
    if (in_band.size() < kPlayersPerMatch) {
      if (attempt % 20 == 19) b *= 1.5;
      continue;
    }
    std::shuffle(in_band.begin(), in_band.end(), rng);
    std::vector<Player> pool;
    for (int k = 0; k < kPlayersPerMatch; ++k) pool.push_back(players[in_band[k]]);
    return pool;
  }
  throw InfeasibleError("could not draw an MMR-banded pool from this population");
}

Assignment random_assignment(const std::vector<Player>& pool, std::mt19937_64& rng) {
  std::array<int, kPlayersPerMatch> perm{};
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Assignment a;
  for (int slot = 0; slot < kPlayersPerMatch; ++slot) a.slots[slot] = pool[perm[slot]].id;
  return a;
}

}  // namespace

std::vector<MatchRecord> synthesize_dataset(const Population& pop, int n_matches,
                                            const SimConfig& config, uint64_t seed,
                                            int threads) {
  config.validate();
  const auto latents = latent_index(pop.latents);
  std::vector<MatchRecord> out(n_matches);
  const int workers = threads > 0 ? threads : default_workers();
  parallel_chunks(n_matches, workers, [&](size_t, size_t begin, size_t end) {
    for (size_t m = begin; m < end; ++m) {
      std::mt19937_64 rng(mix_seed(seed, m));
      const std::vector<Player> pool = sample_pool(pop.players, config.mmr_band, rng);
      const Assignment a = random_assignment(pool, rng);
      out[m] = simulate_match(a, pool, latents, config, mix_seed(seed, m) ^ 0x5bf0);
    }
  });
  return out;
}

std::vector<double> ModelScorer::score(const std::vector<Candidate>& candidates,
                                       const std::vector<Player>& players) const {
  std::vector<double> out(candidates.size());
  const int workers = threads_ > 0 ? threads_ : default_workers();
  parallel_chunks(candidates.size(), workers, [&](size_t, size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) {
      const Assignment a = to_assignment(candidates[i].slots, players);
      out[i] = model_->predict(encode_match(a, players, model_->config.encoder));
    }
  });
  return out;
}

std::vector<double> OracleScorer::score(const std::vector<Candidate>& candidates,
                                       const std::vector<Player>& players) const {
  std::vector<double> out(candidates.size());
  for (size_t i = 0; i < candidates.size(); ++i) {
    out[i] = true_win_prob(to_assignment(candidates[i].slots, players), *latents_, *config_);
  }
  return out;
}

Policy policy_from_name(const std::string& name) {
  if (name == "one-step") return Policy::OneStep;
  if (name == "two-step") return Policy::TwoStep;
  throw ConfigError("unknown policy: " + name);
}

std::string policy_name(Policy policy) {
  return policy == Policy::OneStep ? "one-step" : "two-step";
}

namespace {

struct MatchOutcome {
  int misassigned = 0;      // players outside their preselected set
  int missed_first = 0;     // players not on their first preselect
  double unfairness = 0.0;  // |p_true - 0.5|
  bool crushing = false;
  double er = 0.0;
  bool fallback = false;
  bool mmr_sum_correct = false;
  bool model_correct = false;
  bool model_scored = false;
};

}  // namespace

ExperimentReport run_experiment(const Population& pop, const ExperimentConfig& experiment,
                                const SimConfig& config, const AssignmentScorer* scorer) {
  config.validate();
  if (experiment.n_matches < 1) throw ConfigError("need at least one experiment match");
  if (experiment.policy == Policy::TwoStep && scorer == nullptr) {
    throw ConfigError("two-step policy needs a predictor");
  }
  const auto latents = latent_index(pop.latents);
  const int workers = experiment.threads > 0 ? experiment.threads : default_workers();

  std::vector<MatchOutcome> results(experiment.n_matches);
  parallel_chunks(experiment.n_matches, workers, [&](size_t, size_t begin, size_t end) {
    for (size_t m = begin; m < end; ++m) {
      std::mt19937_64 rng(mix_seed(experiment.seed, m));
      const std::vector<Player> pool = sample_pool(pop.players, config.mmr_band, rng);
      MatchOutcome& r = results[m];

      Assignment chosen;
      double model_p = 0.5;
      if (experiment.policy == Policy::OneStep) {
        chosen = one_step_assign(pool, mix_seed(experiment.seed, m) ^ 0xa11);
        if (scorer != nullptr) {
          Candidate c{to_slot_assignment(chosen, pool), satisfaction_product(chosen, pool)};
          model_p = scorer->score({c}, pool).at(0);
          r.model_scored = true;
        }
      } else {
        FilterResult fr = enumerate_filtered(pool, experiment.filter);
        if (experiment.filter.max_candidates > 0 &&
            fr.candidates.size() > static_cast<size_t>(experiment.filter.max_candidates)) {
          fr.candidates.resize(experiment.filter.max_candidates);
        }
        const std::vector<double> scores = scorer->score(fr.candidates, pool);
        auto [best, fairness] = select_best(fr, scores, pool);
        chosen = best;
        for (size_t i = 0; i < fr.candidates.size(); ++i) {
          if (to_assignment(fr.candidates[i].slots, pool) == chosen) {
            model_p = scores[i];
            break;
          }
        }
        r.model_scored = true;
        r.er = fr.er;
        r.fallback = fr.fallback;
      }

      for (int slot = 0; slot < kPlayersPerMatch; ++slot) {
        const Player& pl = find_player(pool, chosen.slots[slot]);
        const Position pos = slot_position(slot);
        const auto& presel = pl.features.real_time.preselected_positions;
        if (std::find(presel.begin(), presel.end(), pos) == presel.end()) ++r.misassigned;
        if (pos != presel.front()) ++r.missed_first;
      }

      const double p_true = true_win_prob(chosen, latents, config);
      r.unfairness = std::abs(p_true - 0.5);
      r.crushing = r.unfairness > 0.25;

      const MatchRecord rec =
          simulate_match(chosen, pool, latents, config, mix_seed(experiment.seed, m) ^ 0xec0);
      double blue_mmr = 0.0, red_mmr = 0.0;
      for (Position p : all_positions()) {
        blue_mmr += find_player(pool, chosen.at(Team::Blue, p)).mmr;
        red_mmr += find_player(pool, chosen.at(Team::Red, p)).mmr;
      }
      r.mmr_sum_correct = (blue_mmr >= red_mmr ? 1 : 0) == rec.outcome;
      r.model_correct = (model_p > 0.5 ? 1 : 0) == rec.outcome;
    }
  });

  ExperimentReport rep;
  rep.matches = experiment.n_matches;
  int scored = 0, scored_correct = 0;
  for (const MatchOutcome& r : results) {
    rep.mr += r.misassigned;
    rep.mr_at_1 += r.missed_first;
    rep.mean_unfairness += r.unfairness;
    rep.crushing_rate += r.crushing ? 1.0 : 0.0;
    rep.er_mean += r.er;
    rep.fallback_rate += r.fallback ? 1.0 : 0.0;
    rep.acc_mmr_sum += r.mmr_sum_correct ? 1.0 : 0.0;
    if (r.model_scored) {
      ++scored;
      scored_correct += r.model_correct ? 1 : 0;
    }
  }
  const double n = experiment.n_matches;
  rep.mr /= n * kPlayersPerMatch;
  rep.mr_at_1 /= n * kPlayersPerMatch;
  rep.mean_unfairness /= n;
  rep.crushing_rate /= n;
  rep.er_mean /= n;
  rep.fallback_rate /= n;
  rep.acc_mmr_sum /= n;
  rep.acc_model = scored ? double(scored_correct) / scored : 0.0;
  return rep;
}

}  // namespace rematch
