#include "rematch/features.hpp"

#include <algorithm>
#include <cmath>

namespace rematch {

int LongTermStats::total_games() const {
  int g = 0;
  for (int c : position_counts) g += c;
  return g;
}

void LongTermStats::validate() const {
  if (total_games() > 30) throw DomainError("long-term position counts exceed 30 games");
  if (!(win_rate >= 0.0 && win_rate <= 1.0)) throw DomainError("win_rate outside [0,1]");
  for (double w : per_position_win_rate) {
    if (!(w >= 0.0 && w <= 1.0)) throw DomainError("per-position win rate outside [0,1]");
  }
  if (avg_kills < 0.0 || avg_deaths < 0.0) throw DomainError("negative kill/death average");
}

int BucketSpec::bucket(double v) const {
  if (!std::isfinite(v)) throw NumericError("non-finite value in bucketed feature");
  auto it = std::upper_bound(edges.begin(), edges.end(), v);
  return static_cast<int>(it - edges.begin());
}

BucketSpec fit_bucket(std::vector<double> values, int bins) {
  if (bins < 2) throw ConfigError("bucket fitting needs at least 2 bins");
  if (values.empty()) throw ConfigError("bucket fitting needs a non-empty sample");
  std::sort(values.begin(), values.end());
  BucketSpec spec;
  spec.edges.reserve(bins - 1);
  const size_t n = values.size();
  for (int i = 1; i < bins; ++i) {
    size_t idx = std::min(n - 1, static_cast<size_t>(std::llround(double(i) * n / bins)));
    spec.edges.push_back(values[idx]);
  }
  return spec;
}

int EncoderConfig::step_dim() const { return champion_dim() + 3 * bins + kPositions + 2 + 1; }

int EncoderConfig::spatial_dim() const {
  // win_rate, avg_kills, avg_deaths + per-position (count, win rate)
  // + top champions + normal/ranked MMR + promotion + preselect + team stats
  return 3 * bins + kPositions * 2 * bins + top_champion_slots * champion_dim() + 2 * bins + 2 +
         kPositions + 2 * bins;
}

int EncoderConfig::flat_dim() const {
  return kPlayersPerMatch * (short_term_window * step_dim() + spatial_dim());
}

const BucketSpec& EncoderConfig::bucket_for(const std::string& name) const {
  auto it = buckets.find(name);
  if (it == buckets.end()) throw ConfigError("encoder config is missing bucket edges for " + name);
  return it->second;
}

void EncoderConfig::validate() const {
  if (short_term_window < 1) throw ConfigError("short-term window must be >= 1");
  if (champion_vocab < 1) throw ConfigError("champion vocabulary must be >= 1");
  if (bins < 2) throw ConfigError("bucket count must be >= 2");
  static const char* kNumeric[] = {"kills",          "deaths",        "assists",
                                   "win_rate",       "avg_kills",     "avg_deaths",
                                   "position_count", "position_win_rate",
                                   "normal_mmr",     "ranked_mmr",
                                   "team_mmr_mean",  "team_mmr_variance"};
  for (const char* name : kNumeric) {
    const BucketSpec& b = bucket_for(name);
    if (b.bins() != bins) throw ConfigError(std::string("bucket edge count mismatch for ") + name);
    if (!std::is_sorted(b.edges.begin(), b.edges.end())) {
      throw ConfigError(std::string("bucket edges not sorted for ") + name);
    }
  }
}

namespace {
std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = lo + (hi - lo) * i / (n - 1);
  return v;
}
}  // namespace

EncoderConfig EncoderConfig::defaults() {
  EncoderConfig c;
  c.buckets["kills"] = {{0.5, 1.5, 2.5, 3.5, 4.5, 5.5, 6.5, 8.5, 11.5}};
  c.buckets["deaths"] = {{0.5, 1.5, 2.5, 3.5, 4.5, 5.5, 6.5, 8.5, 11.5}};
  c.buckets["assists"] = {{0.5, 1.5, 2.5, 3.5, 5.5, 7.5, 9.5, 12.5, 16.5}};
  c.buckets["win_rate"] = {linspace(0.1, 0.9, 9)};
  c.buckets["avg_kills"] = {linspace(1.0, 9.0, 9)};
  c.buckets["avg_deaths"] = {linspace(1.0, 9.0, 9)};
  c.buckets["position_count"] = {{0.5, 1.5, 2.5, 3.5, 5.5, 7.5, 10.5, 15.5, 20.5}};
  c.buckets["position_win_rate"] = {linspace(0.1, 0.9, 9)};
  c.buckets["normal_mmr"] = {linspace(25.0, 85.0, 9)};
  c.buckets["ranked_mmr"] = {linspace(25.0, 85.0, 9)};
  c.buckets["team_mmr_mean"] = {linspace(25.0, 85.0, 9)};
  c.buckets["team_mmr_variance"] = {{0.5, 1.5, 3.0, 5.0, 8.0, 12.0, 18.0, 27.0, 40.0}};
  c.validate();
  return c;
}

std::vector<double> EncodedMatch::flatten() const {
  std::vector<double> out;
  size_t total = 0;
  for (const auto& slot : steps)
    for (const auto& s : slot) total += s.size();
  for (const auto& s : spatial) total += s.size();
  out.reserve(total);
  for (int slot = 0; slot < kPlayersPerMatch; ++slot) {
    for (const auto& s : steps[slot]) out.insert(out.end(), s.begin(), s.end());
    out.insert(out.end(), spatial[slot].begin(), spatial[slot].end());
  }
  return out;
}

SatisfactionProfile derive_satisfaction(const LongTermStats& long_term,
                                        const RealTimeFeatures& real_time, double lambda) {
  if (real_time.preselected_positions.empty()) {
    throw DomainError("player has no preselected position");
  }
  SatisfactionProfile profile;
  profile.preselected = real_time.preselected_positions;
  const double games = long_term.total_games();
  const double denom = games + kPositions * lambda;
  for (Position p : all_positions()) {
    int i = static_cast<int>(p);
    double s = 0.0;
    if (denom > 0.0) s = (long_term.position_counts[i] + lambda) / denom;
    profile.scores[i] = std::clamp(s, 0.0, 1.0);
  }
  for (Position p : profile.preselected) profile.scores[static_cast<int>(p)] = 1.0;
  return profile;
}

}  // namespace rematch
