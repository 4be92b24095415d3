#pragma once

#include <map>
#include <string>
#include <vector>

#include "rematch/domain.hpp"

namespace rematch {

// One historical game in the short-term window.
struct ShortTermGame {
  int champion_id = 0;
  int kills = 0;
  int deaths = 0;
  int assists = 0;
  Position position = Position::Top;
  bool win = false;
};

// Aggregates over the last 30 games.
struct LongTermStats {
  double win_rate = 0.0;
  double avg_kills = 0.0;
  double avg_deaths = 0.0;
  std::array<int, kPositions> position_counts{};          // sums to <= 30
  std::array<double, kPositions> per_position_win_rate{};
  std::vector<int> top_champions;  // most-played first

  int total_games() const;
  void validate() const;
};

struct RealTimeFeatures {
  double normal_mmr = 0.0;
  double ranked_mmr = 0.0;
  bool is_promotion = false;
  std::vector<Position> preselected_positions;  // non-empty, no duplicates
};

struct FeatureBundle {
  std::vector<ShortTermGame> short_term;  // most recent first; padded to K at encode time
  LongTermStats long_term;
  RealTimeFeatures real_time;
};

// Recomputed per candidate assignment, never cached across assignments.
struct TeamFeatures {
  double mmr_mean = 0.0;
  double mmr_variance = 0.0;  // population variance over the 5 members
};

// Quantile-bucket edges for one numeric feature: B bins need B-1 inner edges.
// Values below the first edge land in bucket 0, above the last in bucket B-1.
struct BucketSpec {
  std::vector<double> edges;
  int bins() const { return static_cast<int>(edges.size()) + 1; }
  int bucket(double v) const;
};

// Immutable after load; edges are stored explicitly so encodings are
// bit-reproducible across machines.
struct EncoderConfig {
  int short_term_window = 5;  // K
  int champion_vocab = 120;   // ids in [0, vocab); everything else -> OOV bucket
  int top_champion_slots = 3;
  int bins = 10;              // B
  std::map<std::string, BucketSpec> buckets;

  int champion_dim() const { return champion_vocab + 1; }  // +1 OOV
  int step_dim() const;
  int spatial_dim() const;
  int flat_dim() const;  // full per-match flattened dimension (LR input)

  const BucketSpec& bucket_for(const std::string& name) const;
  void validate() const;

  // Fixed default edges (no corpus required); numeric ranges match the
  // simulator's defaults.
  static EncoderConfig defaults();
};

// Builds quantile edges for one feature from a value sample.
BucketSpec fit_bucket(std::vector<double> values, int bins);

// Per-slot encoded vectors in canonical slot order.
struct EncodedMatch {
  // steps[slot][k] is the k-th short-term step vector (step_dim wide).
  std::vector<std::vector<std::vector<double>>> steps;
  // spatial[slot] is the flat spatial vector (spatial_dim wide), including the
  // owning team's TeamFeatures.
  std::vector<std::vector<double>> spatial;
  std::array<TeamFeatures, 2> team{};

  std::vector<double> flatten() const;  // canonical concatenation
};

// Satisfaction derivation: preselected positions score 1.0; position i scores
// (count_i + lambda) / (G + 5*lambda) with G = total games, clipped to [0,1].
SatisfactionProfile derive_satisfaction(const LongTermStats& long_term,
                                        const RealTimeFeatures& real_time,
                                        double lambda = 1.0);

}  // namespace rematch
