#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rematch/features.hpp"

namespace rematch {

using PlayerId = std::string;

struct Player {
  PlayerId id;
  double mmr = 0.0;
  SatisfactionProfile satisfaction;
  std::optional<std::string> room_id;  // same room => same team
  FeatureBundle features;
};

// A bijection of 10 players onto the 10 (team, position) slots.
// slots[slot_index(t, p)] holds the player id assigned to (t, p).
struct Assignment {
  std::array<PlayerId, kPlayersPerMatch> slots;

  const PlayerId& at(Team t, Position p) const { return slots[slot_index(t, p)]; }
  PlayerId& at(Team t, Position p) { return slots[slot_index(t, p)]; }
  bool operator==(const Assignment&) const = default;
};

struct MatchRecord {
  Assignment assignment;
  std::array<FeatureBundle, kPlayersPerMatch> features;  // slot order
  int outcome = 0;        // 1 = Blue wins
  bool labeled = true;    // false for feature-log records awaiting outcomes
  double te_blue = 0.0;
  double te_red = 0.0;
};

// Finds the player with the given id; throws StructuralError if absent.
const Player& find_player(const std::vector<Player>& players, const PlayerId& id);

// Throws StructuralError unless `a` is a bijection over `players` that
// respects room constraints.
void validate_assignment(const Assignment& a, const std::vector<Player>& players);

// P_A: product of each player's satisfaction at their assigned position.
double satisfaction_product(const Assignment& a, const std::vector<Player>& players);

// Mean and population variance of the 5 assigned MMRs on one side.
TeamFeatures compute_team_features(const Assignment& a, const std::vector<Player>& players,
                                   Team team);

// Deterministic one-hot/bucketed encoding of an assignment.
// Throws NumericError on NaN/inf feature values.
EncodedMatch encode_match(const Assignment& a, const std::vector<Player>& players,
                          const EncoderConfig& config);

// Same encoding driven directly by a stored record (features already in slot
// order; team MMR stats taken from the bundles' normal_mmr).
EncodedMatch encode_record(const MatchRecord& record, const EncoderConfig& config);

// Quantile bucket edges fitted on a record corpus, keeping the given
// structural settings.
EncoderConfig fit_encoder(const std::vector<MatchRecord>& records, int short_term_window,
                          int champion_vocab, int bins);

}  // namespace rematch
