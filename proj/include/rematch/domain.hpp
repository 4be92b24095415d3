#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rematch/error.hpp"

namespace rematch {

// Canonical position order; the index is used for slot layout everywhere
// (model input, wire format, logs).
enum class Position : uint8_t { Top = 0, Jungle = 1, Mid = 2, Bottom = 3, Support = 4 };

inline constexpr int kPositions = 5;
inline constexpr int kPlayersPerMatch = 10;
inline constexpr int kTeamSize = 5;

inline constexpr std::array<Position, kPositions> all_positions() {
  return {Position::Top, Position::Jungle, Position::Mid, Position::Bottom, Position::Support};
}

enum class Team : uint8_t { Blue = 0, Red = 1 };

// Blue and Red are not interchangeable; side asymmetry is meaningful.
inline Team other_team(Team t) { return t == Team::Blue ? Team::Red : Team::Blue; }

// Canonical slot index: Blue Top..Support, then Red Top..Support.
inline int slot_index(Team t, Position p) {
  return static_cast<int>(t) * kTeamSize + static_cast<int>(p);
}
inline Team slot_team(int slot) { return static_cast<Team>(slot / kTeamSize); }
inline Position slot_position(int slot) { return static_cast<Position>(slot % kTeamSize); }

const std::string& position_name(Position p);
Position position_from_name(const std::string& name);
const std::string& team_name(Team t);
Team team_from_name(const std::string& name);

// Per-position contentment scores in [0,1]; preselected positions score 1.0.
struct SatisfactionProfile {
  std::array<double, kPositions> scores{};
  std::vector<Position> preselected;  // non-empty, ordered by preference

  double score(Position p) const { return scores[static_cast<int>(p)]; }
  bool is_preselected(Position p) const;
  void validate() const;  // throws DomainError on violated invariants
};

// Scalar scoring helpers ----------------------------------------------------

// s = 1 - 2|y_hat - 0.5|; 1 at a coin flip, 0 at a certain outcome.
double fairness_score(double win_rate);

// alpha = (te_blue - te_red) / max(te_blue, te_red); positive iff Blue leads.
double economy_alpha(double te_blue, double te_red);

}  // namespace rematch
