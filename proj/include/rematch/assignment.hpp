#pragma once

#include <cstdint>
#include <vector>

#include "rematch/match.hpp"

namespace rematch {

struct FilterConfig {
  double threshold = 0.01;   // P_tau
  int fallback_top_m = 16;   // used when nothing passes the threshold
  int max_candidates = 1024; // cap applied by callers before scoring
};

// Internal assignment representation: player index (into the request's player
// vector) per canonical slot.
struct SlotAssignment {
  std::array<uint8_t, kPlayersPerMatch> player{};
  bool operator==(const SlotAssignment&) const = default;
  bool operator<(const SlotAssignment& o) const { return player < o.player; }
};

Assignment to_assignment(const SlotAssignment& s, const std::vector<Player>& players);
SlotAssignment to_slot_assignment(const Assignment& a, const std::vector<Player>& players);

struct Candidate {
  SlotAssignment slots;
  double satisfaction = 0.0;
};

struct FilterResult {
  // Sorted descending by satisfaction; ties in ascending slot order.
  std::vector<Candidate> candidates;
  long long n_act = 0;
  long long n_full = 0;
  double er = 0.0;  // n_act / n_full
  bool fallback = false;
};

// Number of room-respecting bijections onto the 10 slots.
// Throws InfeasibleError when the rooms cannot be packed into two teams.
long long count_full_assignments(const std::vector<Player>& players);

// DFS slot filling with satisfaction upper-bound pruning; the candidate set is
// identical to unpruned enumeration.
FilterResult enumerate_filtered(const std::vector<Player>& players, const FilterConfig& config);

// Argmax fairness over candidates; win_rates[i] scores candidates[i].
// Ties: higher satisfaction, then ascending slot order.
std::pair<Assignment, double> select_best(const FilterResult& result,
                                          const std::vector<double>& win_rates,
                                          const std::vector<Player>& players);

// Baseline one-step policy: greedy MMR-balancing team split under room
// constraints, then greedy by-satisfaction position matching per team.
Assignment one_step_assign(const std::vector<Player>& players, uint64_t seed = 0);

}  // namespace rematch
