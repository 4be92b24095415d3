#include "rematch/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace rematch {

namespace {

constexpr long long kFactorial5 = 120;

void require_ten(const std::vector<Player>& players) {
  if (players.size() != kPlayersPerMatch) {
    throw StructuralError("operation requires exactly 10 players");
  }
}

// Rooms as index groups (size >= 2) plus count of singles.
struct RoomLayout {
  std::vector<std::vector<int>> rooms;
  std::vector<int> singles;
  std::vector<int> room_of;  // per player: room index or -1
};

RoomLayout room_layout(const std::vector<Player>& players) {
  RoomLayout layout;
  layout.room_of.assign(players.size(), -1);
  std::map<std::string, std::vector<int>> by_room;
  for (size_t i = 0; i < players.size(); ++i) {
    if (players[i].room_id) {
      by_room[*players[i].room_id].push_back(static_cast<int>(i));
    } else {
      layout.singles.push_back(static_cast<int>(i));
    }
  }
  for (auto& [id, members] : by_room) {
    if (members.size() > kTeamSize) {
      throw InfeasibleError("room larger than a team: " + id);
    }
    if (members.size() == 1) {
      layout.singles.push_back(members[0]);
    } else {
      for (int m : members) layout.room_of[m] = static_cast<int>(layout.rooms.size());
      layout.rooms.push_back(members);
    }
  }
  std::sort(layout.singles.begin(), layout.singles.end());
  return layout;
}

long long binom(int n, int k) {
  if (k < 0 || k > n) return 0;
  long long r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

Assignment to_assignment(const SlotAssignment& s, const std::vector<Player>& players) {
  Assignment a;
  for (int slot = 0; slot < kPlayersPerMatch; ++slot) a.slots[slot] = players[s.player[slot]].id;
  return a;
}

SlotAssignment to_slot_assignment(const Assignment& a, const std::vector<Player>& players) {
  SlotAssignment s;
  for (int slot = 0; slot < kPlayersPerMatch; ++slot) {
    const Player& p = find_player(players, a.slots[slot]);
    s.player[slot] = static_cast<uint8_t>(&p - players.data());
  }
  return s;
}

long long count_full_assignments(const std::vector<Player>& players) {
  require_ten(players);
  RoomLayout layout = room_layout(players);
  // Count blue rosters of 5: pick a room subset of total size t and 5-t singles.
  // ways[t] = number of room subsets with total size t.
  std::array<long long, kTeamSize + 1> ways{};
  ways[0] = 1;
  for (const auto& room : layout.rooms) {
    int s = static_cast<int>(room.size());
    for (int t = kTeamSize; t >= s; --t) ways[t] += ways[t - s];
  }
  long long splits = 0;
  for (int t = 0; t <= kTeamSize; ++t) {
    splits += ways[t] * binom(static_cast<int>(layout.singles.size()), kTeamSize - t);
  }
  if (splits == 0) throw InfeasibleError("rooms cannot be packed into two teams of five");
  return splits * kFactorial5 * kFactorial5;
}

FilterResult enumerate_filtered(const std::vector<Player>& players, const FilterConfig& config) {
  require_ten(players);
  if (!(config.threshold >= 0.0 && config.threshold <= 1.0)) {
    throw ConfigError("satisfaction threshold outside [0,1]");
  }
  FilterResult result;
  result.n_full = count_full_assignments(players);  // also validates rooms

  std::array<double, kPlayersPerMatch> max_score;
  std::array<std::array<double, kPositions>, kPlayersPerMatch> score{};
  for (int i = 0; i < kPlayersPerMatch; ++i) {
    max_score[i] = 0.0;
    for (int p = 0; p < kPositions; ++p) {
      score[i][p] = players[i].satisfaction.scores[p];
      max_score[i] = std::max(max_score[i], score[i][p]);
    }
  }
  const std::vector<int>& room_of = room_layout(players).room_of;

  // DFS state
  SlotAssignment current;
  std::array<bool, kPlayersPerMatch> used{};
  std::array<int, kPlayersPerMatch> room_team;  // per room: -1 unset, else team
  room_team.fill(-1);
  std::array<int, kPlayersPerMatch> room_count{};  // placed members per room

  const double threshold = config.threshold;
  // Tiny conservative margin: bound arithmetic may wobble by a few ulps.
  const double prune_below = threshold * (1.0 - 1e-12);

  auto dfs = [&](auto&& self, int slot, double prefix, double remaining_ub) -> void {
    if (slot == kPlayersPerMatch) {
      if (prefix >= threshold) {
        result.candidates.push_back({current, prefix});
      }
      return;
    }
    const int team = slot / kTeamSize;
    const Position pos = slot_position(slot);
    for (int i = 0; i < kPlayersPerMatch; ++i) {
      if (used[i]) continue;
      const int room = room_of[i];
      if (room >= 0 && room_team[room] >= 0 && room_team[room] != team) continue;
      const double s = score[i][static_cast<int>(pos)];
      double child_remaining;
      if (max_score[i] > 0.0) {
        child_remaining = remaining_ub / max_score[i];
      } else {
        child_remaining = 1.0;
        for (int j = 0; j < kPlayersPerMatch; ++j) {
          if (!used[j] && j != i) child_remaining *= max_score[j];
        }
      }
      const double child_prefix = prefix * s;
      if (child_prefix * child_remaining < prune_below) continue;
      used[i] = true;
      current.player[slot] = static_cast<uint8_t>(i);
      int prev_team = -1;
      if (room >= 0) {
        prev_team = room_team[room];
        room_team[room] = team;
        ++room_count[room];
      }
      self(self, slot + 1, child_prefix, child_remaining);
      if (room >= 0) {
        --room_count[room];
        if (room_count[room] == 0) room_team[room] = -1;
        else room_team[room] = prev_team;
      }
      used[i] = false;
    }
  };

  double full_ub = 1.0;
  for (double m : max_score) full_ub *= m;
  dfs(dfs, 0, 1.0, full_ub);

  result.n_act = static_cast<long long>(result.candidates.size());
  result.er = result.n_full > 0 ? static_cast<double>(result.n_act) / result.n_full : 0.0;

  if (result.candidates.empty()) {
    if (config.fallback_top_m <= 0) {
      throw EmptyResultError("no assignment meets the satisfaction threshold");
    }
    // Re-enumerate without a threshold, keeping only the top-m by satisfaction.
    FilterConfig open = config;
    open.threshold = 0.0;
    FilterResult all = enumerate_filtered(players, open);
    size_t m = std::min<size_t>(config.fallback_top_m, all.candidates.size());
    result.candidates.assign(all.candidates.begin(), all.candidates.begin() + m);
    result.fallback = true;
    return result;
  }

  std::sort(result.candidates.begin(), result.candidates.end(),
            [](const Candidate& a, const Candidate& b) {
              if (a.satisfaction != b.satisfaction) return a.satisfaction > b.satisfaction;
              return a.slots < b.slots;
            });
  return result;
}

std::pair<Assignment, double> select_best(const FilterResult& result,
                                          const std::vector<double>& win_rates,
                                          const std::vector<Player>& players) {
  if (result.candidates.empty()) throw EmptyResultError("no candidates to select from");
  if (win_rates.size() != result.candidates.size()) {
    throw StructuralError("win rate count does not match candidate count");
  }
  size_t best = 0;
  double best_fairness = -1.0;
  for (size_t i = 0; i < result.candidates.size(); ++i) {
    const double f = fairness_score(win_rates[i]);
    if (f > best_fairness) {
      best = i;
      best_fairness = f;
      continue;
    }
    if (f == best_fairness) {
      const Candidate& a = result.candidates[i];
      const Candidate& b = result.candidates[best];
      if (a.satisfaction > b.satisfaction ||
          (a.satisfaction == b.satisfaction && a.slots < b.slots)) {
        best = i;
      }
    }
  }
  return {to_assignment(result.candidates[best].slots, players), best_fairness};
}

Assignment one_step_assign(const std::vector<Player>& players, uint64_t seed) {
  require_ten(players);
  RoomLayout layout = room_layout(players);
  std::mt19937_64 rng(seed);

  // Units: rooms plus singles, placed as wholes.
  struct Unit {
    std::vector<int> members;
    double mmr_sum = 0.0;
  };
  std::vector<Unit> units;
  for (const auto& room : layout.rooms) {
    Unit u{room, 0.0};
    for (int m : room) u.mmr_sum += players[m].mmr;
    units.push_back(std::move(u));
  }
  for (int s : layout.singles) units.push_back({{s}, players[s].mmr});
  std::stable_sort(units.begin(), units.end(),
                   [](const Unit& a, const Unit& b) { return a.mmr_sum > b.mmr_sum; });

  std::array<std::vector<int>, 2> roster;
  std::array<double, 2> sum{};
  auto fits = [&](int team, const Unit& u) {
    return roster[team].size() + u.members.size() <= kTeamSize;
  };
  bool dead_end = false;
  for (const Unit& u : units) {
    int preferred;
    if (sum[0] < sum[1]) preferred = 0;
    else if (sum[1] < sum[0]) preferred = 1;
    else preferred = static_cast<int>(rng() & 1);
    int team = preferred;
    if (!fits(team, u)) team = 1 - team;
    if (!fits(team, u)) {
      dead_end = true;
      break;
    }
    roster[team].insert(roster[team].end(), u.members.begin(), u.members.end());
    sum[team] += u.mmr_sum;
  }
  if (dead_end) {
    // Exhaustive fallback over unit partitions: best MMR balance.
    int n = static_cast<int>(units.size());
    double best_diff = -1.0;
    int best_mask = -1;
    for (int mask = 0; mask < (1 << n); ++mask) {
      size_t blue_n = 0;
      double blue_sum = 0.0, total = 0.0;
      for (int i = 0; i < n; ++i) {
        total += units[i].mmr_sum;
        if (mask & (1 << i)) {
          blue_n += units[i].members.size();
          blue_sum += units[i].mmr_sum;
        }
      }
      if (blue_n != kTeamSize) continue;
      double diff = std::abs(2 * blue_sum - total);
      if (best_mask < 0 || diff < best_diff) {
        best_mask = mask;
        best_diff = diff;
      }
    }
    if (best_mask < 0) throw InfeasibleError("rooms cannot be packed into two teams of five");
    roster[0].clear();
    roster[1].clear();
    for (int i = 0; i < n; ++i) {
      int team = (best_mask & (1 << i)) ? 0 : 1;
      roster[team].insert(roster[team].end(), units[i].members.begin(), units[i].members.end());
    }
  }

  // Position stage: repeatedly take the highest-satisfaction open (player,
  // position) pair; exact ties resolved by the seeded rng.
  Assignment out;
  for (int team = 0; team < 2; ++team) {
    std::vector<int> open = roster[team];
    std::array<bool, kPositions> filled{};
    while (!open.empty()) {
      double best = -1.0;
      std::vector<std::pair<int, int>> argmax;  // (player, position)
      for (int p : open) {
        for (int pos = 0; pos < kPositions; ++pos) {
          if (filled[pos]) continue;
          double s = players[p].satisfaction.scores[pos];
          if (s > best) {
            best = s;
            argmax.clear();
          }
          if (s == best) argmax.emplace_back(p, pos);
        }
      }
      auto [p, pos] = argmax.size() == 1
                          ? argmax[0]
                          : argmax[std::uniform_int_distribution<size_t>(0, argmax.size() - 1)(rng)];
      out.slots[team * kTeamSize + pos] = players[p].id;
      filled[pos] = true;
      open.erase(std::find(open.begin(), open.end(), p));
    }
  }
  validate_assignment(out, players);
  return out;
}

}  // namespace rematch
