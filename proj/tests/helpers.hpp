#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "rematch/assignment.hpp"
#include "rematch/predictor.hpp"

namespace rematch::testing {

inline Player make_player(std::string id, double mmr, std::array<double, kPositions> scores,
                          std::vector<Position> preselected,
                          std::optional<std::string> room = std::nullopt) {
  Player p;
  p.id = std::move(id);
  p.mmr = mmr;
  p.satisfaction.scores = scores;
  p.satisfaction.preselected = std::move(preselected);
  for (Position pos : p.satisfaction.preselected) {
    p.satisfaction.scores[static_cast<int>(pos)] = 1.0;
  }
  p.room_id = std::move(room);
  p.features.real_time.preselected_positions = p.satisfaction.preselected;
  return p;
}

// Ten players with uniform random satisfaction scores; optionally a few rooms
// of size <= 3.
inline std::vector<Player> random_instance(std::mt19937_64& rng, bool with_rooms) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Player> players;
  for (int i = 0; i < kPlayersPerMatch; ++i) {
    std::array<double, kPositions> scores{};
    for (double& s : scores) s = unit(rng);
    const Position presel = static_cast<Position>(rng() % kPositions);
    players.push_back(make_player("p" + std::to_string(i), 40.0 + 30.0 * unit(rng), scores,
                                  {presel}));
  }
  if (with_rooms) {
    int next = 0;
    int room_no = 0;
    while (next < kPlayersPerMatch) {
      const int size = 1 + int(rng() % 3);  // 1..3; size-1 groups stay singles
      if (size > 1 && next + size <= kPlayersPerMatch) {
        for (int k = 0; k < size; ++k) {
          players[next + k].room_id = "room" + std::to_string(room_no);
        }
        ++room_no;
      }
      next += size;
    }
  }
  return players;
}

// Independent exhaustive enumeration: all 10! orderings, room check, product
// threshold. The pruned search must reproduce this set exactly.
inline std::set<SlotAssignment> brute_force_filter(const std::vector<Player>& players,
                                                   double threshold) {
  std::vector<int> perm(kPlayersPerMatch);
  std::iota(perm.begin(), perm.end(), 0);
  std::set<SlotAssignment> out;
  do {
    bool ok = true;
    for (int i = 0; i < kPlayersPerMatch && ok; ++i) {
      if (!players[perm[i]].room_id) continue;
      for (int j = i + 1; j < kPlayersPerMatch && ok; ++j) {
        if (players[perm[j]].room_id == players[perm[i]].room_id &&
            (i < kTeamSize) != (j < kTeamSize)) {
          ok = false;
        }
      }
    }
    if (!ok) continue;
    double product = 1.0;
    for (int slot = 0; slot < kPlayersPerMatch; ++slot) {
      product *= players[perm[slot]].satisfaction.scores[slot % kTeamSize];
    }
    if (product >= threshold) {
      SlotAssignment s;
      for (int slot = 0; slot < kPlayersPerMatch; ++slot) {
        s.player[slot] = static_cast<uint8_t>(perm[slot]);
      }
      out.insert(s);
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

// Minimal encoder so gradient checks and forward oracles stay fast.
inline EncoderConfig tiny_encoder() {
  EncoderConfig c;
  c.short_term_window = 2;
  c.champion_vocab = 4;
  c.top_champion_slots = 2;
  c.bins = 2;
  for (const char* name : {"kills", "deaths", "assists", "win_rate", "avg_kills", "avg_deaths",
                           "position_count", "position_win_rate", "normal_mmr", "ranked_mmr",
                           "team_mmr_mean", "team_mmr_variance"}) {
    c.buckets[name] = BucketSpec{{name == std::string("normal_mmr") ||
                                          name == std::string("ranked_mmr") ||
                                          name == std::string("team_mmr_mean")
                                      ? 50.0
                                      : 2.0}};
  }
  c.validate();
  return c;
}

inline ModelConfig tiny_model_config() {
  ModelConfig mc;
  mc.toe = mc.soe = mc.poe = OmniNetConfig{2, 8, 2, 2};
  mc.head_hidden1 = 8;
  mc.head_hidden2 = 4;
  mc.encoder = tiny_encoder();
  return mc;
}

inline FeatureBundle random_bundle(std::mt19937_64& rng, int vocab = 120) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  FeatureBundle f;
  const int games = 3;
  for (int g = 0; g < games; ++g) {
    ShortTermGame game;
    game.champion_id = int(rng() % vocab);
    game.kills = int(rng() % 10);
    game.deaths = int(rng() % 10);
    game.assists = int(rng() % 15);
    game.position = static_cast<Position>(rng() % kPositions);
    game.win = rng() & 1;
    f.short_term.push_back(game);
  }
  f.long_term.win_rate = unit(rng);
  f.long_term.avg_kills = 8.0 * unit(rng);
  f.long_term.avg_deaths = 8.0 * unit(rng);
  for (int p = 0; p < kPositions; ++p) {
    f.long_term.position_counts[p] = int(rng() % 7);
    f.long_term.per_position_win_rate[p] = unit(rng);
  }
  f.long_term.top_champions = {int(rng() % vocab), int(rng() % vocab)};
  f.real_time.normal_mmr = 40.0 + 30.0 * unit(rng);
  f.real_time.ranked_mmr = 40.0 + 30.0 * unit(rng);
  f.real_time.is_promotion = rng() & 1;
  f.real_time.preselected_positions = {static_cast<Position>(rng() % kPositions)};
  return f;
}

inline MatchRecord random_record(std::mt19937_64& rng, int vocab = 120) {
  MatchRecord rec;
  for (int slot = 0; slot < kPlayersPerMatch; ++slot) {
    rec.assignment.slots[slot] = "p" + std::to_string(slot);
    rec.features[slot] = random_bundle(rng, vocab);
  }
  rec.outcome = int(rng() & 1);
  rec.te_blue = 8000.0 + double(rng() % 4000);
  rec.te_red = 8000.0 + double(rng() % 4000);
  return rec;
}

}  // namespace rematch::testing
