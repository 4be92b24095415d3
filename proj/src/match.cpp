#include "rematch/match.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace rematch {

const Player& find_player(const std::vector<Player>& players, const PlayerId& id) {
  for (const Player& p : players) {
    if (p.id == id) return p;
  }
  throw StructuralError("unknown player id in assignment: " + id);
}

void validate_assignment(const Assignment& a, const std::vector<Player>& players) {
  if (players.size() != kPlayersPerMatch) {
    throw StructuralError("assignment requires exactly 10 players");
  }
  std::set<PlayerId> seen;
  for (const PlayerId& id : a.slots) {
    find_player(players, id);
    if (!seen.insert(id).second) {
      throw StructuralError("player appears in more than one slot: " + id);
    }
  }
  // Room constraint: equal room ids imply equal teams.
  std::map<std::string, Team> room_team;
  for (int slot = 0; slot < kPlayersPerMatch; ++slot) {
    const Player& p = find_player(players, a.slots[slot]);
    if (!p.room_id) continue;
    auto [it, inserted] = room_team.emplace(*p.room_id, slot_team(slot));
    if (!inserted && it->second != slot_team(slot)) {
      throw StructuralError("room split across teams: " + *p.room_id);
    }
  }
}

double satisfaction_product(const Assignment& a, const std::vector<Player>& players) {
  double product = 1.0;
  for (int slot = 0; slot < kPlayersPerMatch; ++slot) {
    const Player& p = find_player(players, a.slots[slot]);
    product *= p.satisfaction.score(slot_position(slot));
  }
  return product;
}

TeamFeatures compute_team_features(const Assignment& a, const std::vector<Player>& players,
                                   Team team) {
  double sum = 0.0, sq = 0.0;
  for (Position pos : all_positions()) {
    const Player& p = find_player(players, a.at(team, pos));
    sum += p.mmr;
    sq += p.mmr * p.mmr;
  }
  TeamFeatures f;
  f.mmr_mean = sum / kTeamSize;
  f.mmr_variance = std::max(0.0, sq / kTeamSize - f.mmr_mean * f.mmr_mean);
  return f;
}

namespace {

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite feature value: ") + what);
}

void one_hot(std::vector<double>& out, size_t offset, int index) { out[offset + index] = 1.0; }

int champion_index(int id, const EncoderConfig& c) {
  return (id >= 0 && id < c.champion_vocab) ? id : c.champion_vocab;
}

std::vector<double> encode_step(const ShortTermGame& g, const EncoderConfig& c) {
  std::vector<double> v(c.step_dim(), 0.0);
  size_t off = 0;
  one_hot(v, off, champion_index(g.champion_id, c));
  off += c.champion_dim();
  one_hot(v, off, c.bucket_for("kills").bucket(g.kills));
  off += c.bins;
  one_hot(v, off, c.bucket_for("deaths").bucket(g.deaths));
  off += c.bins;
  one_hot(v, off, c.bucket_for("assists").bucket(g.assists));
  off += c.bins;
  one_hot(v, off, static_cast<int>(g.position));
  off += kPositions;
  one_hot(v, off, g.win ? 1 : 0);
  off += 2;
  // trailing padding flag stays 0 for real games
  return v;
}

std::vector<double> padding_step(const EncoderConfig& c) {
  std::vector<double> v(c.step_dim(), 0.0);
  v.back() = 1.0;
  return v;
}

std::vector<double> encode_spatial(const FeatureBundle& b, const TeamFeatures& team,
                                   const EncoderConfig& c) {
  const LongTermStats& lt = b.long_term;
  const RealTimeFeatures& rt = b.real_time;
  check_finite(lt.win_rate, "win_rate");
  check_finite(lt.avg_kills, "avg_kills");
  check_finite(lt.avg_deaths, "avg_deaths");
  check_finite(rt.normal_mmr, "normal_mmr");
  check_finite(rt.ranked_mmr, "ranked_mmr");
  check_finite(team.mmr_mean, "team_mmr_mean");
  check_finite(team.mmr_variance, "team_mmr_variance");

  std::vector<double> v(c.spatial_dim(), 0.0);
  size_t off = 0;
  one_hot(v, off, c.bucket_for("win_rate").bucket(lt.win_rate));
  off += c.bins;
  one_hot(v, off, c.bucket_for("avg_kills").bucket(lt.avg_kills));
  off += c.bins;
  one_hot(v, off, c.bucket_for("avg_deaths").bucket(lt.avg_deaths));
  off += c.bins;
  for (int i = 0; i < kPositions; ++i) {
    one_hot(v, off, c.bucket_for("position_count").bucket(lt.position_counts[i]));
    off += c.bins;
    one_hot(v, off, c.bucket_for("position_win_rate").bucket(lt.per_position_win_rate[i]));
    off += c.bins;
  }
  for (int i = 0; i < c.top_champion_slots; ++i) {
    if (i < static_cast<int>(lt.top_champions.size())) {
      one_hot(v, off, champion_index(lt.top_champions[i], c));
    }
    off += c.champion_dim();
  }
  one_hot(v, off, c.bucket_for("normal_mmr").bucket(rt.normal_mmr));
  off += c.bins;
  one_hot(v, off, c.bucket_for("ranked_mmr").bucket(rt.ranked_mmr));
  off += c.bins;
  one_hot(v, off, rt.is_promotion ? 1 : 0);
  off += 2;
  for (Position p : rt.preselected_positions) v[off + static_cast<int>(p)] = 1.0;
  off += kPositions;
  one_hot(v, off, c.bucket_for("team_mmr_mean").bucket(team.mmr_mean));
  off += c.bins;
  one_hot(v, off, c.bucket_for("team_mmr_variance").bucket(team.mmr_variance));
  return v;
}

EncodedMatch encode_slots(const std::array<const FeatureBundle*, kPlayersPerMatch>& bundles,
                          const std::array<TeamFeatures, 2>& team, const EncoderConfig& c) {
  EncodedMatch enc;
  enc.team = team;
  enc.steps.resize(kPlayersPerMatch);
  enc.spatial.resize(kPlayersPerMatch);
  for (int slot = 0; slot < kPlayersPerMatch; ++slot) {
    const FeatureBundle& b = *bundles[slot];
    enc.steps[slot].reserve(c.short_term_window);
    for (int k = 0; k < c.short_term_window; ++k) {
      if (k < static_cast<int>(b.short_term.size())) {
        enc.steps[slot].push_back(encode_step(b.short_term[k], c));
      } else {
        enc.steps[slot].push_back(padding_step(c));
      }
    }
    enc.spatial[slot] = encode_spatial(b, enc.team[slot / kTeamSize], c);
  }
  return enc;
}

}  // namespace

EncodedMatch encode_match(const Assignment& a, const std::vector<Player>& players,
                          const EncoderConfig& config) {
  validate_assignment(a, players);
  std::array<const FeatureBundle*, kPlayersPerMatch> bundles;
  for (int slot = 0; slot < kPlayersPerMatch; ++slot) {
    bundles[slot] = &find_player(players, a.slots[slot]).features;
  }
  std::array<TeamFeatures, 2> team = {compute_team_features(a, players, Team::Blue),
                                      compute_team_features(a, players, Team::Red)};
  return encode_slots(bundles, team, config);
}

EncodedMatch encode_record(const MatchRecord& record, const EncoderConfig& config) {
  std::array<const FeatureBundle*, kPlayersPerMatch> bundles;
  std::array<TeamFeatures, 2> team{};
  for (int side = 0; side < 2; ++side) {
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < kTeamSize; ++i) {
      double mmr = record.features[side * kTeamSize + i].real_time.normal_mmr;
      sum += mmr;
      sq += mmr * mmr;
    }
    team[side].mmr_mean = sum / kTeamSize;
    team[side].mmr_variance = std::max(0.0, sq / kTeamSize - team[side].mmr_mean * team[side].mmr_mean);
  }
  for (int slot = 0; slot < kPlayersPerMatch; ++slot) bundles[slot] = &record.features[slot];
  return encode_slots(bundles, team, config);
}

EncoderConfig fit_encoder(const std::vector<MatchRecord>& records, int short_term_window,
                          int champion_vocab, int bins) {
  if (records.empty()) throw ConfigError("encoder fitting needs a non-empty corpus");
  EncoderConfig c;
  c.short_term_window = short_term_window;
  c.champion_vocab = champion_vocab;
  c.bins = bins;

  std::map<std::string, std::vector<double>> samples;
  for (const MatchRecord& r : records) {
    std::array<double, 2> mean{}, var{};
    for (int side = 0; side < 2; ++side) {
      double sum = 0.0, sq = 0.0;
      for (int i = 0; i < kTeamSize; ++i) {
        double mmr = r.features[side * kTeamSize + i].real_time.normal_mmr;
        sum += mmr;
        sq += mmr * mmr;
      }
      mean[side] = sum / kTeamSize;
      var[side] = std::max(0.0, sq / kTeamSize - mean[side] * mean[side]);
      samples["team_mmr_mean"].push_back(mean[side]);
      samples["team_mmr_variance"].push_back(var[side]);
    }
    for (const FeatureBundle& b : r.features) {
      for (const ShortTermGame& g : b.short_term) {
        samples["kills"].push_back(g.kills);
        samples["deaths"].push_back(g.deaths);
        samples["assists"].push_back(g.assists);
      }
      samples["win_rate"].push_back(b.long_term.win_rate);
      samples["avg_kills"].push_back(b.long_term.avg_kills);
      samples["avg_deaths"].push_back(b.long_term.avg_deaths);
      for (int i = 0; i < kPositions; ++i) {
        samples["position_count"].push_back(b.long_term.position_counts[i]);
        samples["position_win_rate"].push_back(b.long_term.per_position_win_rate[i]);
      }
      samples["normal_mmr"].push_back(b.real_time.normal_mmr);
      samples["ranked_mmr"].push_back(b.real_time.ranked_mmr);
    }
  }
  for (auto& [name, values] : samples) c.buckets[name] = fit_bucket(std::move(values), bins);
  c.validate();
  return c;
}

}  // namespace rematch
