#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "helpers.hpp"
#include "rematch/match.hpp"

using namespace rematch;
using namespace rematch::testing;

TEST_CASE("satisfaction derivation from history") {
  LongTermStats lt;
  RealTimeFeatures rt;

  SUBCASE("all-Mid history with Mid preselected") {
    lt.position_counts = {0, 0, 30, 0, 0};
    rt.preselected_positions = {Position::Mid};
    const SatisfactionProfile p = derive_satisfaction(lt, rt);
    CHECK(p.score(Position::Mid) == 1.0);
    for (Position pos : {Position::Top, Position::Jungle, Position::Bottom, Position::Support}) {
      CHECK(p.score(pos) == doctest::Approx(1.0 / 35.0).epsilon(1e-12));
    }
  }
  SUBCASE("empty history smooths to 0.2") {
    rt.preselected_positions = {Position::Top, Position::Jungle};
    const SatisfactionProfile p = derive_satisfaction(lt, rt);
    CHECK(p.score(Position::Top) == 1.0);
    CHECK(p.score(Position::Jungle) == 1.0);
    for (Position pos : {Position::Mid, Position::Bottom, Position::Support}) {
      CHECK(p.score(pos) == doctest::Approx(0.2).epsilon(1e-12));
    }
  }
  SUBCASE("all five preselected means 1.0 everywhere") {
    rt.preselected_positions = {Position::Top, Position::Jungle, Position::Mid, Position::Bottom,
                                Position::Support};
    const SatisfactionProfile p = derive_satisfaction(lt, rt);
    for (Position pos : all_positions()) CHECK(p.score(pos) == 1.0);
  }
  SUBCASE("no preselection is a domain error") {
    CHECK_THROWS_AS(derive_satisfaction(lt, rt), DomainError);
  }
  SUBCASE("scale-free in total games at lambda 0") {
    lt.position_counts = {2, 4, 6, 8, 10};
    rt.preselected_positions = {Position::Top};
    const SatisfactionProfile a = derive_satisfaction(lt, rt, 0.0);
    for (int& c : lt.position_counts) c *= 1;  // same scale factor applies to denominator G
    LongTermStats scaled = lt;
    // Tripling every count triples G as well; ratios must be unchanged.
    for (int i = 0; i < kPositions; ++i) scaled.position_counts[i] *= 3;
    // 30-game cap does not apply to the raw formula; bypass validate here.
    const SatisfactionProfile b = derive_satisfaction(scaled, rt, 0.0);
    for (Position pos : all_positions()) {
      CHECK(a.score(pos) == doctest::Approx(b.score(pos)).epsilon(1e-12));
    }
  }
}

TEST_CASE("bucketing") {
  BucketSpec spec{{1.0, 2.0, 3.0}};
  CHECK(spec.bins() == 4);
  CHECK(spec.bucket(0.5) == 0);   // below the lowest edge clamps to bucket 0
  CHECK(spec.bucket(1.0) == 1);   // an edge value opens the bucket to its right
  CHECK(spec.bucket(1.5) == 1);
  CHECK(spec.bucket(99.0) == 3);
  CHECK_THROWS_AS(spec.bucket(std::nan("")), NumericError);

  const BucketSpec fitted = fit_bucket({5, 1, 4, 2, 3, 6, 8, 7, 9, 10}, 5);
  CHECK(fitted.bins() == 5);
  CHECK(std::is_sorted(fitted.edges.begin(), fitted.edges.end()));
}

TEST_CASE("team feature computation") {
  std::vector<Player> players;
  const std::array<double, kPlayersPerMatch> mmrs{47, 58, 67, 48, 52, 59, 47, 55, 55, 57};
  for (int i = 0; i < kPlayersPerMatch; ++i) {
    std::array<double, kPositions> s;
    s.fill(0.5);
    players.push_back(make_player("p" + std::to_string(i), mmrs[i], s, {Position::Top}));
  }
  Assignment a;
  for (int slot = 0; slot < kPlayersPerMatch; ++slot) a.slots[slot] = players[slot].id;

  const TeamFeatures blue = compute_team_features(a, players, Team::Blue);
  CHECK(blue.mmr_mean == doctest::Approx(54.4).epsilon(1e-12));
  CHECK(blue.mmr_variance >= 0.0);

  SUBCASE("constant MMR has zero variance") {
    for (Player& p : players) p.mmr = 50.0;
    const TeamFeatures t = compute_team_features(a, players, Team::Red);
    CHECK(t.mmr_mean == 50.0);
    CHECK(t.mmr_variance == doctest::Approx(0.0));
  }
  SUBCASE("cross-team swap changes the mean unless MMRs match") {
    Assignment swapped = a;
    std::swap(swapped.slots[0], swapped.slots[5]);
    const TeamFeatures t = compute_team_features(swapped, players, Team::Blue);
    CHECK(t.mmr_mean != blue.mmr_mean);
  }
}

namespace {

std::vector<Player> encodable_players(std::mt19937_64& rng) {
  std::vector<Player> players;
  for (int i = 0; i < kPlayersPerMatch; ++i) {
    std::array<double, kPositions> s;
    s.fill(0.5);
    Player p = make_player("p" + std::to_string(i), 40.0 + double(rng() % 30), s, {Position::Mid});
    p.features = random_bundle(rng);
    players.push_back(p);
  }
  return players;
}

Assignment identity(const std::vector<Player>& players) {
  Assignment a;
  for (int slot = 0; slot < kPlayersPerMatch; ++slot) a.slots[slot] = players[slot].id;
  return a;
}

}  // namespace

TEST_CASE("match encoding") {
  std::mt19937_64 rng(7);
  const EncoderConfig cfg = EncoderConfig::defaults();

  SUBCASE("duplicated player yields mirrored per-slot vectors") {
    auto players = encodable_players(rng);
    const FeatureBundle f = players[0].features;
    for (Player& p : players) {
      p.features = f;
      p.mmr = 50.0;
    }
    const EncodedMatch e = encode_match(identity(players), players, cfg);
    for (int slot = 0; slot < kTeamSize; ++slot) {
      CHECK(e.steps[slot] == e.steps[slot + kTeamSize]);
      CHECK(e.spatial[slot] == e.spatial[slot + kTeamSize]);
    }
    CHECK(e.team[0].mmr_mean == e.team[1].mmr_mean);
    CHECK(e.team[0].mmr_variance == e.team[1].mmr_variance);
  }

  SUBCASE("within-team swap only moves the two touched slots") {
    auto players = encodable_players(rng);
    Assignment a = identity(players);
    Assignment b = a;
    std::swap(b.slots[1], b.slots[3]);  // both Blue
    const EncodedMatch ea = encode_match(a, players, cfg);
    const EncodedMatch eb = encode_match(b, players, cfg);
    for (int slot = 0; slot < kPlayersPerMatch; ++slot) {
      if (slot == 1 || slot == 3) {
        CHECK(ea.steps[slot] != eb.steps[slot]);
      } else {
        CHECK(ea.steps[slot] == eb.steps[slot]);
        CHECK(ea.spatial[slot] == eb.spatial[slot]);
      }
    }
  }

  SUBCASE("MMR below the lowest edge lands in bucket zero") {
    auto players = encodable_players(rng);
    players[0].features.real_time.normal_mmr = -1000.0;
    const EncodedMatch e = encode_match(identity(players), players, cfg);
    // The normal_mmr one-hot block starts after the per-position and champion
    // blocks; rather than hard-coding the offset, re-encode with a raised MMR
    // and check exactly one flag moved to a higher bucket position.
    auto raised = players;
    raised[0].features.real_time.normal_mmr = 55.0;
    const EncodedMatch e2 = encode_match(identity(raised), raised, cfg);
    int diffs = 0;
    for (size_t i = 0; i < e.spatial[0].size(); ++i) {
      if (e.spatial[0][i] != e2.spatial[0][i]) ++diffs;
    }
    CHECK(diffs == 2);  // one bit cleared, one set
  }

  SUBCASE("non-finite feature values raise a numeric error") {
    auto players = encodable_players(rng);
    players[2].features.long_term.avg_kills = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(encode_match(identity(players), players, cfg), NumericError);
  }

  SUBCASE("encoding is pure and dimension-stable") {
    auto players = encodable_players(rng);
    const EncodedMatch a = encode_match(identity(players), players, cfg);
    const EncodedMatch b = encode_match(identity(players), players, cfg);
    CHECK(a.flatten() == b.flatten());
    CHECK(int(a.flatten().size()) == cfg.flat_dim());

    auto other = encodable_players(rng);
    const EncodedMatch c = encode_match(identity(other), other, cfg);
    CHECK(c.flatten().size() == a.flatten().size());
  }

  SUBCASE("short histories pad with flagged zero steps") {
    auto players = encodable_players(rng);
    players[0].features.short_term.clear();
    const EncodedMatch e = encode_match(identity(players), players, cfg);
    CHECK(int(e.steps[0].size()) == cfg.short_term_window);
    for (const auto& step : e.steps[0]) {
      CHECK(step.back() == 1.0);  // padding indicator
      double sum = 0.0;
      for (size_t i = 0; i + 1 < step.size(); ++i) sum += step[i];
      CHECK(sum == 0.0);
    }
  }
}
