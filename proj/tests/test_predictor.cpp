#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "helpers.hpp"
#include "rematch/match.hpp"

using namespace rematch;
using namespace rematch::testing;

namespace {

MatchRecord tiny_record(std::mt19937_64& rng) { return random_record(rng, 4); }

std::string temp_path(const std::string& stem) {
  return (std::filesystem::temp_directory_path() / stem).string();
}

// Separable synthetic dataset: outcome follows the sign of the blue-red MMR
// gap, with the gap large enough to cross bucket edges.
std::vector<MatchRecord> separable_records(int n, std::mt19937_64& rng) {
  std::vector<MatchRecord> out;
  for (int i = 0; i < n; ++i) {
    MatchRecord rec = tiny_record(rng);
    const bool blue_wins = rng() & 1;
    for (int slot = 0; slot < kPlayersPerMatch; ++slot) {
      const bool blue = slot < kTeamSize;
      const double mmr = (blue == blue_wins) ? 70.0 : 30.0;
      rec.features[slot].real_time.normal_mmr = mmr;
      rec.features[slot].real_time.ranked_mmr = mmr;
    }
    rec.outcome = blue_wins ? 1 : 0;
    out.push_back(rec);
  }
  return out;
}

}  // namespace

TEST_CASE("loss functions") {
  SUBCASE("hand-computed values") {
    CHECK(loss_bce(1, 0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(loss_bce(0, 0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(loss_bce(1, 0.9) == doctest::Approx(-std::log(0.9)).epsilon(1e-12));
    CHECK(loss_ned(1, 0.5, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(loss_ned(1, 0.5, 1.0 / 3.0) ==
          doctest::Approx(std::log(2.0) / 3.0).epsilon(1e-12));
    CHECK(loss_ned(1, 0.5, 0.0) == 0.0);
  }
  SUBCASE("clamping keeps extreme predictions finite") {
    CHECK(std::isfinite(loss_bce(1, 0.0)));
    CHECK(std::isfinite(loss_bce(0, 1.0)));
    CHECK(loss_bce(1, 0.0) == doctest::Approx(-std::log(1e-7)).epsilon(1e-9));
  }
  SUBCASE("economy weight 0.5 halves the unweighted loss") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> unit(1e-6, 1.0 - 1e-6);
    for (int i = 0; i < 10000; ++i) {
      const int y = int(rng() & 1);
      const double y_hat = unit(rng);
      CHECK(std::abs(loss_ned(y, y_hat, 0.5) - 0.5 * loss_bce(y, y_hat)) < 1e-12);
    }
  }
  SUBCASE("name mapping round trips") {
    for (LossKind k : {LossKind::BCE, LossKind::NED, LossKind::NEDSmoothed}) {
      CHECK(loss_kind_from_name(loss_kind_name(k)) == k);
    }
    CHECK_THROWS_AS(loss_kind_from_name("mse"), ConfigError);
  }
}

TEST_CASE("model construction and prediction") {
  std::mt19937_64 rng(11);
  const ModelConfig mc = tiny_model_config();
  const WinRateModel model = WinRateModel::init(mc, 5);

  SUBCASE("predictions live strictly inside (0,1) and are deterministic") {
    for (int i = 0; i < 10; ++i) {
      const EncodedMatch e = encode_record(tiny_record(rng), mc.encoder);
      const double p = model.predict(e);
      CHECK(p > 0.0);
      CHECK(p < 1.0);
      CHECK(model.predict(e) == p);
    }
  }
  SUBCASE("same seed gives identical parameters, different seed differs") {
    const WinRateModel again = WinRateModel::init(mc, 5);
    const WinRateModel other = WinRateModel::init(mc, 6);
    REQUIRE(again.params.items.size() == model.params.items.size());
    bool any_diff = false;
    for (size_t i = 0; i < model.params.items.size(); ++i) {
      CHECK(model.params.items[i].second.data == again.params.items[i].second.data);
      if (model.params.items[i].second.data != other.params.items[i].second.data) {
        any_diff = true;
      }
    }
    CHECK(any_diff);
  }
  SUBCASE("cross-team swap changes the prediction") {
    MatchRecord rec = tiny_record(rng);
    rec.features[0].real_time.normal_mmr = 70.0;  // force asymmetry across the edge
    rec.features[5].real_time.normal_mmr = 30.0;
    MatchRecord swapped = rec;
    std::swap(swapped.features[0], swapped.features[5]);
    const double a = model.predict(encode_record(rec, mc.encoder));
    const double b = model.predict(encode_record(swapped, mc.encoder));
    CHECK(a != b);
  }
  SUBCASE("encoding dimension mismatch is a structural error") {
    const EncodedMatch e = encode_record(tiny_record(rng), EncoderConfig::defaults());
    CHECK_THROWS_AS(model.predict(e), StructuralError);
  }
  SUBCASE("invalid configurations rejected") {
    ModelConfig bad = mc;
    bad.toe.heads = 3;  // does not divide width 8
    CHECK_THROWS_AS(WinRateModel::init(bad, 1), ConfigError);
    bad = mc;
    bad.toe.layers = 0;
    CHECK_THROWS_AS(WinRateModel::init(bad, 1), ConfigError);
  }
}

TEST_CASE("ablation variants predict and differ") {
  std::mt19937_64 rng(13);
  const MatchRecord rec = tiny_record(rng);
  const ModelConfig base = tiny_model_config();
  const double p_full =
      WinRateModel::init(base, 9).predict(encode_record(rec, base.encoder));
  for (int mask = 1; mask < 8; ++mask) {
    ModelConfig mc = base;
    mc.toe_mlp = mask & 1;
    mc.soe_mlp = mask & 2;
    mc.poe_mlp = mask & 4;
    const WinRateModel m = WinRateModel::init(mc, 9);
    const double p = m.predict(encode_record(rec, mc.encoder));
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    CHECK(p != p_full);
  }
}

TEST_CASE("tape gradients agree with finite differences") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 3; ++trial) {
    const WinRateModel model = WinRateModel::init(tiny_model_config(), 20 + trial);
    const MatchRecord rec = tiny_record(rng);
    CHECK(grad_check(model, rec, LossKind::BCE) < 1e-4);
    CHECK(grad_check(model, rec, LossKind::NED) < 1e-4);
  }
}

TEST_CASE("all-zero parameters still give finite gradients") {
  WinRateModel model = WinRateModel::init(tiny_model_config(), 1);
  for (auto& [name, t] : model.params.items) {
    std::fill(t.data.begin(), t.data.end(), 0.0);
  }
  std::mt19937_64 rng(19);
  const MatchRecord rec = tiny_record(rng);
  const EncodedMatch e = encode_record(rec, model.config.encoder);
  CHECK(model.predict(e) == 0.5);

  ad::Tape tape;
  std::vector<ad::Var> vars;
  const ad::Var z = model.predict_logit(tape, e, vars);
  const ad::Var loss = tape.weighted_bce_with_logit(z, 1.0, 1.0, 0.0);
  tape.backward(loss);
  for (ad::Var v : vars) {
    for (double g : tape.grad(v).a) CHECK(std::isfinite(g));
  }
}

TEST_CASE("artifact round trip") {
  std::mt19937_64 rng(23);
  const WinRateModel model = WinRateModel::init(tiny_model_config(), 31);
  const std::string path = temp_path("rematch_model_roundtrip.bin");
  model.save(path);
  const WinRateModel loaded = WinRateModel::load(path);

  SUBCASE("predictions are bit-identical") {
    for (int i = 0; i < 5; ++i) {
      const EncodedMatch e = encode_record(tiny_record(rng), model.config.encoder);
      CHECK(model.predict(e) == loaded.predict(e));
    }
  }
  SUBCASE("parameters are bit-identical") {
    REQUIRE(loaded.params.items.size() == model.params.items.size());
    for (size_t i = 0; i < model.params.items.size(); ++i) {
      CHECK(loaded.params.items[i].first == model.params.items[i].first);
      CHECK(loaded.params.items[i].second.data == model.params.items[i].second.data);
    }
  }
  SUBCASE("truncated artifact fails to load") {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string cut = temp_path("rematch_model_truncated.bin");
    std::ofstream out(cut, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    CHECK_THROWS_AS(WinRateModel::load(cut), LoadError);
    std::remove(cut.c_str());
  }
  SUBCASE("garbage magic fails to load") {
    const std::string bad = temp_path("rematch_model_bad_magic.bin");
    std::ofstream out(bad, std::ios::binary);
    out << "NOTANARTIFACTNOTANARTIFACT";
    out.close();
    CHECK_THROWS_AS(WinRateModel::load(bad), LoadError);
    std::remove(bad.c_str());
  }
  std::remove(path.c_str());
}

TEST_CASE("training") {
  std::mt19937_64 rng(29);

  SUBCASE("separable data is learned quickly") {
    // Separating mirrored team compositions forces the model through the slot
    // embeddings; width 8 cannot escape the permutation-invariant plateau, so
    // this uses the smallest width that reliably does.
    const auto records = separable_records(200, rng);
    ModelConfig mc = tiny_model_config();
    mc.toe = mc.soe = mc.poe = OmniNetConfig{2, 16, 2, 2};
    mc.head_hidden1 = 32;
    mc.head_hidden2 = 16;
    WinRateModel model = WinRateModel::init(mc, 7);
    TrainConfig tc;
    tc.learning_rate = 1e-2;
    tc.epochs = 30;
    tc.batch_size = 16;
    tc.threads = 4;
    const TrainLog log = train(model, records, tc);
    REQUIRE(log.val_accuracy.size() == 30);
    CHECK(log.val_accuracy.back() > 0.95);
    CHECK(log.train_loss.back() < log.train_loss.front());
  }

  SUBCASE("zero learning rate leaves parameters unchanged") {
    std::vector<MatchRecord> records;
    for (int i = 0; i < 40; ++i) records.push_back(tiny_record(rng));
    WinRateModel model = WinRateModel::init(tiny_model_config(), 3);
    const auto before = model.params.items;
    TrainConfig tc;
    tc.learning_rate = 0.0;
    tc.epochs = 3;
    const TrainLog log = train(model, records, tc);
    for (size_t i = 0; i < before.size(); ++i) {
      CHECK(model.params.items[i].second.data == before[i].second.data);
    }
    CHECK(log.train_loss[0] == doctest::Approx(log.train_loss[2]).epsilon(1e-12));
  }

  SUBCASE("fixed seed reproduces the training log bit for bit") {
    std::vector<MatchRecord> records;
    for (int i = 0; i < 60; ++i) records.push_back(tiny_record(rng));
    TrainConfig tc;
    tc.learning_rate = 1e-3;
    tc.epochs = 3;
    tc.seed = 77;
    tc.threads = 3;
    WinRateModel a = WinRateModel::init(tiny_model_config(), 7);
    WinRateModel b = WinRateModel::init(tiny_model_config(), 7);
    const TrainLog la = train(a, records, tc);
    const TrainLog lb = train(b, records, tc);
    CHECK(la.train_loss == lb.train_loss);
    CHECK(la.val_accuracy == lb.val_accuracy);
    for (size_t i = 0; i < a.params.items.size(); ++i) {
      CHECK(a.params.items[i].second.data == b.params.items[i].second.data);
    }
  }

  SUBCASE("invalid training configurations rejected") {
    std::vector<MatchRecord> records{tiny_record(rng)};
    WinRateModel model = WinRateModel::init(tiny_model_config(), 7);
    TrainConfig tc;
    tc.learning_rate = 0.5;  // above the allowed range
    CHECK_THROWS_AS(train(model, records, tc), ConfigError);
    tc.learning_rate = 1e-3;
    tc.epochs = 0;
    CHECK_THROWS_AS(train(model, records, tc), ConfigError);
    tc.epochs = 1;
    CHECK_THROWS_AS(train(model, std::vector<MatchRecord>{}, tc), StructuralError);
  }
}

TEST_CASE("logistic baseline") {
  std::mt19937_64 rng(37);
  const EncoderConfig enc = tiny_encoder();
  LogisticModel model = LogisticModel::init(enc);

  SUBCASE("zero weights predict exactly 0.5") {
    const EncodedMatch e = encode_record(tiny_record(rng), enc);
    CHECK(model.predict(e) == 0.5);
  }
  SUBCASE("a positive weight on an active input pushes above 0.5") {
    const EncodedMatch e = encode_record(tiny_record(rng), enc);
    const std::vector<double> x = e.flatten();
    size_t active = 0;
    while (x[active] == 0.0) ++active;
    model.weights[active] = 2.0;
    CHECK(model.predict(e) > 0.5);
    model.weights[active] = -2.0;
    CHECK(model.predict(e) < 0.5);
  }
  SUBCASE("separable data is learned") {
    const auto records = separable_records(300, rng);
    LogisticModel m = LogisticModel::init(enc);
    TrainConfig tc;
    tc.learning_rate = 5e-2;
    tc.epochs = 30;
    const TrainLog log = train(m, records, tc);
    CHECK(log.val_accuracy.back() > 0.95);
  }
  SUBCASE("save and load round trip bit for bit") {
    model.weights[3] = 0.125;
    model.bias = -0.5;
    const std::string path = temp_path("rematch_lr_roundtrip.bin");
    model.save(path);
    const LogisticModel loaded = LogisticModel::load(path);
    CHECK(loaded.weights == model.weights);
    CHECK(loaded.bias == model.bias);
    const EncodedMatch e = encode_record(tiny_record(rng), enc);
    CHECK(loaded.predict(e) == model.predict(e));
    std::remove(path.c_str());
  }
  SUBCASE("loading a logistic artifact as a full model fails cleanly") {
    const std::string path = temp_path("rematch_kind_mismatch.bin");
    model.save(path);
    CHECK_THROWS_AS(WinRateModel::load(path), LoadError);
    std::remove(path.c_str());
  }
}
