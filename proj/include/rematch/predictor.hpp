#pragma once

#include <map>
#include <string>
#include <vector>

#include "rematch/match.hpp"
#include "rematch/tape.hpp"

namespace rematch {

// Transformer stack with an extra attention pass over the hidden states of
// layers 1..L-1 (empty at L=1, where the encoder degrades to a plain
// transformer).
struct OmniNetConfig {
  int layers = 2;    // L
  int width = 32;    // d
  int heads = 2;     // H; width % heads == 0
  int ffn_mult = 2;  // feed-forward hidden = ffn_mult * width

  void validate() const;
};

struct ModelConfig {
  OmniNetConfig toe;  // temporal encoder, parameters shared across players
  OmniNetConfig soe;  // spatial encoder over the 10-player set
  OmniNetConfig poe;  // permutation encoder over the 10 slot embeddings
  int head_hidden1 = 32;
  int head_hidden2 = 16;
  // Ablations: replace an encoder with a plain MLP of matching output width.
  bool toe_mlp = false;
  bool soe_mlp = false;
  bool poe_mlp = false;
  EncoderConfig encoder;

  void validate() const;
  // Production-scale preset (3 layers x 256 units x 10 heads, head (256,128));
  // not used by tests.
  static ModelConfig production_scale(EncoderConfig encoder);
};

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  size_t size() const { return data.size(); }
};

// Named parameter tensors in a fixed creation order (serialization and
// optimizer iteration both follow it).
struct ParamStore {
  std::vector<std::pair<std::string, Tensor>> items;

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  Tensor& emplace(const std::string& name, std::vector<int> shape);
  size_t scalar_count() const;
};

enum class LossKind { BCE, NED, NEDSmoothed };

LossKind loss_kind_from_name(const std::string& name);  // "bce" | "ned" | "ned-smoothed"
std::string loss_kind_name(LossKind kind);

// Standard binary cross-entropy; y_hat clamped to [1e-7, 1 - 1e-7].
double loss_bce(int y, double y_hat);
// Economy-weighted cross-entropy with alpha in [-1, 1], evaluated verbatim.
double loss_ned(int y, double y_hat, double alpha);

class WinRateModel {
 public:
  ModelConfig config;
  ParamStore params;

  static WinRateModel init(ModelConfig config, uint64_t seed);

  // Forward pass; output strictly in (0,1). Throws StructuralError on
  // encoding dimension mismatch.
  double predict(const EncodedMatch& encoded) const;

  // Builds the prediction logit on a tape whose leaves are the parameters;
  // param_vars receives one Var per parameter, in store order.
  ad::Var predict_logit(ad::Tape& tape, const EncodedMatch& encoded,
                        std::vector<ad::Var>& param_vars) const;

  void save(const std::string& path) const;
  static WinRateModel load(const std::string& path);
};

// One OmniNet encoder forward over a T x d input using the parameters under
// `prefix` in `params`. Standalone entry point for a single encoder.
ad::Mat omninet_forward(const ad::Mat& input, const ParamStore& params, const std::string& prefix,
                        const OmniNetConfig& config);

struct TrainConfig {
  LossKind loss = LossKind::BCE;
  double learning_rate = 1e-3;  // must be in [1e-6, 1e-1]
  int epochs = 10;
  int batch_size = 32;
  uint64_t seed = 1;
  int threads = 0;           // 0 = hardware concurrency
  double val_fraction = 0.1;  // deterministic tail split
};

struct TrainLog {
  std::vector<double> train_loss;    // per epoch
  std::vector<double> val_accuracy;  // per epoch
};

// Mini-batch Adam (beta1 0.9, beta2 0.999, eps 1e-8). Throws NumericError on
// NaN loss, reporting the last finite epoch.
TrainLog train(WinRateModel& model, const std::vector<MatchRecord>& records,
               const TrainConfig& config);

// Max relative error between tape gradients and central finite differences
// (step 1e-4, refined by Richardson extrapolation from the half step) over
// parameters with |g| > 1e-6. Coordinates where halving the step moves the
// estimate are skipped: there the stencil straddles a ReLU kink and the
// difference quotient itself is unreliable.
double grad_check(const WinRateModel& model, const MatchRecord& record, LossKind loss);

// Logistic regression over the flat concatenated encoding.
class LogisticModel {
 public:
  EncoderConfig encoder;
  std::vector<double> weights;  // flat_dim entries
  double bias = 0.0;

  static LogisticModel init(EncoderConfig encoder);
  double predict(const EncodedMatch& encoded) const;

  void save(const std::string& path) const;
  static LogisticModel load(const std::string& path);
};

TrainLog train(LogisticModel& model, const std::vector<MatchRecord>& records,
               const TrainConfig& config);

}  // namespace rematch
