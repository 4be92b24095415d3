#include "rematch/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "json.hpp"
#include "rematch/parallel.hpp"

namespace rematch {

using ad::Mat;
using ad::Tape;
using ad::Var;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

void OmniNetConfig::validate() const {
  if (layers < 1) throw ConfigError("encoder needs at least one layer");
  if (width < 1 || heads < 1 || width % heads != 0) {
    throw ConfigError("encoder width must be a positive multiple of the head count");
  }
  if (ffn_mult < 1) throw ConfigError("feed-forward multiplier must be >= 1");
}

void ModelConfig::validate() const {
  toe.validate();
  soe.validate();
  poe.validate();
  if (head_hidden1 < 1 || head_hidden2 < 1) throw ConfigError("head hidden sizes must be >= 1");
  encoder.validate();
}

ModelConfig ModelConfig::production_scale(EncoderConfig enc) {
  ModelConfig c;
  c.toe = c.soe = c.poe = OmniNetConfig{3, 256, 10, 2};
  // 256 is not a multiple of 10; round the head count to 8 at this width.
  c.toe.heads = c.soe.heads = c.poe.heads = 8;
  c.head_hidden1 = 256;
  c.head_hidden2 = 128;
  c.encoder = std::move(enc);
  return c;
}

// ---------------------------------------------------------------------------
// Parameter store

Tensor& ParamStore::at(const std::string& name) {
  for (auto& [n, t] : items) {
    if (n == name) return t;
  }
  throw StructuralError("unknown parameter tensor: " + name);
}

const Tensor& ParamStore::at(const std::string& name) const {
  for (const auto& [n, t] : items) {
    if (n == name) return t;
  }
  throw StructuralError("unknown parameter tensor: " + name);
}

Tensor& ParamStore::emplace(const std::string& name, std::vector<int> shape) {
  size_t n = 1;
  for (int d : shape) n *= static_cast<size_t>(d);
  items.emplace_back(name, Tensor{std::move(shape), std::vector<double>(n, 0.0)});
  return items.back().second;
}

size_t ParamStore::scalar_count() const {
  size_t n = 0;
  for (const auto& [name, t] : items) n += t.size();
  return n;
}

// ---------------------------------------------------------------------------
// Losses

LossKind loss_kind_from_name(const std::string& name) {
  if (name == "bce") return LossKind::BCE;
  if (name == "ned") return LossKind::NED;
  if (name == "ned-smoothed") return LossKind::NEDSmoothed;
  throw ConfigError("unknown loss kind: " + name);
}

std::string loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::BCE: return "bce";
    case LossKind::NED: return "ned";
    case LossKind::NEDSmoothed: return "ned-smoothed";
  }
  throw ConfigError("invalid loss kind");
}

namespace {
constexpr double kClampEps = 1e-7;
double clamp_prob(double p) { return std::clamp(p, kClampEps, 1.0 - kClampEps); }
}  // namespace

double loss_bce(int y, double y_hat) {
  const double p = clamp_prob(y_hat);
  return -(y * std::log(p) + (1 - y) * std::log(1.0 - p));
}

double loss_ned(int y, double y_hat, double alpha) {
  const double p = clamp_prob(y_hat);
  return -(alpha * y * std::log(p) + (1.0 - alpha) * (1 - y) * std::log(1.0 - p));
}

namespace {

// Loss weights on the positive/negative log terms for each training mode.
std::pair<double, double> loss_weights(LossKind kind, double alpha) {
  switch (kind) {
    case LossKind::BCE: return {1.0, 1.0};
    case LossKind::NED: return {alpha, 1.0 - alpha};
    case LossKind::NEDSmoothed: {
      const double a = (1.0 + alpha) / 2.0;
      return {a, 1.0 - a};
    }
  }
  throw ConfigError("invalid loss kind");
}

double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }
double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

double logit_loss(double z, int y, double pos_w, double neg_w) {
  return pos_w * y * softplus(-z) + neg_w * (1 - y) * softplus(z);
}

// ---------------------------------------------------------------------------
// Parameter construction

void add_omninet_params(ParamStore& store, const std::string& prefix, const OmniNetConfig& cfg) {
  const int d = cfg.width;
  const int f = cfg.ffn_mult * d;
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string lp = prefix + "/layer" + std::to_string(l);
    store.emplace(lp + "/ln1/g", {d});
    store.emplace(lp + "/ln1/b", {d});
    store.emplace(lp + "/attn/wq", {d, d});
    store.emplace(lp + "/attn/bq", {d});
    store.emplace(lp + "/attn/wk", {d, d});
    store.emplace(lp + "/attn/bk", {d});
    store.emplace(lp + "/attn/wv", {d, d});
    store.emplace(lp + "/attn/bv", {d});
    store.emplace(lp + "/attn/wo", {d, d});
    store.emplace(lp + "/attn/bo", {d});
    store.emplace(lp + "/ln2/g", {d});
    store.emplace(lp + "/ln2/b", {d});
    store.emplace(lp + "/ffn/w1", {d, f});
    store.emplace(lp + "/ffn/b1", {f});
    store.emplace(lp + "/ffn/w2", {f, d});
    store.emplace(lp + "/ffn/b2", {d});
  }
  if (cfg.layers >= 2) {
    store.emplace(prefix + "/omni/wq", {d, d});
    store.emplace(prefix + "/omni/bq", {d});
    store.emplace(prefix + "/omni/wk", {d, d});
    store.emplace(prefix + "/omni/bk", {d});
    store.emplace(prefix + "/omni/wv", {d, d});
    store.emplace(prefix + "/omni/bv", {d});
    store.emplace(prefix + "/omni/wo", {d, d});
    store.emplace(prefix + "/omni/bo", {d});
    store.emplace(prefix + "/omni/mlp/w1", {d, d});
    store.emplace(prefix + "/omni/mlp/b1", {d});
    store.emplace(prefix + "/omni/mlp/w2", {d, d});
    store.emplace(prefix + "/omni/mlp/b2", {d});
  }
}

ParamStore build_params(const ModelConfig& cfg) {
  ParamStore store;
  const int S = cfg.encoder.step_dim();
  const int P = cfg.encoder.spatial_dim();
  const int K = cfg.encoder.short_term_window;
  const int dt = cfg.toe.width;
  const int ds = cfg.soe.width;
  const int dp = cfg.poe.width;

  if (cfg.toe_mlp) {
    store.emplace("toe/mlp/w1", {K * S, dt});
    store.emplace("toe/mlp/b1", {dt});
    store.emplace("toe/mlp/w2", {dt, dt});
    store.emplace("toe/mlp/b2", {dt});
  } else {
    store.emplace("toe/embed/w", {S, dt});
    store.emplace("toe/embed/b", {dt});
    store.emplace("toe/pos", {K, dt});
    add_omninet_params(store, "toe", cfg.toe);
  }
  if (cfg.soe_mlp) {
    store.emplace("soe/mlp/w1", {P, ds});
    store.emplace("soe/mlp/b1", {ds});
    store.emplace("soe/mlp/w2", {ds, ds});
    store.emplace("soe/mlp/b2", {ds});
  } else {
    store.emplace("soe/embed/w", {P, ds});
    store.emplace("soe/embed/b", {ds});
    add_omninet_params(store, "soe", cfg.soe);
  }
  if (cfg.poe_mlp) {
    store.emplace("poe/mlp/w1", {kPlayersPerMatch * (dt + ds), dp});
    store.emplace("poe/mlp/b1", {dp});
    store.emplace("poe/mlp/w2", {dp, dp});
    store.emplace("poe/mlp/b2", {dp});
  } else {
    store.emplace("poe/proj/w", {dt + ds, dp});
    store.emplace("poe/proj/b", {dp});
    store.emplace("poe/pos", {kPlayersPerMatch, dp});
    add_omninet_params(store, "poe", cfg.poe);
  }
  store.emplace("head/w1", {dp, cfg.head_hidden1});
  store.emplace("head/b1", {cfg.head_hidden1});
  store.emplace("head/w2", {cfg.head_hidden1, cfg.head_hidden2});
  store.emplace("head/b2", {cfg.head_hidden2});
  store.emplace("head/w3", {cfg.head_hidden2, 1});
  store.emplace("head/b3", {1});
  return store;
}

bool is_gain(const std::string& name) {
  return name.size() >= 2 && name.compare(name.size() - 2, 2, "/g") == 0;
}
bool is_position_embedding(const std::string& name) {
  return name.size() >= 4 && name.compare(name.size() - 4, 4, "/pos") == 0;
}
bool is_weight_matrix(const Tensor& t) { return t.shape.size() == 2; }

void init_params(ParamStore& store, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& [name, t] : store.items) {
    if (is_gain(name)) {
      std::fill(t.data.begin(), t.data.end(), 1.0);
    } else if (is_position_embedding(name)) {
      // Unit scale, not the usual 0.02: slot identity is the only signal that
      // separates mirrored team compositions, and a near-zero embedding leaves
      // training stuck at the permutation-invariant saddle. The pre-norm
      // layers rescale the sum anyway.
      for (double& v : t.data) v = normal(rng);
    } else if (is_weight_matrix(t)) {
      const double sd = std::sqrt(2.0 / (t.shape[0] + t.shape[1]));
      for (double& v : t.data) v = sd * normal(rng);
    }
    // biases and layernorm shifts stay zero
  }
}

// ---------------------------------------------------------------------------
// Tape assembly

Mat tensor_to_mat(const Tensor& t) {
  Mat m;
  if (t.shape.size() == 1) {
    m = Mat(1, t.shape[0]);
  } else if (t.shape.size() == 2) {
    m = Mat(t.shape[0], t.shape[1]);
  } else {
    throw StructuralError("tensors are at most rank 2");
  }
  m.a = t.data;
  return m;
}

// Registers every stored tensor as a tape leaf, in store order.
struct TapeParams {
  Tape& tape;
  std::map<std::string, Var> vars;
  std::vector<Var> ordered;

  TapeParams(Tape& t, const ParamStore& store) : tape(t) {
    for (const auto& [name, tensor] : store.items) {
      Var v = tape.leaf(tensor_to_mat(tensor));
      vars.emplace(name, v);
      ordered.push_back(v);
    }
  }
  Var operator[](const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw StructuralError("unknown parameter tensor: " + name);
    return it->second;
  }
};

Var linear(Tape& t, Var x, Var w, Var b) { return t.add_rowvec(t.matmul(x, w), b); }

Var mlp2(Tape& t, Var x, Var w1, Var b1, Var w2, Var b2) {
  return linear(t, t.relu(linear(t, x, w1, b1)), w2, b2);
}

Var multihead_attention(Tape& t, Var query_src, Var kv_src, const TapeParams& pv,
                        const std::string& prefix, int width, int heads) {
  Var q = linear(t, query_src, pv[prefix + "/wq"], pv[prefix + "/bq"]);
  Var k = linear(t, kv_src, pv[prefix + "/wk"], pv[prefix + "/bk"]);
  Var v = linear(t, kv_src, pv[prefix + "/wv"], pv[prefix + "/bv"]);
  const int dh = width / heads;
  std::vector<Var> outs;
  outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Var qh = t.slice_cols(q, h * dh, dh);
    Var kh = t.slice_cols(k, h * dh, dh);
    Var vh = t.slice_cols(v, h * dh, dh);
    Var scores = t.scale(t.matmul(qh, t.transpose(kh)), 1.0 / std::sqrt(double(dh)));
    outs.push_back(t.matmul(t.softmax_rows(scores), vh));
  }
  Var o = t.concat_cols(outs);
  return linear(t, o, pv[prefix + "/wo"], pv[prefix + "/bo"]);
}

// Pre-norm transformer stack plus the attention pass over the pooled hidden
// states of layers 1..L-1; the pooled branch is absent at L=1.
Var omninet_tape(Tape& t, Var x, const TapeParams& pv, const std::string& prefix,
                 const OmniNetConfig& cfg) {
  std::vector<Var> hidden;
  Var h = x;
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string lp = prefix + "/layer" + std::to_string(l);
    Var n1 = t.layernorm_rows(h, pv[lp + "/ln1/g"], pv[lp + "/ln1/b"]);
    Var attn = multihead_attention(t, n1, n1, pv, lp + "/attn", cfg.width, cfg.heads);
    h = t.add(h, attn);
    Var n2 = t.layernorm_rows(h, pv[lp + "/ln2/g"], pv[lp + "/ln2/b"]);
    Var ffn = mlp2(t, n2, pv[lp + "/ffn/w1"], pv[lp + "/ffn/b1"], pv[lp + "/ffn/w2"],
                   pv[lp + "/ffn/b2"]);
    h = t.add(h, ffn);
    hidden.push_back(h);
  }
  if (cfg.layers >= 2) {
    std::vector<Var> pool_parts(hidden.begin(), hidden.end() - 1);
    Var pool = pool_parts.size() == 1 ? pool_parts[0] : t.concat_rows(pool_parts);
    Var omni = multihead_attention(t, h, pool, pv, prefix + "/omni", cfg.width, cfg.heads);
    Var reduced = mlp2(t, omni, pv[prefix + "/omni/mlp/w1"], pv[prefix + "/omni/mlp/b1"],
                       pv[prefix + "/omni/mlp/w2"], pv[prefix + "/omni/mlp/b2"]);
    h = t.add(h, reduced);
  }
  return h;
}

Mat rows_to_mat(const std::vector<std::vector<double>>& rows) {
  Mat m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].begin(), rows[i].end(), m.a.begin() + i * rows[i].size());
  }
  return m;
}

void check_encoding_dims(const EncodedMatch& enc, const EncoderConfig& cfg) {
  if (enc.steps.size() != kPlayersPerMatch || enc.spatial.size() != kPlayersPerMatch) {
    throw StructuralError("encoded match must cover exactly 10 slots");
  }
  for (int slot = 0; slot < kPlayersPerMatch; ++slot) {
    if (static_cast<int>(enc.steps[slot].size()) != cfg.short_term_window) {
      throw StructuralError("short-term window mismatch between encoding and model");
    }
    for (const auto& s : enc.steps[slot]) {
      if (static_cast<int>(s.size()) != cfg.step_dim()) {
        throw StructuralError("step vector dimension mismatch between encoding and model");
      }
    }
    if (static_cast<int>(enc.spatial[slot].size()) != cfg.spatial_dim()) {
      throw StructuralError("spatial vector dimension mismatch between encoding and model");
    }
  }
}

}  // namespace

Mat omninet_forward(const Mat& input, const ParamStore& params, const std::string& prefix,
                    const OmniNetConfig& config) {
  config.validate();
  if (input.cols != config.width) throw StructuralError("omninet input width mismatch");
  Tape tape;
  TapeParams pv(tape, params);
  Var x = tape.leaf(input);
  Var out = omninet_tape(tape, x, pv, prefix, config);
  return tape.val(out);
}

WinRateModel WinRateModel::init(ModelConfig config, uint64_t seed) {
  config.validate();
  WinRateModel m;
  m.config = std::move(config);
  m.params = build_params(m.config);
  init_params(m.params, seed);
  return m;
}

Var WinRateModel::predict_logit(Tape& tape, const EncodedMatch& encoded,
                                std::vector<Var>& param_vars) const {
  check_encoding_dims(encoded, config.encoder);
  TapeParams pv(tape, params);
  param_vars = pv.ordered;

  // Temporal encoder, parameters shared across the 10 players.
  std::vector<Var> temporal(kPlayersPerMatch);
  for (int slot = 0; slot < kPlayersPerMatch; ++slot) {
    if (config.toe_mlp) {
      std::vector<double> flat;
      for (const auto& s : encoded.steps[slot]) flat.insert(flat.end(), s.begin(), s.end());
      Var x = tape.leaf(flat);
      temporal[slot] =
          mlp2(tape, x, pv["toe/mlp/w1"], pv["toe/mlp/b1"], pv["toe/mlp/w2"], pv["toe/mlp/b2"]);
    } else {
      Var x = tape.leaf(rows_to_mat(encoded.steps[slot]));
      Var e = tape.add(linear(tape, x, pv["toe/embed/w"], pv["toe/embed/b"]), pv["toe/pos"]);
      Var h = omninet_tape(tape, e, pv, "toe", config.toe);
      temporal[slot] = tape.mean_rows(h);
    }
  }

  // Spatial encoder over the 10-player set (team features already folded into
  // each spatial vector).
  Var spatial_tokens = tape.leaf(rows_to_mat(encoded.spatial));
  Var spatial_out;
  if (config.soe_mlp) {
    spatial_out = mlp2(tape, spatial_tokens, pv["soe/mlp/w1"], pv["soe/mlp/b1"], pv["soe/mlp/w2"],
                       pv["soe/mlp/b2"]);
  } else {
    Var e = linear(tape, spatial_tokens, pv["soe/embed/w"], pv["soe/embed/b"]);
    spatial_out = omninet_tape(tape, e, pv, "soe", config.soe);
  }

  // One token per slot, canonical order.
  std::vector<Var> slot_tokens(kPlayersPerMatch);
  for (int slot = 0; slot < kPlayersPerMatch; ++slot) {
    slot_tokens[slot] =
        tape.concat_cols({temporal[slot], tape.slice_rows(spatial_out, slot, 1)});
  }
  Var tokens = tape.concat_rows(slot_tokens);

  Var pooled;
  if (config.poe_mlp) {
    Var flat = tape.reshape_row(tokens);
    pooled = mlp2(tape, flat, pv["poe/mlp/w1"], pv["poe/mlp/b1"], pv["poe/mlp/w2"],
                  pv["poe/mlp/b2"]);
  } else {
    Var proj = tape.add(linear(tape, tokens, pv["poe/proj/w"], pv["poe/proj/b"]), pv["poe/pos"]);
    Var h = omninet_tape(tape, proj, pv, "poe", config.poe);
    pooled = tape.mean_rows(h);
  }

  Var h1 = tape.relu(linear(tape, pooled, pv["head/w1"], pv["head/b1"]));
  Var h2 = tape.relu(linear(tape, h1, pv["head/w2"], pv["head/b2"]));
  return linear(tape, h2, pv["head/w3"], pv["head/b3"]);
}

double WinRateModel::predict(const EncodedMatch& encoded) const {
  Tape tape;
  std::vector<Var> vars;
  Var z = predict_logit(tape, encoded, vars);
  return sigmoid(tape.val(z).at(0, 0));
}

// ---------------------------------------------------------------------------
// Artifact container

namespace {

constexpr char kMagic[8] = {'R', 'M', 'A', 'R', 'T', 'I', 'F', '1'};
constexpr uint32_t kFormatVersion = 1;

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw LoadError("artifact truncated");
  return v;
}

void write_artifact(const std::string& path, const std::string& kind, const json& meta,
                    const ParamStore& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw LoadError("cannot open artifact for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_pod<uint32_t>(os, kFormatVersion);
  json full = meta;
  full["kind"] = kind;
  const std::string blob = full.dump();
  write_pod<uint64_t>(os, blob.size());
  os.write(blob.data(), blob.size());
  write_pod<uint64_t>(os, tensors.items.size());
  for (const auto& [name, t] : tensors.items) {
    write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), name.size());
    write_pod<uint32_t>(os, static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) write_pod<uint64_t>(os, static_cast<uint64_t>(d));
    os.write(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(double));
  }
  if (!os) throw LoadError("failed writing artifact: " + path);
}

std::pair<json, ParamStore> read_artifact(const std::string& path, const std::string& want_kind) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open artifact: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw LoadError("bad artifact magic in " + path);
  }
  const uint32_t version = read_pod<uint32_t>(is);
  if (version != kFormatVersion) {
    throw LoadError("unsupported artifact version " + std::to_string(version));
  }
  const uint64_t meta_len = read_pod<uint64_t>(is);
  std::string blob(meta_len, '\0');
  is.read(blob.data(), meta_len);
  if (!is) throw LoadError("artifact truncated");
  json meta;
  try {
    meta = json::parse(blob);
  } catch (const json::exception& e) {
    throw LoadError(std::string("corrupt artifact metadata: ") + e.what());
  }
  if (meta.value("kind", "") != want_kind) {
    throw LoadError("artifact kind mismatch: expected " + want_kind);
  }
  ParamStore store;
  const uint64_t count = read_pod<uint64_t>(is);
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_pod<uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw LoadError("artifact truncated");
    const uint32_t ndim = read_pod<uint32_t>(is);
    std::vector<int> shape(ndim);
    size_t total = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      shape[d] = static_cast<int>(read_pod<uint64_t>(is));
      total *= static_cast<size_t>(shape[d]);
    }
    Tensor t{std::move(shape), std::vector<double>(total)};
    is.read(reinterpret_cast<char*>(t.data.data()), total * sizeof(double));
    if (!is) throw LoadError("artifact truncated");
    store.items.emplace_back(std::move(name), std::move(t));
  }
  return {std::move(meta), std::move(store)};
}

json omninet_to_json(const OmniNetConfig& c) {
  return {{"layers", c.layers}, {"width", c.width}, {"heads", c.heads}, {"ffn_mult", c.ffn_mult}};
}

OmniNetConfig omninet_from_json(const json& j) {
  OmniNetConfig c;
  c.layers = j.at("layers");
  c.width = j.at("width");
  c.heads = j.at("heads");
  c.ffn_mult = j.at("ffn_mult");
  return c;
}

// Bucket edges travel as binary tensors so encodings stay bit-identical.
void encoder_to_artifact(const EncoderConfig& enc, json& meta, ParamStore& tensors) {
  meta["encoder"] = {{"short_term_window", enc.short_term_window},
                     {"champion_vocab", enc.champion_vocab},
                     {"top_champion_slots", enc.top_champion_slots},
                     {"bins", enc.bins}};
  std::vector<std::string> names;
  for (const auto& [name, spec] : enc.buckets) {
    names.push_back(name);
    Tensor& t = tensors.emplace("encoder/bucket/" + name,
                                {static_cast<int>(spec.edges.size())});
    t.data = spec.edges;
  }
  meta["encoder"]["bucket_features"] = names;
}

EncoderConfig encoder_from_artifact(const json& meta, const ParamStore& tensors) {
  EncoderConfig enc;
  const json& j = meta.at("encoder");
  enc.short_term_window = j.at("short_term_window");
  enc.champion_vocab = j.at("champion_vocab");
  enc.top_champion_slots = j.at("top_champion_slots");
  enc.bins = j.at("bins");
  for (const auto& name : j.at("bucket_features")) {
    const Tensor& t = tensors.at("encoder/bucket/" + name.get<std::string>());
    enc.buckets[name.get<std::string>()] = BucketSpec{t.data};
  }
  enc.validate();
  return enc;
}

}  // namespace

void WinRateModel::save(const std::string& path) const {
  json meta;
  meta["model"] = {{"toe", omninet_to_json(config.toe)},
                   {"soe", omninet_to_json(config.soe)},
                   {"poe", omninet_to_json(config.poe)},
                   {"head_hidden1", config.head_hidden1},
                   {"head_hidden2", config.head_hidden2},
                   {"toe_mlp", config.toe_mlp},
                   {"soe_mlp", config.soe_mlp},
                   {"poe_mlp", config.poe_mlp}};
  ParamStore tensors = params;
  encoder_to_artifact(config.encoder, meta, tensors);
  write_artifact(path, "win-rate-model", meta, tensors);
}

WinRateModel WinRateModel::load(const std::string& path) {
  auto [meta, tensors] = read_artifact(path, "win-rate-model");
  WinRateModel m;
  try {
    const json& j = meta.at("model");
    m.config.toe = omninet_from_json(j.at("toe"));
    m.config.soe = omninet_from_json(j.at("soe"));
    m.config.poe = omninet_from_json(j.at("poe"));
    m.config.head_hidden1 = j.at("head_hidden1");
    m.config.head_hidden2 = j.at("head_hidden2");
    m.config.toe_mlp = j.at("toe_mlp");
    m.config.soe_mlp = j.at("soe_mlp");
    m.config.poe_mlp = j.at("poe_mlp");
    m.config.encoder = encoder_from_artifact(meta, tensors);
  } catch (const json::exception& e) {
    throw LoadError(std::string("corrupt artifact metadata: ") + e.what());
  }
  m.config.validate();
  // Keep only model parameters, in the canonical build order, and check that
  // the artifact agrees with the declared configuration.
  ParamStore expected = build_params(m.config);
  for (auto& [name, t] : expected.items) {
    const Tensor& loaded = tensors.at(name);
    if (loaded.shape != t.shape) throw LoadError("tensor shape mismatch for " + name);
    t.data = loaded.data;
  }
  m.params = std::move(expected);
  return m;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct Adam {
  double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long long t = 0;
  std::vector<double> m, v;

  explicit Adam(size_t n, double lr_) : lr(lr_), m(n, 0.0), v(n, 0.0) {}

  void step(std::vector<double*>& param_scalars, const std::vector<double>& grad) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    for (size_t i = 0; i < grad.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      *param_scalars[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
  }
};

void check_train_config(const TrainConfig& cfg) {
  // lr == 0 is allowed as an explicit no-op diagnostic mode.
  if (cfg.learning_rate != 0.0 &&
      !(cfg.learning_rate >= 1e-6 && cfg.learning_rate <= 1e-1)) {
    throw ConfigError("learning rate outside [1e-6, 1e-1]");
  }
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw ConfigError("epochs and batch size must be >= 1");
  if (!(cfg.val_fraction >= 0.0 && cfg.val_fraction < 1.0)) {
    throw ConfigError("validation fraction outside [0,1)");
  }
}

struct Prepared {
  std::vector<EncodedMatch> encoded;
  std::vector<int> labels;
  std::vector<double> pos_w, neg_w;
  std::vector<size_t> train_idx, val_idx;
};

Prepared prepare(const std::vector<MatchRecord>& records, const EncoderConfig& enc,
                 const TrainConfig& cfg, int workers) {
  if (records.empty()) throw StructuralError("training needs a non-empty dataset");
  Prepared p;
  const size_t n = records.size();
  p.encoded.resize(n);
  p.labels.resize(n);
  p.pos_w.resize(n);
  p.neg_w.resize(n);
  parallel_chunks(n, workers, [&](size_t, size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) {
      if (!records[i].labeled) throw StructuralError("unlabeled record in training data");
      p.encoded[i] = encode_record(records[i], enc);
      p.labels[i] = records[i].outcome;
      double alpha = 0.0;
      if (cfg.loss != LossKind::BCE) alpha = economy_alpha(records[i].te_blue, records[i].te_red);
      auto [pw, nw] = loss_weights(cfg.loss, alpha);
      p.pos_w[i] = pw;
      p.neg_w[i] = nw;
    }
  });
  const size_t val_n = static_cast<size_t>(n * cfg.val_fraction);
  for (size_t i = 0; i < n - val_n; ++i) p.train_idx.push_back(i);
  for (size_t i = n - val_n; i < n; ++i) p.val_idx.push_back(i);
  return p;
}

}  // namespace

TrainLog train(WinRateModel& model, const std::vector<MatchRecord>& records,
               const TrainConfig& config) {
  check_train_config(config);
  const int workers = config.threads > 0 ? config.threads : default_workers();
  Prepared data = prepare(records, model.config.encoder, config, workers);

  // Flat views over every parameter scalar, in store order.
  std::vector<double*> scalars;
  for (auto& [name, t] : model.params.items) {
    for (double& v : t.data) scalars.push_back(&v);
  }
  const size_t n_params = scalars.size();
  Adam adam(n_params, config.learning_rate);
  TrainLog log;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<size_t> order = data.train_idx;
    std::mt19937_64 shuffle_rng(config.seed * 1000003ull + epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    size_t epoch_count = 0;
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      const size_t end = std::min(order.size(), start + size_t(config.batch_size));
      const size_t batch_n = end - start;
      auto ranges = chunk_ranges(batch_n, workers);
      std::vector<std::vector<double>> chunk_grad(ranges.size(),
                                                  std::vector<double>(n_params, 0.0));
      std::vector<double> chunk_loss(ranges.size(), 0.0);
      parallel_chunks(batch_n, workers, [&](size_t c, size_t begin, size_t stop) {
        for (size_t k = begin; k < stop; ++k) {
          const size_t i = order[start + k];
          Tape tape;
          std::vector<Var> vars;
          Var z = model.predict_logit(tape, data.encoded[i], vars);
          Var loss = tape.weighted_bce_with_logit(z, data.labels[i], data.pos_w[i],
                                                  data.neg_w[i]);
          tape.backward(loss);
          chunk_loss[c] += tape.val(loss).at(0, 0);
          size_t off = 0;
          for (Var pv : vars) {
            const Mat& g = tape.grad(pv);
            for (size_t s = 0; s < g.size(); ++s) chunk_grad[c][off + s] += g.a[s];
            off += g.size();
          }
        }
      });
      std::vector<double> grad(n_params, 0.0);
      for (const auto& cg : chunk_grad) {
        for (size_t i = 0; i < n_params; ++i) grad[i] += cg[i];
      }
      for (double& g : grad) g /= batch_n;
      for (double l : chunk_loss) epoch_loss += l;
      epoch_count += batch_n;
      adam.step(scalars, grad);
    }
    const double mean_loss = epoch_count ? epoch_loss / epoch_count : 0.0;
    if (!std::isfinite(mean_loss)) {
      throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                         "; last finite epoch " + std::to_string(epoch - 1));
    }
    log.train_loss.push_back(mean_loss);

    double correct = 0.0;
    if (!data.val_idx.empty()) {
      std::vector<double> preds(data.val_idx.size());
      parallel_chunks(data.val_idx.size(), workers, [&](size_t, size_t begin, size_t stop) {
        for (size_t k = begin; k < stop; ++k) {
          preds[k] = model.predict(data.encoded[data.val_idx[k]]);
        }
      });
      for (size_t k = 0; k < data.val_idx.size(); ++k) {
        const int pred = preds[k] > 0.5 ? 1 : 0;
        if (pred == data.labels[data.val_idx[k]]) correct += 1.0;
      }
      correct /= data.val_idx.size();
    }
    log.val_accuracy.push_back(correct);
  }
  return log;
}

double grad_check(const WinRateModel& model, const MatchRecord& record, LossKind loss) {
  const EncodedMatch enc = encode_record(record, model.config.encoder);
  const int y = record.outcome;
  double alpha = 0.0;
  if (loss != LossKind::BCE) alpha = economy_alpha(record.te_blue, record.te_red);
  auto [pos_w, neg_w] = loss_weights(loss, alpha);

  Tape tape;
  std::vector<Var> vars;
  WinRateModel work = model;
  Var z = work.predict_logit(tape, enc, vars);
  Var l = tape.weighted_bce_with_logit(z, y, pos_w, neg_w);
  tape.backward(l);
  std::vector<double> analytic;
  for (Var v : vars) {
    const Mat& g = tape.grad(v);
    analytic.insert(analytic.end(), g.a.begin(), g.a.end());
  }

  auto loss_value = [&]() {
    Tape t2;
    std::vector<Var> unused;
    Var zz = work.predict_logit(t2, enc, unused);
    return logit_loss(t2.val(zz).at(0, 0), y, pos_w, neg_w);
  };

  const double h = 1e-4;
  double max_rel = 0.0;
  size_t flat = 0;
  auto central = [&](double& p, double saved, double step) {
    p = saved + step;
    const double up = loss_value();
    p = saved - step;
    const double down = loss_value();
    p = saved;
    return (up - down) / (2.0 * step);
  };
  for (auto& [name, t] : work.params.items) {
    for (double& p : t.data) {
      const double g = analytic[flat++];
      if (std::abs(g) <= 1e-6) continue;
      const double saved = p;
      const double fd = central(p, saved, h);
      const double fd_half = central(p, saved, 0.5 * h);
      // A ReLU kink inside the stencil breaks the quadratic error model and
      // makes the estimate itself wrong; require step-size agreement before
      // trusting it.
      if (std::abs(fd - fd_half) >
          1e-3 * std::max({1.0, std::abs(fd), std::abs(fd_half)})) {
        continue;
      }
      // Richardson step: cancels the quadratic truncation term, which alone
      // can exceed the tolerance where the loss has strong curvature.
      const double fd_best = (4.0 * fd_half - fd) / 3.0;
      const double rel = std::abs(g - fd_best) / std::max(std::abs(g), std::abs(fd_best));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

// ---------------------------------------------------------------------------
// Logistic baseline

LogisticModel LogisticModel::init(EncoderConfig enc) {
  enc.validate();
  LogisticModel m;
  m.encoder = std::move(enc);
  m.weights.assign(m.encoder.flat_dim(), 0.0);
  return m;
}

double LogisticModel::predict(const EncodedMatch& encoded) const {
  check_encoding_dims(encoded, encoder);
  const std::vector<double> x = encoded.flatten();
  if (x.size() != weights.size()) throw StructuralError("flat encoding dimension mismatch");
  double z = bias;
  for (size_t i = 0; i < x.size(); ++i) z += weights[i] * x[i];
  return sigmoid(z);
}

void LogisticModel::save(const std::string& path) const {
  json meta;
  ParamStore tensors;
  Tensor& w = tensors.emplace("lr/weights", {static_cast<int>(weights.size())});
  w.data = weights;
  Tensor& b = tensors.emplace("lr/bias", {1});
  b.data = {bias};
  encoder_to_artifact(encoder, meta, tensors);
  write_artifact(path, "logistic-model", meta, tensors);
}

LogisticModel LogisticModel::load(const std::string& path) {
  auto [meta, tensors] = read_artifact(path, "logistic-model");
  LogisticModel m;
  m.encoder = encoder_from_artifact(meta, tensors);
  m.weights = tensors.at("lr/weights").data;
  m.bias = tensors.at("lr/bias").data.at(0);
  if (static_cast<int>(m.weights.size()) != m.encoder.flat_dim()) {
    throw LoadError("logistic weight count does not match encoder dimensions");
  }
  return m;
}

TrainLog train(LogisticModel& model, const std::vector<MatchRecord>& records,
               const TrainConfig& config) {
  check_train_config(config);
  const int workers = config.threads > 0 ? config.threads : default_workers();

  // All encoded features are one-hot/multi-hot flags; sparse index lists are
  // the whole input.
  const size_t n = records.size();
  if (n == 0) throw StructuralError("training needs a non-empty dataset");
  std::vector<std::vector<int>> sparse(n);
  std::vector<int> labels(n);
  std::vector<double> pos_w(n), neg_w(n);
  parallel_chunks(n, workers, [&](size_t, size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) {
      if (!records[i].labeled) throw StructuralError("unlabeled record in training data");
      const std::vector<double> x = encode_record(records[i], model.encoder).flatten();
      for (size_t j = 0; j < x.size(); ++j) {
        if (x[j] != 0.0) sparse[i].push_back(static_cast<int>(j));
      }
      labels[i] = records[i].outcome;
      double alpha = 0.0;
      if (config.loss != LossKind::BCE) alpha = economy_alpha(records[i].te_blue, records[i].te_red);
      auto [pw, nw] = loss_weights(config.loss, alpha);
      pos_w[i] = pw;
      neg_w[i] = nw;
    }
  });
  const size_t val_n = static_cast<size_t>(n * config.val_fraction);
  const size_t train_n = n - val_n;

  const size_t n_params = model.weights.size() + 1;  // + bias
  Adam adam(n_params, config.learning_rate);
  std::vector<double*> scalars;
  scalars.reserve(n_params);
  for (double& w : model.weights) scalars.push_back(&w);
  scalars.push_back(&model.bias);

  TrainLog log;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<size_t> order(train_n);
    for (size_t i = 0; i < train_n; ++i) order[i] = i;
    std::mt19937_64 shuffle_rng(config.seed * 1000003ull + epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    std::vector<double> grad(n_params);
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      const size_t end = std::min(order.size(), start + size_t(config.batch_size));
      const size_t batch_n = end - start;
      std::fill(grad.begin(), grad.end(), 0.0);
      for (size_t k = start; k < end; ++k) {
        const size_t i = order[k];
        double z = model.bias;
        for (int j : sparse[i]) z += model.weights[j];
        epoch_loss += logit_loss(z, labels[i], pos_w[i], neg_w[i]);
        const double s = sigmoid(z);
        const double dz = pos_w[i] * labels[i] * (s - 1.0) + neg_w[i] * (1 - labels[i]) * s;
        for (int j : sparse[i]) grad[j] += dz;
        grad[n_params - 1] += dz;
      }
      for (double& g : grad) g /= batch_n;
      adam.step(scalars, grad);
    }
    const double mean_loss = train_n ? epoch_loss / train_n : 0.0;
    if (!std::isfinite(mean_loss)) {
      throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                         "; last finite epoch " + std::to_string(epoch - 1));
    }
    log.train_loss.push_back(mean_loss);

    double correct = 0.0;
    for (size_t i = train_n; i < n; ++i) {
      double z = model.bias;
      for (int j : sparse[i]) z += model.weights[j];
      const int pred = sigmoid(z) > 0.5 ? 1 : 0;
      if (pred == labels[i]) correct += 1.0;
    }
    log.val_accuracy.push_back(val_n ? correct / val_n : 0.0);
  }
  return log;
}

}  // namespace rematch
