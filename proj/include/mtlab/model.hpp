#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "mtlab/graph.hpp"
#include "mtlab/rng.hpp"
#include "mtlab/tensor.hpp"

namespace mtlab {

// Reserved token ids shared by every task vocabulary.
inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kBosId = 1;
inline constexpr std::int32_t kEosId = 2;
inline constexpr std::int32_t kFirstPayloadId = 3;

// Pre-LayerNorm encoder-decoder transformer, sized for CPU-minutes runs.
// ff_dim/qkv_dim default to the usual 4x/1x ratios of model_dim.
struct ModelConfig {
  int encoder_layers = 2;
  int decoder_layers = 2;
  int model_dim = 64;
  int ff_dim = 256;
  int heads = 4;
  int qkv_dim = 64;
  int vocab_size = 64;
  int max_len = 64;
  double dropout = 0.1;
  double label_smoothing = 0.1;

  void validate() const {
    if (encoder_layers < 1 || decoder_layers < 1 || model_dim < 1 || ff_dim < 1 || heads < 1 ||
        qkv_dim < 1 || vocab_size < 2 || max_len < 1)
      throw std::invalid_argument("ModelConfig: non-positive dimension");
    if (model_dim % heads != 0 || qkv_dim % heads != 0)
      throw std::invalid_argument("ModelConfig: model_dim and qkv_dim must divide by heads");
    if (dropout < 0.0 || dropout >= 1.0 || label_smoothing < 0.0 || label_smoothing >= 1.0)
      throw std::invalid_argument("ModelConfig: rates must lie in [0,1)");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Named parameter set. Construction order fixes the name order, so two states
// built from the same config are shape-congruent tensor by tensor.
class ModelState {
 public:
  ModelState() = default;

  static ModelState init(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    ModelState s;
    s.config_ = config;
    Rng rng(seed, streams::init);
    const int d = config.model_dim;
    s.add_normal("embed", {static_cast<std::size_t>(config.vocab_size),
                           static_cast<std::size_t>(d)},
                 1.0 / std::sqrt(static_cast<double>(d)), rng);
    for (int l = 0; l < config.encoder_layers; ++l) {
      const std::string p = "enc" + std::to_string(l) + ".";
      s.add_layer_norm(p + "ln1");
      s.add_attention(p + "attn", rng);
      s.add_layer_norm(p + "ln2");
      s.add_ffn(p + "ffn", rng);
    }
    s.add_layer_norm("enc.ln_out");
    for (int l = 0; l < config.decoder_layers; ++l) {
      const std::string p = "dec" + std::to_string(l) + ".";
      s.add_layer_norm(p + "ln1");
      s.add_attention(p + "self", rng);
      s.add_layer_norm(p + "ln2");
      s.add_attention(p + "cross", rng);
      s.add_layer_norm(p + "ln3");
      s.add_ffn(p + "ffn", rng);
    }
    s.add_layer_norm("dec.ln_out");
    return s;
  }

  const ModelConfig& config() const { return config_; }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Tensor>& params() const { return params_; }
  std::vector<Tensor>& params() { return params_; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const Tensor& t : params_) n += t.size();
    return n;
  }

  const Tensor& param(const std::string& name) const { return params_[index_of(name)]; }
  Tensor& param(const std::string& name) { return params_[index_of(name)]; }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("ModelState: unknown parameter " + name);
    return it->second;
  }

  friend bool operator==(const ModelState& a, const ModelState& b) {
    return a.config_ == b.config_ && a.names_ == b.names_ && a.params_ == b.params_;
  }

 private:
  void add_param(std::string name, Tensor t) {
    index_[name] = params_.size();
    names_.push_back(std::move(name));
    params_.push_back(std::move(t));
  }
  void add_normal(std::string name, Shape shape, double stddev, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = stddev * rng.normal();
    add_param(std::move(name), std::move(t));
  }
  void add_linear(const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
    add_normal(prefix + ".w", {in, out},
               std::sqrt(2.0 / static_cast<double>(in + out)), rng);
    add_param(prefix + ".b", Tensor::zeros({out}));
  }
  void add_layer_norm(const std::string& prefix) {
    const auto d = static_cast<std::size_t>(config_.model_dim);
    add_param(prefix + ".g", Tensor::full({d}, 1.0));
    add_param(prefix + ".b", Tensor::zeros({d}));
  }
  void add_attention(const std::string& prefix, Rng& rng) {
    const auto d = static_cast<std::size_t>(config_.model_dim);
    const auto q = static_cast<std::size_t>(config_.qkv_dim);
    add_linear(prefix + ".q", d, q, rng);
    add_linear(prefix + ".k", d, q, rng);
    add_linear(prefix + ".v", d, q, rng);
    add_linear(prefix + ".o", q, d, rng);
  }
  void add_ffn(const std::string& prefix, Rng& rng) {
    const auto d = static_cast<std::size_t>(config_.model_dim);
    const auto f = static_cast<std::size_t>(config_.ff_dim);
    add_linear(prefix + ".w1", d, f, rng);
    add_linear(prefix + ".w2", f, d, rng);
  }

  ModelConfig config_;
  std::vector<std::string> names_;
  std::vector<Tensor> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class Mode { train, eval };

namespace detail {

inline Tensor sinusoidal_positions(std::size_t len, std::size_t dim) {
  Tensor pe = Tensor::zeros({len, dim});
  for (std::size_t pos = 0; pos < len; ++pos) {
    for (std::size_t i = 0; i < dim; i += 2) {
      const double angle =
          static_cast<double>(pos) /
          std::pow(10000.0, static_cast<double>(i) / static_cast<double>(dim));
      pe.data[pos * dim + i] = std::sin(angle);
      if (i + 1 < dim) pe.data[pos * dim + i + 1] = std::cos(angle);
    }
  }
  return pe;
}

// Additive attention mask, -1e30 on blocked (query, key) pairs; exp() of the
// shifted scores underflows to exactly zero there.
inline Tensor attention_mask(const TokenMatrix* key_pads, bool causal, std::size_t batch,
                             std::size_t heads, std::size_t q_len, std::size_t k_len) {
  Tensor m = Tensor::zeros({batch, heads, q_len, k_len});
  constexpr double kBlock = -1e30;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t q = 0; q < q_len; ++q)
        for (std::size_t k = 0; k < k_len; ++k) {
          const bool pad_block = key_pads && key_pads->at(b, k) == kPadId;
          const bool causal_block = causal && k > q;
          if (pad_block || causal_block)
            m.data[((b * heads + h) * q_len + q) * k_len + k] = kBlock;
        }
  return m;
}

}  // namespace detail

// Builds the forward graph and returns the logits node [B, T, V]. When
// param_nodes_out is non-null it receives one leaf per parameter, aligned
// with state.params(), for reading gradients after backward().
inline NodeId build_transformer_logits(Graph& g, const ModelState& state, const TokenMatrix& src,
                                       const TokenMatrix& tgt_in, Mode mode, Rng* dropout_rng,
                                       std::vector<NodeId>* param_nodes_out = nullptr) {
  const ModelConfig& cfg = state.config();
  const std::size_t batch = src.rows;
  if (tgt_in.rows != batch) throw std::invalid_argument("forward: batch size mismatch");
  const std::size_t s_len = src.cols;
  const std::size_t t_len = tgt_in.cols;
  if (s_len > static_cast<std::size_t>(cfg.max_len) ||
      t_len > static_cast<std::size_t>(cfg.max_len))
    throw std::invalid_argument("forward: sequence exceeds max_len " +
                                std::to_string(cfg.max_len));
  for (std::int32_t id : src.ids)
    if (id < 0 || id >= cfg.vocab_size) throw std::invalid_argument("forward: src id out of range");
  for (std::int32_t id : tgt_in.ids)
    if (id < 0 || id >= cfg.vocab_size) throw std::invalid_argument("forward: tgt id out of range");
  const bool training = mode == Mode::train;
  const double rate = training ? cfg.dropout : 0.0;
  if (rate > 0.0 && dropout_rng == nullptr)
    throw std::invalid_argument("forward: train mode with dropout needs an rng stream");

  // parameter leaves, aligned with the state's ordering
  std::vector<NodeId> pnodes;
  pnodes.reserve(state.params().size());
  for (const Tensor& p : state.params()) {
    Tensor t = p;
    t.requires_grad = training;
    pnodes.push_back(g.leaf(std::move(t)));
  }
  auto pn = [&](const std::string& name) { return pnodes[state.index_of(name)]; };
  auto drop = [&](NodeId x) { return rate > 0.0 ? g.dropout(x, rate, *dropout_rng) : x; };
  auto linear = [&](NodeId x, const std::string& prefix) {
    return g.add(g.matmul(x, pn(prefix + ".w")), pn(prefix + ".b"));
  };
  auto norm = [&](NodeId x, const std::string& prefix) {
    return g.layer_norm(x, pn(prefix + ".g"), pn(prefix + ".b"), 1e-6);
  };

  const auto d = static_cast<std::size_t>(cfg.model_dim);
  const auto h = static_cast<std::size_t>(cfg.heads);
  const auto dh = static_cast<std::size_t>(cfg.qkv_dim) / h;
  const double emb_scale = std::sqrt(static_cast<double>(d));

  auto split_heads = [&](NodeId x, std::size_t len) {
    // [B, L, Dq] -> [B*H, L, dh]
    NodeId r = g.reshape(x, {batch, len, h, dh});
    r = g.permute(r, {0, 2, 1, 3});
    return g.reshape(r, {batch * h, len, dh});
  };
  auto merge_heads = [&](NodeId x, std::size_t len) {
    NodeId r = g.reshape(x, {batch, h, len, dh});
    r = g.permute(r, {0, 2, 1, 3});
    return g.reshape(r, {batch, len, h * dh});
  };

  auto attention = [&](NodeId queries_in, NodeId keys_in, std::size_t q_len, std::size_t k_len,
                       NodeId mask, const std::string& prefix) {
    NodeId q = split_heads(linear(queries_in, prefix + ".q"), q_len);
    NodeId k = split_heads(linear(keys_in, prefix + ".k"), k_len);
    NodeId v = split_heads(linear(keys_in, prefix + ".v"), k_len);
    NodeId scores = g.scale(g.bmm(q, k, /*transpose_b=*/true),
                            1.0 / std::sqrt(static_cast<double>(dh)));
    scores = g.reshape(scores, {batch, h, q_len, k_len});
    scores = g.add(scores, mask);
    NodeId probs = drop(g.softmax_lastdim(scores));
    probs = g.reshape(probs, {batch * h, q_len, k_len});
    NodeId ctx = merge_heads(g.bmm(probs, v), q_len);
    return linear(ctx, prefix + ".o");
  };

  NodeId enc_mask = g.constant(detail::attention_mask(&src, false, batch, h, s_len, s_len));
  NodeId causal_mask = g.constant(detail::attention_mask(nullptr, true, batch, h, t_len, t_len));
  NodeId cross_mask = g.constant(detail::attention_mask(&src, false, batch, h, t_len, s_len));

  // encoder
  NodeId pos_s = g.constant(detail::sinusoidal_positions(s_len, d));
  NodeId x = g.scale(g.embedding(pn("embed"), src), emb_scale);
  x = drop(g.add(x, pos_s));
  for (int l = 0; l < cfg.encoder_layers; ++l) {
    const std::string p = "enc" + std::to_string(l) + ".";
    NodeId a = norm(x, p + "ln1");
    x = g.add(x, drop(attention(a, a, s_len, s_len, enc_mask, p + "attn")));
    NodeId f = drop(g.relu(linear(norm(x, p + "ln2"), p + "ffn.w1")));
    x = g.add(x, drop(linear(f, p + "ffn.w2")));
  }
  NodeId memory = norm(x, "enc.ln_out");

  // decoder
  NodeId pos_t = g.constant(detail::sinusoidal_positions(t_len, d));
  NodeId y = g.scale(g.embedding(pn("embed"), tgt_in), emb_scale);
  y = drop(g.add(y, pos_t));
  for (int l = 0; l < cfg.decoder_layers; ++l) {
    const std::string p = "dec" + std::to_string(l) + ".";
    NodeId a = norm(y, p + "ln1");
    y = g.add(y, drop(attention(a, a, t_len, t_len, causal_mask, p + "self")));
    NodeId c = norm(y, p + "ln2");
    y = g.add(y, drop(attention(c, memory, t_len, s_len, cross_mask, p + "cross")));
    NodeId f = drop(g.relu(linear(norm(y, p + "ln3"), p + "ffn.w1")));
    y = g.add(y, drop(linear(f, p + "ffn.w2")));
  }
  y = norm(y, "dec.ln_out");

  // tied output projection, scaled to keep initial logits near uniform
  NodeId logits = g.scale(g.matmul(y, pn("embed"), /*transpose_w=*/true),
                          1.0 / std::sqrt(static_cast<double>(d)));
  if (param_nodes_out) *param_nodes_out = std::move(pnodes);
  return logits;
}

// Per-token smoothed cross entropy of logits against tgt_out; pad positions
// are excluded from the mean.
inline NodeId sequence_loss(Graph& g, NodeId logits, const TokenMatrix& tgt_out,
                            double label_smoothing) {
  std::vector<std::uint8_t> mask(tgt_out.ids.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = tgt_out.ids[i] != kPadId;
  return g.smoothed_cross_entropy(logits, tgt_out, mask, label_smoothing);
}

// Deterministic eval-mode logits.
inline Tensor forward_logits(const ModelState& state, const TokenMatrix& src,
                             const TokenMatrix& tgt_in) {
  Graph g;
  NodeId logits = build_transformer_logits(g, state, src, tgt_in, Mode::eval, nullptr);
  return g.value(logits);
}

// Argmax decoding: append the most likely token per step, stop on EOS or
// max_len. Returns payload tokens only (no BOS/EOS).
inline std::vector<std::vector<std::int32_t>> greedy_decode(const ModelState& state,
                                                            const TokenMatrix& src,
                                                            int max_len,
                                                            std::int32_t start_token = kBosId) {
  if (max_len < 1) throw std::invalid_argument("greedy_decode: max_len must be at least 1");
  const std::size_t batch = src.rows;
  const auto v = static_cast<std::size_t>(state.config().vocab_size);
  std::vector<std::vector<std::int32_t>> out(batch);
  std::vector<bool> done(batch, false);
  TokenMatrix tgt_in(batch, 1, start_token);
  for (int step = 0; step < max_len; ++step) {
    Tensor logits = forward_logits(state, src, tgt_in);
    const std::size_t t = tgt_in.cols;
    TokenMatrix next(batch, t + 1, kPadId);
    bool all_done = true;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t j = 0; j < t; ++j) next.at(b, j) = tgt_in.at(b, j);
      const double* row = logits.data.data() + (b * t + (t - 1)) * v;
      std::size_t best = 0;
      for (std::size_t j = 1; j < v; ++j)
        if (row[j] > row[best]) best = j;
      const auto tok = static_cast<std::int32_t>(best);
      if (!done[b]) {
        if (tok == kEosId)
          done[b] = true;
        else
          out[b].push_back(tok);
      }
      next.at(b, t) = done[b] ? kPadId : tok;
      all_done = all_done && done[b];
    }
    if (all_done) break;
    tgt_in = std::move(next);
  }
  return out;
}

}  // namespace mtlab
