#include "mecc/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace mecc {

void AttentionConfig::validate() const {
  if (num_heads == 0 || model_dim % num_heads != 0) {
    throw std::invalid_argument("attention: model_dim " + std::to_string(model_dim) +
                                " is not divisible by num_heads " + std::to_string(num_heads));
  }
  if (rotary && head_dim() % 2 != 0) {
    throw std::invalid_argument("attention: rotary needs an even head_dim, got " +
                                std::to_string(head_dim()));
  }
}

void ConformerConfig::validate() const {
  if (conv_kernel % 2 == 0) {
    throw std::invalid_argument("conformer: conv_kernel must be odd, got " +
                                std::to_string(conv_kernel));
  }
  AttentionConfig{model_dim, num_heads, false, true}.validate();
}

Linear::Linear(ParamSet& params, const std::string& name, std::size_t in, std::size_t out,
               std::mt19937_64& rng, bool bias)
    : weight_(&params.add_glorot(name + ".weight", in, out, rng)), in_(in), out_(out) {
  if (bias) bias_ = &params.add_filled(name + ".bias", Shape{out}, 0.0);
}

Var Linear::operator()(const Var& x) const {
  Var y = ops::matmul(x, weight_->var());
  return bias_ ? ops::add(y, bias_->var()) : y;
}

LayerNorm::LayerNorm(ParamSet& params, const std::string& name, std::size_t dim)
    : gamma_(&params.add_filled(name + ".gamma", Shape{dim}, 1.0)),
      beta_(&params.add_filled(name + ".beta", Shape{dim}, 0.0)) {}

Var LayerNorm::operator()(const Var& x) const {
  return ops::layer_norm(x, gamma_->var(), beta_->var());
}

EmbeddingTable::EmbeddingTable(ParamSet& params, const std::string& name,
                               std::size_t vocab_size, std::size_t embed_dim,
                               std::mt19937_64& rng, double scale_factor)
    : vocab_(vocab_size), dim_(embed_dim), scale_(scale_factor) {
  Tensor w(Shape{vocab_size, embed_dim}, params.dtype());
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(embed_dim)));
  for (std::size_t i = 0; i < w.numel(); ++i) w.set(i, dist(rng));
  weight_ = &params.add(name + ".weight", std::move(w));
}

Var EmbeddingTable::lookup(std::span<const TokenId> ids) const {
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_) {
      throw std::out_of_range("embedding lookup: token id " + std::to_string(id) +
                              " outside vocabulary of size " + std::to_string(vocab_));
    }
    rows.push_back(static_cast<std::size_t>(id));
  }
  Var out = ops::gather_rows(weight_->var(), rows);
  return scale_ == 1.0 ? out : ops::scale(out, scale_);
}

FeedForward::FeedForward(ParamSet& params, const std::string& name, std::size_t dim,
                         std::size_t hidden, std::mt19937_64& rng, double dropout)
    : norm_(params, name + ".norm", dim),
      up_(params, name + ".up", dim, hidden, rng),
      down_(params, name + ".down", hidden, dim, rng),
      dropout_(dropout) {}

Var FeedForward::operator()(const Var& x, std::mt19937_64* dropout_rng) const {
  Var h = ops::silu(up_(norm_(x)));
  h = ops::dropout(h, dropout_rng ? dropout_ : 0.0, dropout_rng);
  return down_(h);
}

MultiHeadAttention::MultiHeadAttention(ParamSet& params, const std::string& name,
                                       const AttentionConfig& config, std::mt19937_64& rng)
    : config_((config.validate(), config)),
      wq_(params, name + ".query", config.model_dim, config.model_dim, rng),
      wk_(params, name + ".key", config.model_dim, config.model_dim, rng),
      wv_(params, name + ".value", config.model_dim, config.model_dim, rng),
      wo_(params, name + ".output", config.model_dim, config.model_dim, rng) {}

Var MultiHeadAttention::operator()(const Var& query, const Var& memory,
                                   std::span<const std::uint8_t> key_mask) const {
  const std::size_t dim = config_.model_dim;
  if (query.value().rank() != 2 || memory.value().rank() != 2 || query.dim(1) != dim ||
      memory.dim(1) != dim) {
    throw std::invalid_argument("attention: query " + shape_str(query.shape()) + " and memory " +
                                shape_str(memory.shape()) + " must both have width " +
                                std::to_string(dim));
  }
  const std::size_t tq = query.dim(0), tk = memory.dim(0);
  if (!key_mask.empty() && key_mask.size() != tk) {
    throw std::invalid_argument("attention: key mask of size " + std::to_string(key_mask.size()) +
                                " for " + std::to_string(tk) + " keys");
  }
  std::vector<std::uint8_t> mask;
  if (config_.causal || !key_mask.empty()) {
    mask.assign(tq * tk, 0);
    for (std::size_t i = 0; i < tq; ++i) {
      for (std::size_t j = 0; j < tk; ++j) {
        mask[i * tk + j] = (config_.causal && j > i) || (!key_mask.empty() && key_mask[j]);
      }
    }
  }
  std::vector<std::int64_t> pos_q(tq), pos_k(tk);
  for (std::size_t i = 0; i < tq; ++i) pos_q[i] = static_cast<std::int64_t>(i);
  for (std::size_t j = 0; j < tk; ++j) pos_k[j] = static_cast<std::int64_t>(j);

  Var q = wq_(query);
  Var k = wk_(memory);
  Var v = wv_(memory);
  const std::size_t hd = config_.head_dim();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<Var> heads;
  heads.reserve(config_.num_heads);
  for (std::size_t h = 0; h < config_.num_heads; ++h) {
    Var qh = ops::slice(q, 1, h * hd, hd);
    Var kh = ops::slice(k, 1, h * hd, hd);
    Var vh = ops::slice(v, 1, h * hd, hd);
    if (config_.rotary) {
      qh = ops::rotary(qh, pos_q, config_.rotary_base);
      kh = ops::rotary(kh, pos_k, config_.rotary_base);
    }
    Var scores = ops::scale(ops::matmul(qh, ops::transpose(kh)), inv_sqrt);
    if (!mask.empty()) scores = ops::masked_fill(scores, mask, -1e9);
    heads.push_back(ops::matmul(ops::softmax(scores), vh));
  }
  Var merged = heads.size() == 1 ? heads[0] : ops::concat(heads, 1);
  return wo_(merged);
}

ConformerBlock::ConformerBlock(ParamSet& params, const std::string& name,
                               const ConformerConfig& config, std::mt19937_64& rng)
    : config_((config.validate(), config)),
      ff1_(params, name + ".ff1", config.model_dim, config.model_dim * config.ff_expansion, rng,
           config.dropout),
      attn_norm_(params, name + ".attn_norm", config.model_dim),
      attn_(params, name + ".attn", AttentionConfig{config.model_dim, config.num_heads, false, true},
            rng),
      conv_norm_(params, name + ".conv_norm", config.model_dim),
      conv_pointwise_in_(params, name + ".conv_pw_in", config.model_dim, 2 * config.model_dim, rng),
      conv_depthwise_weight_(&params.add_uniform(
          name + ".conv_dw.weight", Shape{config.conv_kernel, config.model_dim},
          1.0 / std::sqrt(static_cast<double>(config.conv_kernel)), rng)),
      conv_depthwise_bias_(&params.add_filled(name + ".conv_dw.bias", Shape{config.model_dim}, 0.0)),
      conv_inner_norm_(params, name + ".conv_inner_norm", config.model_dim),
      conv_pointwise_out_(params, name + ".conv_pw_out", config.model_dim, config.model_dim, rng),
      ff2_(params, name + ".ff2", config.model_dim, config.model_dim * config.ff_expansion, rng,
           config.dropout),
      final_norm_(params, name + ".final_norm", config.model_dim) {}

Var ConformerBlock::operator()(const Var& x, std::mt19937_64* dropout_rng) const {
  Var h = ops::add(x, ops::scale(ff1_(x, dropout_rng), 0.5));
  Var a = attn_norm_(h);
  h = ops::add(h, attn_(a, a));
  Var c = ops::glu(conv_pointwise_in_(conv_norm_(h)));
  c = ops::depthwise_conv1d(c, conv_depthwise_weight_->var(), conv_depthwise_bias_->var());
  c = conv_pointwise_out_(ops::silu(conv_inner_norm_(c)));
  h = ops::add(h, c);
  h = ops::add(h, ops::scale(ff2_(h, dropout_rng), 0.5));
  return final_norm_(h);
}

TransformerEncoderLayer::TransformerEncoderLayer(ParamSet& params, const std::string& name,
                                                 std::size_t dim, std::size_t heads,
                                                 std::size_t ff_hidden, std::mt19937_64& rng,
                                                 double dropout)
    : attn_norm_(params, name + ".attn_norm", dim),
      attn_(params, name + ".attn", AttentionConfig{dim, heads, false, true}, rng),
      ff_(params, name + ".ff", dim, ff_hidden, rng, dropout),
      dropout_(dropout) {}

Var TransformerEncoderLayer::operator()(const Var& x, std::mt19937_64* dropout_rng) const {
  Var a = attn_norm_(x);
  Var h = ops::add(x, ops::dropout(attn_(a, a), dropout_rng ? dropout_ : 0.0, dropout_rng));
  return ops::add(h, ff_(h, dropout_rng));
}

TransformerDecoderLayer::TransformerDecoderLayer(ParamSet& params, const std::string& name,
                                                 std::size_t dim, std::size_t heads,
                                                 std::size_t ff_hidden, std::mt19937_64& rng,
                                                 double dropout)
    : self_norm_(params, name + ".self_norm", dim),
      self_attn_(params, name + ".self_attn", AttentionConfig{dim, heads, true, true}, rng),
      cross_norm_(params, name + ".cross_norm", dim),
      cross_attn_(params, name + ".cross_attn", AttentionConfig{dim, heads, false, false}, rng),
      ff_(params, name + ".ff", dim, ff_hidden, rng, dropout),
      dropout_(dropout) {}

Var TransformerDecoderLayer::operator()(const Var& x, const Var& memory,
                                        std::mt19937_64* dropout_rng) const {
  if (!memory.defined()) {
    throw std::invalid_argument("decoder layer: encoder output is required for cross-attention");
  }
  const double rate = dropout_rng ? dropout_ : 0.0;
  Var a = self_norm_(x);
  Var h = ops::add(x, ops::dropout(self_attn_(a, a), rate, dropout_rng));
  h = ops::add(h, ops::dropout(cross_attn_(cross_norm_(h), memory), rate, dropout_rng));
  return ops::add(h, ff_(h, dropout_rng));
}

SmoothedNll label_smoothed_nll(const Var& logits, std::span<const TokenId> targets,
                               double smoothing, std::optional<TokenId> ignore_id) {
  if (logits.value().rank() != 2 || logits.dim(0) != targets.size()) {
    throw std::invalid_argument("cross_entropy: logits " + shape_str(logits.shape()) + " for " +
                                std::to_string(targets.size()) + " targets");
  }
  const std::size_t vocab = logits.dim(1);
  std::vector<std::size_t> rows, ids;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (ignore_id && targets[i] == *ignore_id) continue;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= vocab) {
      throw std::out_of_range("cross_entropy: target id " + std::to_string(targets[i]) +
                              " outside vocabulary of size " + std::to_string(vocab));
    }
    rows.push_back(i);
    ids.push_back(static_cast<std::size_t>(targets[i]));
  }
  if (rows.empty()) {
    return {Var::constant(Tensor::scalar(0.0, logits.dtype())), 0};
  }
  Var kept = rows.size() == targets.size() ? logits : ops::gather_rows(logits, rows);
  Var logp = ops::log_softmax(kept);
  Var nll = ops::scale(ops::sum(ops::pick(logp, ids)), -(1.0 - smoothing));
  if (smoothing != 0.0) {
    nll = ops::sub(nll, ops::scale(ops::sum(ops::mean_last(logp)), smoothing));
  }
  return {nll, rows.size()};
}

Var cross_entropy_label_smoothed(const Var& logits, std::span<const TokenId> targets,
                                 double smoothing, std::optional<TokenId> ignore_id) {
  auto r = label_smoothed_nll(logits, targets, smoothing, ignore_id);
  if (r.count == 0) return r.total;
  return ops::scale(r.total, 1.0 / static_cast<double>(r.count));
}

}  // namespace mecc
