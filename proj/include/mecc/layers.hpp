#pragma once
// Neural network building blocks. Every layer registers its parameters in a
// ParamSet under "<prefix>.<field>" at construction and is immutable
// afterwards (parameters change only through an optimizer). Sequences are
// rank-2 tensors [time, features]; batching happens one level up.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mecc/ops.hpp"
#include "mecc/param.hpp"
#include "mecc/types.hpp"

namespace mecc {

struct AttentionConfig {
  std::size_t model_dim = 32;
  std::size_t num_heads = 4;
  bool causal = false;
  bool rotary = true;
  double rotary_base = 10000.0;

  std::size_t head_dim() const { return model_dim / num_heads; }
  // Throws std::invalid_argument on a non-divisible model_dim or an odd
  // head_dim with rotary enabled.
  void validate() const;
};

struct ConformerConfig {
  std::size_t model_dim = 32;
  std::size_t num_heads = 4;
  std::size_t conv_kernel = 5;
  std::size_t ff_expansion = 4;
  double dropout = 0.0;

  void validate() const;
};

class Linear {
 public:
  Linear(ParamSet& params, const std::string& name, std::size_t in, std::size_t out,
         std::mt19937_64& rng, bool bias = true);

  Var operator()(const Var& x) const;

  Parameter& weight() const { return *weight_; }
  Parameter* bias() const { return bias_; }
  std::size_t in_dim() const { return in_; }
  std::size_t out_dim() const { return out_; }

 private:
  Parameter* weight_;  // [in, out]
  Parameter* bias_ = nullptr;
  std::size_t in_, out_;
};

class LayerNorm {
 public:
  LayerNorm(ParamSet& params, const std::string& name, std::size_t dim);
  Var operator()(const Var& x) const;

 private:
  Parameter* gamma_;
  Parameter* beta_;
};

// Token embedding lookup: row i of the weight matrix, times scale_factor.
class EmbeddingTable {
 public:
  EmbeddingTable(ParamSet& params, const std::string& name, std::size_t vocab_size,
                 std::size_t embed_dim, std::mt19937_64& rng, double scale_factor = 1.0);

  // Throws std::out_of_range for ids outside [0, vocab_size).
  Var lookup(std::span<const TokenId> ids) const;

  std::size_t vocab_size() const { return vocab_; }
  std::size_t embed_dim() const { return dim_; }
  double scale_factor() const { return scale_; }
  Parameter& weight() const { return *weight_; }

 private:
  Parameter* weight_;  // [vocab, dim]
  std::size_t vocab_, dim_;
  double scale_;
};

// Pre-norm position-wise feed-forward: LN -> linear -> swish -> linear.
class FeedForward {
 public:
  FeedForward(ParamSet& params, const std::string& name, std::size_t dim, std::size_t hidden,
              std::mt19937_64& rng, double dropout = 0.0);
  Var operator()(const Var& x, std::mt19937_64* dropout_rng = nullptr) const;

 private:
  LayerNorm norm_;
  Linear up_;
  Linear down_;
  double dropout_;
};

// Scaled dot-product attention over num_heads heads. With rotary enabled the
// query and key heads are rotated by their sequence positions first.
class MultiHeadAttention {
 public:
  MultiHeadAttention(ParamSet& params, const std::string& name, const AttentionConfig& config,
                     std::mt19937_64& rng);

  // query: [Tq, D], memory: [Tk, D]. key_mask (optional, Tk entries):
  // nonzero = that key position is disallowed for every query.
  Var operator()(const Var& query, const Var& memory,
                 std::span<const std::uint8_t> key_mask = {}) const;

  const AttentionConfig& config() const { return config_; }
  Linear& query_proj() { return wq_; }
  Linear& key_proj() { return wk_; }
  Linear& value_proj() { return wv_; }
  Linear& output_proj() { return wo_; }

 private:
  AttentionConfig config_;
  Linear wq_, wk_, wv_, wo_;
};

// Macaron conformer block: half-step FF, rotary self-attention, convolution
// module (pointwise + GLU, depthwise conv, norm, swish, pointwise), half-step
// FF, final layer norm. Output shape equals input shape.
class ConformerBlock {
 public:
  ConformerBlock(ParamSet& params, const std::string& name, const ConformerConfig& config,
                 std::mt19937_64& rng);
  Var operator()(const Var& x, std::mt19937_64* dropout_rng = nullptr) const;

 private:
  ConformerConfig config_;
  FeedForward ff1_;
  LayerNorm attn_norm_;
  MultiHeadAttention attn_;
  LayerNorm conv_norm_;
  Linear conv_pointwise_in_;
  Parameter* conv_depthwise_weight_;
  Parameter* conv_depthwise_bias_;
  LayerNorm conv_inner_norm_;
  Linear conv_pointwise_out_;
  FeedForward ff2_;
  LayerNorm final_norm_;
};

class TransformerEncoderLayer {
 public:
  TransformerEncoderLayer(ParamSet& params, const std::string& name, std::size_t dim,
                          std::size_t heads, std::size_t ff_hidden, std::mt19937_64& rng,
                          double dropout = 0.0);
  Var operator()(const Var& x, std::mt19937_64* dropout_rng = nullptr) const;

 private:
  LayerNorm attn_norm_;
  MultiHeadAttention attn_;
  FeedForward ff_;
  double dropout_;
};

class TransformerDecoderLayer {
 public:
  TransformerDecoderLayer(ParamSet& params, const std::string& name, std::size_t dim,
                          std::size_t heads, std::size_t ff_hidden, std::mt19937_64& rng,
                          double dropout = 0.0);
  // Throws std::invalid_argument when memory is undefined.
  Var operator()(const Var& x, const Var& memory, std::mt19937_64* dropout_rng = nullptr) const;

 private:
  LayerNorm self_norm_;
  MultiHeadAttention self_attn_;
  LayerNorm cross_norm_;
  MultiHeadAttention cross_attn_;
  FeedForward ff_;
  double dropout_;
};

// Sum over non-ignored rows of the label-smoothed negative log-likelihood,
// with (1 - smoothing) on the target and smoothing / V spread over all V
// classes. `count` is the number of rows that contributed.
struct SmoothedNll {
  Var total;
  std::size_t count = 0;
};
SmoothedNll label_smoothed_nll(const Var& logits, std::span<const TokenId> targets,
                               double smoothing, std::optional<TokenId> ignore_id = std::nullopt);

// Mean of the above over contributing rows; zero when no row contributes.
Var cross_entropy_label_smoothed(const Var& logits, std::span<const TokenId> targets,
                                 double smoothing = 0.1,
                                 std::optional<TokenId> ignore_id = std::nullopt);

}  // namespace mecc
