#pragma once
// ASR encoder + CTC head, exporter, MT encoder-decoder, and the two cascade
// paths that connect them.
//
// Parameter names are prefixed "asr.", "exporter." and "mt."; the freezing
// contracts of the training stages are expressed on these prefixes.

#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "mecc/ctc.hpp"
#include "mecc/layers.hpp"

namespace mecc {

// Target vocabulary specials.
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;

struct ModelDims {
  std::size_t frame_dim = 16;
  std::size_t asr_dim = 32;
  std::size_t mt_dim = 32;
  std::size_t num_heads = 4;
  std::size_t ff_expansion = 4;
  std::size_t conv_kernel = 5;
  std::size_t asr_layers = 4;
  std::size_t exporter_layers = 3;
  std::size_t mt_encoder_layers = 2;
  std::size_t mt_decoder_layers = 2;
  std::size_t src_vocab = 21;  // includes the CTC blank at id 0
  std::size_t tgt_vocab = 24;  // includes PAD, BOS, EOS
  double embed_scale = 1.0;
  // Adds the linear output layer to the exporter even when asr_dim == mt_dim.
  bool exporter_projection = false;
  bool tied_output = false;
  double dropout = 0.0;
  DType dtype = DType::kF32;

  void validate() const;
};

struct AsrOutput {
  Var encodings;  // [T, asr_dim]
  Var log_probs;  // [T, src_vocab]
};

struct AsrDecode {
  ReducedAlignment reduced;
  Var selected;  // [N, asr_dim]: encodings at reduced.frames
};

class AsrModel {
 public:
  AsrModel(ParamSet& params, const ModelDims& dims, std::mt19937_64& rng);

  // frames: [T, frame_dim], T >= 1.
  AsrOutput forward(const Tensor& frames, std::mt19937_64* dropout_rng = nullptr) const;
  AsrDecode decode(const Tensor& frames) const;

  const ModelDims& dims() const { return dims_; }

 private:
  ModelDims dims_;
  Linear input_;
  std::vector<ConformerBlock> encoder_;
  Linear ctc_head_;
};

// Maps ASR encodings at the reduced positions into the MT input-embedding
// space. Implementations: the trained Exporter and, for equivalence tests,
// LookupExporter.
class EmbeddingExporter {
 public:
  virtual ~EmbeddingExporter() = default;
  virtual Var export_embeddings(const Var& selected, const ReducedAlignment& reduced) const = 0;
};

class Exporter : public EmbeddingExporter {
 public:
  Exporter(ParamSet& params, const ModelDims& dims, std::mt19937_64& rng);

  // [N, asr_dim] -> [N, mt_dim]; N == 0 gives an empty [0, mt_dim] result.
  Var forward(const Var& selected, std::mt19937_64* dropout_rng = nullptr) const;
  Var export_embeddings(const Var& selected, const ReducedAlignment&) const override {
    return forward(selected);
  }

 private:
  ModelDims dims_;
  std::vector<ConformerBlock> blocks_;
  std::optional<Linear> projection_;
};

class MtModel;

// Test oracle: returns the MT source-embedding rows of the reduced tokens,
// i.e. a perfectly matched exporter.
class LookupExporter : public EmbeddingExporter {
 public:
  explicit LookupExporter(const MtModel& mt) : mt_(mt) {}
  Var export_embeddings(const Var& selected, const ReducedAlignment& reduced) const override;

 private:
  const MtModel& mt_;
};

class MtModel {
 public:
  MtModel(ParamSet& params, const ModelDims& dims, std::mt19937_64& rng);

  // Embedding lookup then encode_embeddings. Unknown ids throw.
  Var encode_tokens(std::span<const TokenId> src) const;
  // The encoder stack alone, over embeddings [N, mt_dim].
  Var encode_embeddings(const Var& embeddings, std::mt19937_64* dropout_rng = nullptr) const;
  // Teacher-forced logits [L, tgt_vocab] for decoder inputs `prefix`.
  Var decode_logits(const Var& memory, std::span<const TokenId> prefix,
                    std::mt19937_64* dropout_rng = nullptr) const;
  // Log-probabilities of the token following `prefix`.
  std::vector<double> next_log_probs(const Var& memory, std::span<const TokenId> prefix) const;

  const EmbeddingTable& src_embeddings() const { return src_embed_; }
  const ModelDims& dims() const { return dims_; }

 private:
  ModelDims dims_;
  EmbeddingTable src_embed_;
  std::vector<TransformerEncoderLayer> encoder_;
  LayerNorm encoder_norm_;
  EmbeddingTable tgt_embed_;
  std::vector<TransformerDecoderLayer> decoder_;
  LayerNorm decoder_norm_;
  std::optional<Linear> output_;
};

// ---------------------------------------------------------------------------
// Beam search

struct BeamConfig {
  std::size_t beam_size = 4;
  // Maximum generated tokens; default 2 * source_len + 5.
  std::optional<std::size_t> max_len;
};

struct BeamResult {
  Tokens tokens;          // generated tokens without BOS/EOS
  bool terminated = false;  // EOS was generated
  double score = 0.0;     // cumulative log-prob / generated length (EOS counted)
};

// Next-token log-probabilities given a prefix that starts with BOS.
using StepScorer = std::function<std::vector<double>(const Tokens& prefix)>;

// Length-normalized beam search. Hypotheses are ranked by cumulative
// log-prob while searching and by the normalized score at the end; ties go to
// the lexicographically smaller sequence. PAD and BOS are never generated.
BeamResult beam_search(const StepScorer& scorer, std::size_t beam_size, std::size_t max_len);
BeamResult beam_search(const MtModel& mt, const Var& encoder_output, const BeamConfig& config);

// ---------------------------------------------------------------------------
// Cascade

enum class CascadeMode { kOneBest, kMatched };

struct Translation {
  BeamResult result;
  ReducedAlignment reduced;
  bool empty_asr = false;  // ASR emitted nothing; translation left empty
};

Translation cascade_translate(const AsrModel& asr, const EmbeddingExporter* exporter,
                              const MtModel& mt, const Tensor& frames, CascadeMode mode,
                              const BeamConfig& beam);

// Translation of a reference transcript (the text-only MT path).
BeamResult translate_tokens(const MtModel& mt, std::span<const TokenId> src,
                            const BeamConfig& beam);

}  // namespace mecc
