#include "mecc/models.hpp"

#include <stdexcept>
#include <string>

namespace mecc {
namespace {

ConformerConfig conformer_config(const ModelDims& d, std::size_t dim) {
  return ConformerConfig{dim, d.num_heads, d.conv_kernel, d.ff_expansion, d.dropout};
}

std::size_t check_dims(const ModelDims& d) {
  d.validate();
  return 0;
}

std::vector<ConformerBlock> conformer_stack(ParamSet& params, const std::string& prefix,
                                            std::size_t count, const ConformerConfig& config,
                                            std::mt19937_64& rng) {
  std::vector<ConformerBlock> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.emplace_back(params, prefix + std::to_string(i), config, rng);
  }
  return out;
}

template <class Layer>
std::vector<Layer> layer_stack(ParamSet& params, const std::string& prefix, std::size_t count,
                               const ModelDims& d, std::mt19937_64& rng) {
  std::vector<Layer> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.emplace_back(params, prefix + std::to_string(i), d.mt_dim, d.num_heads,
                     d.mt_dim * d.ff_expansion, rng, d.dropout);
  }
  return out;
}

}  // namespace

void ModelDims::validate() const {
  conformer_config(*this, asr_dim).validate();
  AttentionConfig{mt_dim, num_heads, false, true}.validate();
  if (src_vocab < 2) throw std::invalid_argument("src_vocab must include blank and a token");
  if (tgt_vocab <= static_cast<std::size_t>(kEos) + 1) {
    throw std::invalid_argument("tgt_vocab must include PAD, BOS, EOS and a token");
  }
  if (frame_dim == 0) throw std::invalid_argument("frame_dim must be positive");
}

AsrModel::AsrModel(ParamSet& params, const ModelDims& dims, std::mt19937_64& rng)
    : dims_((check_dims(dims), dims)),
      input_(params, "asr.input", dims.frame_dim, dims.asr_dim, rng),
      encoder_(conformer_stack(params, "asr.encoder.", dims.asr_layers,
                               conformer_config(dims, dims.asr_dim), rng)),
      ctc_head_(params, "asr.ctc_head", dims.asr_dim, dims.src_vocab, rng) {}

AsrOutput AsrModel::forward(const Tensor& frames, std::mt19937_64* dropout_rng) const {
  if (frames.rank() != 2 || frames.dim(1) != dims_.frame_dim || frames.dim(0) == 0) {
    throw std::invalid_argument("asr: frames must be [T >= 1, " + std::to_string(dims_.frame_dim) +
                                "], got " + shape_str(frames.shape()));
  }
  Var h = input_(Var::constant(frames.to(dims_.dtype)));
  for (const auto& block : encoder_) h = block(h, dropout_rng);
  return {h, ops::log_softmax(ctc_head_(h))};
}

AsrDecode AsrModel::decode(const Tensor& frames) const {
  AsrOutput out = forward(frames);
  Tokens labels = greedy_frame_labels(out.log_probs.value());
  AsrDecode d;
  d.reduced = ctc_reduce(labels);
  d.selected = ops::gather_rows(out.encodings, d.reduced.frames);
  return d;
}

Exporter::Exporter(ParamSet& params, const ModelDims& dims, std::mt19937_64& rng)
    : dims_((check_dims(dims), dims)) {
  blocks_ = conformer_stack(params, "exporter.conformer.", dims.exporter_layers,
                            conformer_config(dims, dims.asr_dim), rng);
  if (dims.exporter_projection || dims.asr_dim != dims.mt_dim) {
    projection_.emplace(params, "exporter.projection", dims.asr_dim, dims.mt_dim, rng);
  }
}

Var Exporter::forward(const Var& selected, std::mt19937_64* dropout_rng) const {
  if (selected.value().rank() != 2 || selected.dim(1) != dims_.asr_dim) {
    throw std::invalid_argument("exporter: expected [N, " + std::to_string(dims_.asr_dim) +
                                "], got " + shape_str(selected.shape()));
  }
  if (selected.dim(0) == 0) {
    return Var::constant(Tensor(Shape{0, dims_.mt_dim}, selected.dtype()));
  }
  Var h = selected;
  for (const auto& block : blocks_) h = block(h, dropout_rng);
  return projection_ ? (*projection_)(h) : h;
}

Var LookupExporter::export_embeddings(const Var&, const ReducedAlignment& reduced) const {
  return mt_.src_embeddings().lookup(reduced.tokens);
}

MtModel::MtModel(ParamSet& params, const ModelDims& dims, std::mt19937_64& rng)
    : dims_((check_dims(dims), dims)),
      src_embed_(params, "mt.src_embed", dims.src_vocab, dims.mt_dim, rng, dims.embed_scale),
      encoder_(layer_stack<TransformerEncoderLayer>(params, "mt.encoder.", dims.mt_encoder_layers,
                                                    dims, rng)),
      encoder_norm_(params, "mt.encoder.norm", dims.mt_dim),
      tgt_embed_(params, "mt.tgt_embed", dims.tgt_vocab, dims.mt_dim, rng),
      decoder_(layer_stack<TransformerDecoderLayer>(params, "mt.decoder.", dims.mt_decoder_layers,
                                                    dims, rng)),
      decoder_norm_(params, "mt.decoder.norm", dims.mt_dim) {
  if (!dims.tied_output) output_.emplace(params, "mt.output", dims.mt_dim, dims.tgt_vocab, rng);
}

Var MtModel::encode_tokens(std::span<const TokenId> src) const {
  return encode_embeddings(src_embed_.lookup(src));
}

Var MtModel::encode_embeddings(const Var& embeddings, std::mt19937_64* dropout_rng) const {
  if (embeddings.value().rank() != 2 || embeddings.dim(1) != dims_.mt_dim) {
    throw std::invalid_argument("mt encoder: embeddings must be [N, " +
                                std::to_string(dims_.mt_dim) + "], got " +
                                shape_str(embeddings.shape()));
  }
  Var h = embeddings;
  for (const auto& layer : encoder_) h = layer(h, dropout_rng);
  return encoder_norm_(h);
}

Var MtModel::decode_logits(const Var& memory, std::span<const TokenId> prefix,
                           std::mt19937_64* dropout_rng) const {
  Var h = tgt_embed_.lookup(prefix);
  for (const auto& layer : decoder_) h = layer(h, memory, dropout_rng);
  h = decoder_norm_(h);
  if (output_) return (*output_)(h);
  return ops::matmul(h, ops::transpose(tgt_embed_.weight().var()));
}

std::vector<double> MtModel::next_log_probs(const Var& memory,
                                            std::span<const TokenId> prefix) const {
  NoGradScope no_grad;
  Var logits = decode_logits(memory, prefix);
  Var last = ops::slice(logits, 0, prefix.size() - 1, 1);
  return ops::log_softmax(last).value().to_vector();
}

Translation cascade_translate(const AsrModel& asr, const EmbeddingExporter* exporter,
                              const MtModel& mt, const Tensor& frames, CascadeMode mode,
                              const BeamConfig& beam) {
  NoGradScope no_grad;
  Translation out;
  AsrDecode decoded = asr.decode(frames);
  out.reduced = decoded.reduced;
  if (decoded.reduced.empty()) {
    out.empty_asr = true;
    return out;
  }
  Var memory;
  if (mode == CascadeMode::kOneBest) {
    memory = mt.encode_tokens(decoded.reduced.tokens);
  } else {
    if (!exporter) throw std::invalid_argument("cascade: matched mode needs an exporter");
    memory = mt.encode_embeddings(exporter->export_embeddings(decoded.selected, decoded.reduced));
  }
  BeamConfig cfg = beam;
  if (!cfg.max_len) cfg.max_len = 2 * decoded.reduced.size() + 5;
  out.result = beam_search(mt, memory, cfg);
  return out;
}

BeamResult translate_tokens(const MtModel& mt, std::span<const TokenId> src,
                            const BeamConfig& beam) {
  NoGradScope no_grad;
  Var memory = mt.encode_tokens(src);
  BeamConfig cfg = beam;
  if (!cfg.max_len) cfg.max_len = 2 * src.size() + 5;
  return beam_search(mt, memory, cfg);
}

}  // namespace mecc
