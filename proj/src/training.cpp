#include "mecc/training.hpp"

#include <cmath>
#include <numeric>

namespace mecc {
namespace {

std::mt19937_64 stream(std::uint64_t seed, std::string_view name) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed),
                                   static_cast<std::uint32_t>(seed >> 32)};
  for (char c : name) words.push_back(static_cast<unsigned char>(c));
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

// Epoch-wise shuffled visiting order.
class BatchOrder {
 public:
  BatchOrder(std::size_t n, std::uint64_t seed) : order_(n), rng_(stream(seed, "order")) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    reshuffle();
  }
  std::size_t next() {
    if (pos_ == order_.size()) reshuffle();
    return order_[pos_++];
  }

 private:
  void reshuffle() {
    std::shuffle(order_.begin(), order_.end(), rng_);
    pos_ = 0;
  }
  std::vector<std::size_t> order_;
  std::mt19937_64 rng_;
  std::size_t pos_ = 0;
};

// Summed loss of one utterance and the count it is normalized by.
struct ItemLoss {
  Var total;
  double weight = 0.0;
};

template <class LossFn>
StageReport run_stage(System& sys, const std::string& stage, const std::string& prefix,
                      std::size_t n_items, const StageConfig& cfg, MetricsLog* log,
                      LossFn&& item_loss) {
  cfg.validate();
  sys.train_only(prefix);
  StageReport report;
  report.stage = stage;
  if (cfg.steps > 0 && n_items == 0) throw DataError(stage + ": no training data");

  AdamState adam;
  adam.schedule = LrSchedule{cfg.peak_lr, cfg.warmup_steps};
  std::map<std::string, Tensor> shadow;
  if (cfg.ema_decay > 0.0) {
    for (const Parameter* p : sys.params().all()) {
      if (!p->frozen()) shadow.emplace(p->name(), p->value());
    }
  }
  BatchOrder order(n_items, cfg.seed);
  auto dropout_rng = stream(cfg.seed, "dropout");

  auto emit = [&](std::size_t step, double loss, std::size_t count) {
    EvalReport r{static_cast<std::int64_t>(step), stage, "train", "loss", loss, count,
                 report.skipped};
    report.records.push_back(r);
    if (log) log->write(r);
  };

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    Tape tape;
    Var total;
    double weight = 0.0;
    std::size_t used = 0;
    {
      TapeScope scope(tape);
      for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        std::optional<ItemLoss> item = item_loss(order.next(), &dropout_rng);
        if (!item) {
          if (++report.skipped > cfg.max_skipped) {
            throw DataError(stage + ": skipped " + std::to_string(report.skipped) +
                            " utterances (max_skipped " + std::to_string(cfg.max_skipped) + ")");
          }
          continue;
        }
        total = total.defined() ? ops::add(total, item->total) : item->total;
        weight += item->weight;
        ++used;
      }
      if (used > 0) total = ops::scale(total, 1.0 / weight);
    }
    if (used == 0) continue;
    const double loss = total.value().item();
    if (!std::isfinite(loss)) {
      throw NumericError(stage + ": non-finite loss at step " + std::to_string(step));
    }
    Gradients grads = backward(tape, total, sys.params());
    if (cfg.clip_norm > 0.0) clip_global_norm(grads, cfg.clip_norm);
    adam_step(sys.params(), grads, adam, adam.schedule.at(static_cast<std::int64_t>(step)));
    if (!shadow.empty()) {
      const double t = static_cast<double>(step - 1);
      ema_update(shadow, sys.params(), std::min(cfg.ema_decay, (1.0 + t) / (10.0 + t)));
    }
    if (report.steps == 0) report.first_loss = loss;
    report.last_loss = loss;
    report.steps = step;
    const bool log_now = step == 1 || step == cfg.steps ||
                         (cfg.log_interval > 0 && step % cfg.log_interval == 0);
    if (log_now) emit(step, loss, used);
  }
  if (!shadow.empty() && report.steps > 0) sys.params().restore(shadow);
  sys.freeze_all();
  return report;
}

struct CachedDecode {
  ReducedAlignment reduced;
  Tensor selected;
};

std::vector<CachedDecode> decode_all(const AsrModel& asr, const std::vector<Example>& data) {
  NoGradScope no_grad;
  std::vector<CachedDecode> out;
  out.reserve(data.size());
  for (const auto& ex : data) {
    AsrDecode d = asr.decode(ex.frames);
    out.push_back({std::move(d.reduced), d.selected.value()});
  }
  return out;
}

Tokens l2_target_tokens(const CachedDecode& c, const Example& ex, const std::string& targets) {
  return targets == "reference" ? ex.src : c.reduced.tokens;
}

}  // namespace

void StageConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("stage: batch_size must be >= 1");
  if (!(peak_lr > 0.0)) throw std::invalid_argument("stage: peak_lr must be > 0");
  if (warmup_steps < 1) throw std::invalid_argument("stage: warmup_steps must be >= 1");
  if (!(clip_norm >= 0.0)) throw std::invalid_argument("stage: clip_norm must be >= 0");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw std::invalid_argument("stage: label_smoothing must be in [0, 1)");
  }
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) {
    throw std::invalid_argument("stage: ema_decay must be in [0, 1)");
  }
  if (l2_targets != "one_best" && l2_targets != "reference") {
    throw std::invalid_argument("stage: l2_targets must be one_best or reference");
  }
}

System::System(const ModelDims& dims, std::uint64_t init_seed)
    : dims_((dims.validate(), dims)), params_(dims.dtype) {
  auto asr_rng = stream(init_seed, "asr");
  asr_ = std::make_unique<AsrModel>(params_, dims_, asr_rng);
  auto exporter_rng = stream(init_seed, "exporter");
  exporter_ = std::make_unique<Exporter>(params_, dims_, exporter_rng);
  auto mt_rng = stream(init_seed, "mt");
  mt_ = std::make_unique<MtModel>(params_, dims_, mt_rng);
}

void System::train_only(const std::string& prefix) {
  for (Parameter* p : params_.all()) p->set_frozen(p->name().rfind(prefix, 0) != 0);
}

void System::freeze_all() {
  for (Parameter* p : params_.all()) p->set_frozen(true);
}

void reinitialize_exporter(System& sys, std::uint64_t seed) {
  ParamSet fresh(sys.dims().dtype);
  auto rng = stream(seed, "exporter");
  Exporter init(fresh, sys.dims(), rng);
  for (const Parameter* p : fresh.all()) sys.params().at(p->name()).assign(p->value());
}

StageReport train_asr(System& sys, const std::vector<Example>& train, const StageConfig& cfg,
                      MetricsLog* log) {
  const AsrModel& asr = sys.asr();
  return run_stage(sys, "asr", "asr.", train.size(), cfg, log,
                   [&](std::size_t i, std::mt19937_64* rng) -> std::optional<ItemLoss> {
                     const Example& ex = train[i];
                     if (ctc_min_frames(ex.src) > ex.frames.dim(0)) return std::nullopt;
                     AsrOutput out = asr.forward(ex.frames, rng);
                     CtcLoss l = ctc_loss(out.log_probs, ex.src);
                     if (!l.admissible) return std::nullopt;
                     return ItemLoss{l.loss, 1.0};
                   });
}

StageReport train_mt(System& sys, const std::vector<Example>& train, const StageConfig& cfg,
                     const std::string& stage, MetricsLog* log) {
  const MtModel& mt = sys.mt();
  return run_stage(sys, stage, "mt.", train.size(), cfg, log,
                   [&](std::size_t i, std::mt19937_64* rng) -> std::optional<ItemLoss> {
                     const Example& ex = train[i];
                     Var memory = mt.encode_embeddings(mt.src_embeddings().lookup(ex.src), rng);
                     std::span<const TokenId> tgt(ex.tgt);
                     Var logits = mt.decode_logits(memory, tgt.first(tgt.size() - 1), rng);
                     SmoothedNll nll =
                         label_smoothed_nll(logits, tgt.subspan(1), cfg.label_smoothing, kPad);
                     return ItemLoss{nll.total, static_cast<double>(nll.count)};
                   });
}

StageReport train_matcher(System& sys, const std::vector<Example>& train, const StageConfig& cfg,
                          MetricsLog* log) {
  const auto cache = decode_all(sys.asr(), train);
  const Exporter& exporter = sys.exporter();
  const MtModel& mt = sys.mt();
  return run_stage(
      sys, "matcher", "exporter.", train.size(), cfg, log,
      [&](std::size_t i, std::mt19937_64* rng) -> std::optional<ItemLoss> {
        const CachedDecode& c = cache[i];
        if (c.reduced.empty()) return std::nullopt;
        Tokens tokens = l2_target_tokens(c, train[i], cfg.l2_targets);
        if (tokens.size() != c.reduced.size()) return std::nullopt;
        Var exported = exporter.forward(Var::constant(c.selected), rng);
        Var target = mt.src_embeddings().lookup(tokens);
        Var diff = ops::sub(exported, target);
        return ItemLoss{ops::sum(ops::mul(diff, diff)), static_cast<double>(tokens.size())};
      });
}

StageReport finetune_exporter(System& sys, const std::vector<Example>& train,
                              const StageConfig& cfg, MetricsLog* log) {
  const auto cache = decode_all(sys.asr(), train);
  const Exporter& exporter = sys.exporter();
  const MtModel& mt = sys.mt();
  return run_stage(sys, "exporter_ast", "exporter.", train.size(), cfg, log,
                   [&](std::size_t i, std::mt19937_64* rng) -> std::optional<ItemLoss> {
                     const CachedDecode& c = cache[i];
                     if (c.reduced.empty()) return std::nullopt;
                     Var exported = exporter.forward(Var::constant(c.selected), rng);
                     Var memory = mt.encode_embeddings(exported);
                     std::span<const TokenId> tgt(train[i].tgt);
                     Var logits = mt.decode_logits(memory, tgt.first(tgt.size() - 1));
                     SmoothedNll nll =
                         label_smoothed_nll(logits, tgt.subspan(1), cfg.label_smoothing, kPad);
                     return ItemLoss{nll.total, static_cast<double>(nll.count)};
                   });
}

// ---------------------------------------------------------------------------

EvalMode parse_eval_mode(const std::string& s) {
  if (s == "transcript") return EvalMode::kTranscript;
  if (s == "one-best") return EvalMode::kOneBest;
  if (s == "matched") return EvalMode::kMatched;
  throw std::invalid_argument("unknown mode '" + s + "' (transcript|one-best|matched)");
}

const char* eval_mode_name(EvalMode m) {
  switch (m) {
    case EvalMode::kTranscript: return "transcript";
    case EvalMode::kOneBest: return "one-best";
    case EvalMode::kMatched: return "matched";
  }
  return "?";
}

Tokens strip_specials(const Tokens& tgt) {
  Tokens out;
  for (TokenId t : tgt) {
    if (t != kBos && t != kEos && t != kPad) out.push_back(t);
  }
  return out;
}

Hypotheses translate_all(const System& sys, const std::vector<Example>& data, EvalMode mode,
                         const BeamConfig& beam, const EmbeddingExporter* exporter) {
  Hypotheses h;
  for (const auto& ex : data) {
    h.refs.push_back(strip_specials(ex.tgt));
    if (mode == EvalMode::kTranscript) {
      BeamResult r = translate_tokens(sys.mt(), ex.src, beam);
      h.unterminated += r.terminated ? 0 : 1;
      h.hyps.push_back(std::move(r.tokens));
      continue;
    }
    const EmbeddingExporter* exp = exporter ? exporter : &sys.exporter();
    Translation t = cascade_translate(sys.asr(), exp, sys.mt(), ex.frames,
                                      mode == EvalMode::kOneBest ? CascadeMode::kOneBest
                                                                 : CascadeMode::kMatched,
                                      beam);
    if (t.empty_asr) {
      ++h.empty_asr;
    } else if (!t.result.terminated) {
      ++h.unterminated;
    }
    h.hyps.push_back(std::move(t.result.tokens));
  }
  return h;
}

double hypotheses_bleu(const Hypotheses& h) { return corpus_bleu(h.refs, h.hyps); }

WerAccumulator evaluate_wer(const System& sys, const std::vector<Example>& data) {
  NoGradScope no_grad;
  WerAccumulator acc;
  for (const auto& ex : data) acc.add(ex.src, sys.asr().decode(ex.frames).reduced.tokens);
  return acc;
}

L2Eval evaluate_l2(const System& sys, const std::vector<Example>& data,
                   const std::string& targets) {
  NoGradScope no_grad;
  L2Eval out;
  double total = 0.0;
  for (const auto& ex : data) {
    AsrDecode d = sys.asr().decode(ex.frames);
    const Tokens tokens = targets == "reference" ? ex.src : d.reduced.tokens;
    if (d.reduced.empty() || tokens.size() != d.reduced.size()) {
      ++out.skipped;
      continue;
    }
    Tensor exported = sys.exporter().forward(d.selected).value();
    Tensor target = sys.mt().src_embeddings().lookup(tokens).value();
    total += *l2_per_token(exported, target) * static_cast<double>(tokens.size());
    out.tokens += tokens.size();
  }
  if (out.tokens > 0) out.value = total / static_cast<double>(out.tokens);
  return out;
}

double agreement(const std::vector<Tokens>& a, const std::vector<Tokens>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw std::invalid_argument("agreement: lists must be equal-sized and nonempty");
  }
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i] ? 1 : 0;
  return static_cast<double>(same) / static_cast<double>(a.size());
}

}  // namespace mecc
