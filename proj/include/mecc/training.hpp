#pragma once
// Training stages and evaluation.
//
// Stage       trainable    loss
// asr         asr.*        CTC
// mt          mt.*         label-smoothed CE on base text
// mt_adapt    mt.*         same, continued on task text
// matcher     exporter.*   l2_per_token against MT source embeddings
// exporter_ast exporter.*  label-smoothed CE through the frozen MT
//
// Every stage freezes all other parameters, processes utterances in a
// seed-fixed order, and is bitwise reproducible for a given config.

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mecc/metrics.hpp"
#include "mecc/models.hpp"
#include "mecc/optim.hpp"
#include "mecc/synth.hpp"

namespace mecc {

struct StageConfig {
  std::size_t steps = 1000;
  std::size_t batch_size = 8;
  double peak_lr = 1e-3;
  std::int64_t warmup_steps = 100;
  double clip_norm = 1.0;
  double label_smoothing = 0.1;
  // 0 disables. Otherwise the shadow decay is min(ema_decay, (1+t)/(10+t))
  // and the stage ends with the shadow weights.
  double ema_decay = 0.0;
  // Training-loss record every this many steps (0: first and last only).
  std::size_t log_interval = 100;
  std::uint64_t seed = 1;
  // Skipped utterances (inadmissible CTC pairs, empty reductions) tolerated
  // before the stage fails.
  std::size_t max_skipped = 100000;
  // matcher: "one_best" (predicted tokens) or "reference" (transcript).
  std::string l2_targets = "one_best";

  void validate() const;
};

// Thrown when a training loss becomes NaN or infinite.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when a stage has to skip more utterances than max_skipped.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// All three networks in one parameter set. Each network is initialized from
// its own stream derived from init_seed, so e.g. the exporter's initial
// weights do not depend on the ASR dims.
class System {
 public:
  System(const ModelDims& dims, std::uint64_t init_seed);
  System(const System&) = delete;
  System& operator=(const System&) = delete;

  const ModelDims& dims() const { return dims_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  const AsrModel& asr() const { return *asr_; }
  const Exporter& exporter() const { return *exporter_; }
  const MtModel& mt() const { return *mt_; }

  // Only parameters under `prefix` stay trainable.
  void train_only(const std::string& prefix);
  void freeze_all();

 private:
  ModelDims dims_;
  ParamSet params_;
  std::unique_ptr<AsrModel> asr_;
  std::unique_ptr<Exporter> exporter_;
  std::unique_ptr<MtModel> mt_;
};

struct StageReport {
  std::string stage;
  std::size_t steps = 0;
  std::size_t skipped = 0;
  double first_loss = 0.0;
  double last_loss = 0.0;
  std::vector<EvalReport> records;
};

StageReport train_asr(System& sys, const std::vector<Example>& train, const StageConfig& cfg,
                      MetricsLog* log = nullptr);
// `stage` is "mt" or "mt_adapt"; only the source/target tokens are used.
StageReport train_mt(System& sys, const std::vector<Example>& train, const StageConfig& cfg,
                     const std::string& stage, MetricsLog* log = nullptr);
StageReport train_matcher(System& sys, const std::vector<Example>& train, const StageConfig& cfg,
                          MetricsLog* log = nullptr);
StageReport finetune_exporter(System& sys, const std::vector<Example>& train,
                              const StageConfig& cfg, MetricsLog* log = nullptr);

// Replaces every exporter parameter with a fresh draw from `seed`.
void reinitialize_exporter(System& sys, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Evaluation

enum class EvalMode { kTranscript, kOneBest, kMatched };
EvalMode parse_eval_mode(const std::string& s);  // transcript | one-best | matched
const char* eval_mode_name(EvalMode m);

struct Hypotheses {
  std::vector<Tokens> refs;
  std::vector<Tokens> hyps;
  std::size_t empty_asr = 0;
  std::size_t unterminated = 0;
};

// Translates every example. `exporter` overrides the system's exporter in
// matched mode (used for the lookup oracle).
Hypotheses translate_all(const System& sys, const std::vector<Example>& data, EvalMode mode,
                         const BeamConfig& beam, const EmbeddingExporter* exporter = nullptr);

// BLEU of the hypotheses against target references with BOS/EOS stripped.
double hypotheses_bleu(const Hypotheses& h);

WerAccumulator evaluate_wer(const System& sys, const std::vector<Example>& data);

struct L2Eval {
  std::optional<double> value;  // mean over tokens
  std::size_t tokens = 0;
  std::size_t skipped = 0;  // empty reductions
};
L2Eval evaluate_l2(const System& sys, const std::vector<Example>& data,
                   const std::string& targets = "one_best");

// Fraction of positions where both hypothesis lists hold identical tokens.
double agreement(const std::vector<Tokens>& a, const std::vector<Tokens>& b);

// Target sequence without BOS/EOS.
Tokens strip_specials(const Tokens& tgt);

}  // namespace mecc
