#include "mecc/pipeline.hpp"

#include <filesystem>
#include <fstream>

#include "mecc/checkpoint.hpp"
#include "mecc/corpus_io.hpp"

namespace mecc {
namespace fs = std::filesystem;
namespace {

constexpr const char* kMarker = ".failed";

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

// Runs `body` with the failure marker in place.
template <class F>
auto guarded(const std::string& out_dir, F&& body) {
  fs::create_directories(out_dir);
  const fs::path marker = fs::path(out_dir) / kMarker;
  write_text(marker, "incomplete\n");
  try {
    auto result = body();
    fs::remove(marker);
    return result;
  } catch (const std::exception& e) {
    std::ofstream(marker, std::ios::trunc) << e.what() << '\n';
    throw;
  }
}

const char* dist_label(Distribution d, Split s) {
  static const char* names[2][3] = {{"base_text.train", "base_text.dev", "base_text.test"},
                                    {"task_speech.train", "task_speech.dev", "task_speech.test"}};
  return names[static_cast<int>(d)][static_cast<int>(s)];
}

EvalReport record(std::int64_t step, const std::string& stage, const char* split,
                  const std::string& metric, double value, std::size_t count,
                  std::size_t skipped = 0) {
  return EvalReport{step, stage, split, metric, value, count, skipped};
}

BeamConfig beam_of(const RunConfig& c) { return BeamConfig{c.beam_size, std::nullopt}; }

}  // namespace

const char* stage_name(StageKind kind) {
  switch (kind) {
    case StageKind::kAsr: return "asr";
    case StageKind::kMt: return "mt";
    case StageKind::kMtAdapt: return "mt_adapt";
    case StageKind::kMatcher: return "matcher";
    case StageKind::kFinetune: return "exporter_ast";
  }
  return "?";
}

std::string gen_data_command(const RunConfig& config, const std::string& out_dir) {
  return guarded(out_dir, [&] {
    const std::string hash = save_corpus(out_dir, make_corpus(config.synth, config.corpus));
    write_text(fs::path(out_dir) / "config.json", dump_config(config));
    return hash;
  });
}

std::unique_ptr<System> load_system(const RunConfig& config,
                                    const std::vector<std::string>& ckpts) {
  auto sys = std::make_unique<System>(config.model, config.seed);
  for (const auto& path : ckpts) apply(load_checkpoint(path), sys->params());
  return sys;
}

StageResult stage_command(const RunConfig& config, const StageRequest& req) {
  const bool needs_init = req.kind == StageKind::kMtAdapt || req.kind == StageKind::kMatcher ||
                          req.kind == StageKind::kFinetune;
  if (needs_init && !req.init_ckpt) {
    throw ConfigError(std::string(stage_name(req.kind)) + " needs an input checkpoint");
  }
  if (req.exporter_init != "matcher" && req.exporter_init != "random") {
    throw ConfigError("--init must be matcher or random");
  }
  return guarded(req.out_dir, [&] {
    StageResult result;
    const std::string stage = stage_name(req.kind);
    const fs::path out(req.out_dir);
    result.checkpoint_path = (out / "model.ckpt").string();
    write_text(out / "config.json", dump_config(config));

    std::vector<std::string> inputs;
    if (req.init_ckpt) inputs.push_back(*req.init_ckpt);
    auto sys = load_system(config, inputs);
    MetricsLog log((out / "metrics.jsonl").string());
    auto emit = [&](EvalReport r) {
      log.write(r);
      result.evals.push_back(std::move(r));
    };
    const BeamConfig beam = beam_of(config);
    const auto task_train = [&] {
      return load_part(req.data_dir, Distribution::kTaskSpeech, Split::kTrain);
    };
    const auto task_dev = load_part(req.data_dir, Distribution::kTaskSpeech, Split::kDev);
    const char* dev_label = dist_label(Distribution::kTaskSpeech, Split::kDev);

    switch (req.kind) {
      case StageKind::kAsr: {
        result.report = train_asr(*sys, task_train(), config.stages.asr, &log);
        WerAccumulator w = evaluate_wer(*sys, task_dev);
        if (w.value()) {
          emit(record(result.report.steps, stage, dev_label, "wer", *w.value(), w.utterances,
                      w.skipped));
        }
        break;
      }
      case StageKind::kMt:
      case StageKind::kMtAdapt: {
        const bool adapt = req.kind == StageKind::kMtAdapt;
        const StageConfig& sc = adapt ? config.stages.mt_adapt : config.stages.mt;
        if (adapt && sc.steps == 0) {
          // Nothing to train: the output is the input checkpoint, byte for byte.
          fs::copy_file(*req.init_ckpt, result.checkpoint_path,
                        fs::copy_options::overwrite_existing);
          result.report.stage = stage;
          return result;
        }
        const auto train = adapt ? task_train()
                                 : load_part(req.data_dir, Distribution::kBaseText, Split::kTrain);
        result.report = train_mt(*sys, train, sc, stage, &log);
        const Distribution d = adapt ? Distribution::kTaskSpeech : Distribution::kBaseText;
        const auto dev = adapt ? task_dev : load_part(req.data_dir, d, Split::kDev);
        const Hypotheses h = translate_all(*sys, dev, EvalMode::kTranscript, beam);
        emit(record(result.report.steps, stage, dist_label(d, Split::kDev), "bleu_transcript",
                    hypotheses_bleu(h), dev.size()));
        break;
      }
      case StageKind::kMatcher: {
        const StageConfig& sc = config.stages.matcher;
        reinitialize_exporter(*sys, sc.seed);
        const L2Eval before = evaluate_l2(*sys, task_dev, sc.l2_targets);
        if (before.value) {
          emit(record(0, stage, dev_label, "l2_per_token", *before.value, before.tokens,
                      before.skipped));
        }
        result.report = train_matcher(*sys, task_train(), sc, &log);
        const L2Eval after = evaluate_l2(*sys, task_dev, sc.l2_targets);
        if (after.value) {
          const auto step = static_cast<std::int64_t>(result.report.steps);
          emit(record(step, stage, dev_label, "l2_per_token", *after.value, after.tokens,
                      after.skipped));
          const double mse = *after.value / static_cast<double>(config.model.mt_dim);
          emit(record(step, stage, dev_label, "converged", mse < config.matcher_tau ? 1.0 : 0.0,
                      after.tokens, after.skipped));
        }
        break;
      }
      case StageKind::kFinetune: {
        const StageConfig& sc = config.stages.finetune;
        if (req.exporter_init == "random") reinitialize_exporter(*sys, sc.seed);
        const Hypotheses h0 = translate_all(*sys, task_dev, EvalMode::kMatched, beam);
        emit(record(0, stage, dev_label, "bleu_matched", hypotheses_bleu(h0), task_dev.size(),
                    h0.empty_asr));
        result.report = finetune_exporter(*sys, task_train(), sc, &log);
        const Hypotheses h1 = translate_all(*sys, task_dev, EvalMode::kMatched, beam);
        emit(record(result.report.steps, stage, dev_label, "bleu_matched", hypotheses_bleu(h1),
                    task_dev.size(), h1.empty_asr));
        break;
      }
    }
    CheckpointMeta meta{stage, result.report.steps, config.seed, config_hash(config)};
    save_checkpoint(result.checkpoint_path, capture(sys->params(), meta));
    return result;
  });
}

std::vector<EvalReport> evaluate_command(const RunConfig& config, const EvalRequest& req) {
  if (req.lookup_exporter && req.mode != EvalMode::kMatched) {
    throw ConfigError("--lookup-exporter applies to matched mode only");
  }
  auto sys = load_system(config, req.ckpts);
  auto data = load_part(req.data_dir, req.dist, req.split);
  if (req.limit > 0 && data.size() > req.limit) data.resize(req.limit);
  if (data.empty()) throw DataError("evaluate: no utterances");
  if (req.mode != EvalMode::kTranscript && data.front().frames.dim(0) == 0) {
    throw DataError("evaluate: cascade modes need speech data");
  }
  const std::string stage = std::string("eval_") + eval_mode_name(req.mode);
  const char* label = dist_label(req.dist, req.split);
  std::vector<EvalReport> out;
  if (req.mode != EvalMode::kTranscript) {
    WerAccumulator w = evaluate_wer(*sys, data);
    if (w.value()) out.push_back(record(0, stage, label, "wer", *w.value(), w.utterances, w.skipped));
  }
  LookupExporter lookup(sys->mt());
  const Hypotheses h = translate_all(*sys, data, req.mode, beam_of(config),
                                     req.lookup_exporter ? &lookup : nullptr);
  out.push_back(record(0, stage, label, "bleu", hypotheses_bleu(h), data.size(), h.empty_asr));
  if (req.mode == EvalMode::kMatched && !req.lookup_exporter) {
    const L2Eval l2 = evaluate_l2(*sys, data, config.stages.matcher.l2_targets);
    if (l2.value) out.push_back(record(0, stage, label, "l2_per_token", *l2.value, l2.tokens, l2.skipped));
  }
  return out;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const std::invalid_argument*>(&e)) return kExitConfig;
  return kExitData;
}

}  // namespace mecc
