#pragma once
// Stage commands as used by the mecc binary: each reads a corpus directory and
// an optional input checkpoint, and writes into its own output directory
//
//   model.ckpt     every parameter of the system, with frozen flags
//   metrics.jsonl  training-loss and evaluation records (appended)
//   config.json    the resolved run configuration
//
// Failures leave a ".failed" marker holding the reason; the marker is written
// before any output and removed only after all outputs are complete.

#include <optional>
#include <string>
#include <vector>

#include "mecc/config.hpp"
#include "mecc/training.hpp"

namespace mecc {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
};

enum class StageKind { kAsr, kMt, kMtAdapt, kMatcher, kFinetune };
const char* stage_name(StageKind kind);  // asr | mt | mt_adapt | matcher | exporter_ast

struct StageRequest {
  StageKind kind = StageKind::kAsr;
  std::string data_dir;
  std::optional<std::string> init_ckpt;  // required for mt_adapt, matcher, finetune
  std::string out_dir;
  std::string exporter_init = "matcher";  // finetune only: matcher | random
};

struct StageResult {
  StageReport report;
  std::vector<EvalReport> evals;
  std::string checkpoint_path;
};

// Writes the corpus and config.json into out_dir; returns the manifest hash.
std::string gen_data_command(const RunConfig& config, const std::string& out_dir);

StageResult stage_command(const RunConfig& config, const StageRequest& request);

struct EvalRequest {
  std::string data_dir;
  std::vector<std::string> ckpts;  // applied in order
  EvalMode mode = EvalMode::kOneBest;
  Split split = Split::kDev;
  Distribution dist = Distribution::kTaskSpeech;
  bool lookup_exporter = false;  // matched mode through the lookup oracle
  std::size_t limit = 0;         // 0: whole split
};

// WER (cascade modes), BLEU, and l2_per_token (matched mode).
std::vector<EvalReport> evaluate_command(const RunConfig& config, const EvalRequest& request);

// System built from `config` with the checkpoints applied in order.
std::unique_ptr<System> load_system(const RunConfig& config, const std::vector<std::string>& ckpts);

// Maps an exception escaping a command to its exit code.
int exit_code_for(const std::exception& e);

}  // namespace mecc
