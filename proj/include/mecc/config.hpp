#pragma once
// Run configuration: a JSON document covering corpus synthesis, model dims,
// all stage hyperparameters and paths. Unknown keys are rejected; missing
// keys keep their defaults, which are the calibrated values shipped in
// configs/default.json.

#include <stdexcept>
#include <string>

#include "mecc/hash.hpp"
#include "mecc/models.hpp"
#include "mecc/synth.hpp"
#include "mecc/training.hpp"

namespace mecc {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StageSet {
  StageConfig asr;
  StageConfig mt;
  StageConfig mt_adapt;
  StageConfig matcher;
  StageConfig finetune;
};

StageSet default_stages();

struct RunPaths {
  std::string data = "data";
  std::string out = "runs";
};

struct RunConfig {
  std::uint64_t seed = 1;  // model initialization
  SynthConfig synth = default_synth();
  CorpusSpec corpus;
  ModelDims model = default_model();
  StageSet stages = default_stages();
  std::size_t beam_size = 4;
  // A matcher run counts as converged when dev l2_per_token / mt_dim < tau.
  double matcher_tau = 0.002;
  RunPaths paths;

  // Throws ConfigError, including on vocab or frame_dim disagreement between
  // synth and model.
  void validate() const;

  static SynthConfig default_synth();
  static ModelDims default_model();
};

RunConfig parse_config(const std::string& json_text);  // throws ConfigError
RunConfig load_config(const std::string& path);
// Pretty-printed, fully resolved document with a fixed key order.
std::string dump_config(const RunConfig& config);
// SHA-256 of the compact resolved document without `paths`, so relocating a
// run does not change the checkpoints it produces.
Digest config_hash(const RunConfig& config);

}  // namespace mecc
