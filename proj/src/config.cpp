#include "mecc/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace mecc {
namespace {

using Json = nlohmann::ordered_json;

// Reads fields of one JSON object and rejects keys nobody asked for.
class Fields {
 public:
  Fields(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    const std::string at = path_.empty() ? key : path_ + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError(at + ": expected a boolean");
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!it->is_number_unsigned()) throw ConfigError(at + ": expected a non-negative integer");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw ConfigError(at + ": expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw ConfigError(at + ": expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw ConfigError(at + ": expected a string");
    }
    out = it->template get<T>();
  }

  template <class F>
  void object(const char* key, F&& read) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    Fields sub(*it, path_.empty() ? key : path_ + "." + key);
    read(sub);
    sub.finish();
  }

  const Json* raw(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const std::string& path() const { return path_; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ConfigError("unknown config key '" + (path_.empty() ? "" : path_ + ".") + it.key() +
                          "'");
      }
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read(Fields& f, TextProfile& p) {
  f.get("min_len", p.min_len);
  f.get("max_len", p.max_len);
  f.get("zipf", p.zipf);
  f.get("rank_seed", p.rank_seed);
}

Json write(const TextProfile& p) {
  return Json{{"min_len", p.min_len}, {"max_len", p.max_len}, {"zipf", p.zipf},
              {"rank_seed", p.rank_seed}};
}

void read(Fields& f, SynthConfig& s) {
  f.get("src_vocab", s.src_vocab);
  f.get("tgt_vocab", s.tgt_vocab);
  f.get("frames_per_token", s.frames_per_token);
  f.get("frame_jitter", s.frame_jitter);
  f.get("frame_dim", s.frame_dim);
  f.get("prototype_scale", s.prototype_scale);
  f.get("min_prototype_distance", s.min_prototype_distance);
  f.get("noise_sigma", s.noise_sigma);
  f.get("blank_prob", s.blank_prob);
  f.get("rule", s.rule);
  f.get("offset", s.offset);
  f.object("base_text", [&](Fields& g) { read(g, s.base_text); });
  f.object("task_speech", [&](Fields& g) { read(g, s.task_speech); });
  f.get("seed", s.seed);
}

Json write(const SynthConfig& s) {
  return Json{{"src_vocab", s.src_vocab},
              {"tgt_vocab", s.tgt_vocab},
              {"frames_per_token", s.frames_per_token},
              {"frame_jitter", s.frame_jitter},
              {"frame_dim", s.frame_dim},
              {"prototype_scale", s.prototype_scale},
              {"min_prototype_distance", s.min_prototype_distance},
              {"noise_sigma", s.noise_sigma},
              {"blank_prob", s.blank_prob},
              {"rule", s.rule},
              {"offset", s.offset},
              {"base_text", write(s.base_text)},
              {"task_speech", write(s.task_speech)},
              {"seed", s.seed}};
}

void read(Fields& f, SplitSizes& s) {
  f.get("train", s.train);
  f.get("dev", s.dev);
  f.get("test", s.test);
}

Json write(const SplitSizes& s) {
  return Json{{"train", s.train}, {"dev", s.dev}, {"test", s.test}};
}

void read(Fields& f, CorpusSpec& c) {
  f.object("base_text", [&](Fields& g) { read(g, c.base_text); });
  f.object("task_speech", [&](Fields& g) { read(g, c.task_speech); });
  if (const Json* seeds = f.raw("split_seeds")) {
    if (!seeds->is_array() || seeds->size() != 3) {
      throw ConfigError(f.path() + ".split_seeds: expected 3 non-negative integers");
    }
    for (std::size_t i = 0; i < 3; ++i) {
      if (!(*seeds)[i].is_number_unsigned()) {
        throw ConfigError(f.path() + ".split_seeds: expected 3 non-negative integers");
      }
      c.split_seeds[i] = (*seeds)[i].get<std::uint64_t>();
    }
  }
}

Json write(const CorpusSpec& c) {
  return Json{{"base_text", write(c.base_text)},
              {"task_speech", write(c.task_speech)},
              {"split_seeds", c.split_seeds}};
}

void read(Fields& f, ModelDims& d) {
  f.get("frame_dim", d.frame_dim);
  f.get("asr_dim", d.asr_dim);
  f.get("mt_dim", d.mt_dim);
  f.get("num_heads", d.num_heads);
  f.get("ff_expansion", d.ff_expansion);
  f.get("conv_kernel", d.conv_kernel);
  f.get("asr_layers", d.asr_layers);
  f.get("exporter_layers", d.exporter_layers);
  f.get("mt_encoder_layers", d.mt_encoder_layers);
  f.get("mt_decoder_layers", d.mt_decoder_layers);
  f.get("src_vocab", d.src_vocab);
  f.get("tgt_vocab", d.tgt_vocab);
  f.get("embed_scale", d.embed_scale);
  f.get("exporter_projection", d.exporter_projection);
  f.get("tied_output", d.tied_output);
  f.get("dropout", d.dropout);
  std::string dtype(dtype_name(d.dtype));
  f.get("dtype", dtype);
  if (dtype == dtype_name(DType::kF32)) {
    d.dtype = DType::kF32;
  } else if (dtype == dtype_name(DType::kF64)) {
    d.dtype = DType::kF64;
  } else {
    throw ConfigError(f.path() + ".dtype: expected float32 or float64, got '" + dtype + "'");
  }
}

Json write(const ModelDims& d) {
  return Json{{"frame_dim", d.frame_dim},
              {"asr_dim", d.asr_dim},
              {"mt_dim", d.mt_dim},
              {"num_heads", d.num_heads},
              {"ff_expansion", d.ff_expansion},
              {"conv_kernel", d.conv_kernel},
              {"asr_layers", d.asr_layers},
              {"exporter_layers", d.exporter_layers},
              {"mt_encoder_layers", d.mt_encoder_layers},
              {"mt_decoder_layers", d.mt_decoder_layers},
              {"src_vocab", d.src_vocab},
              {"tgt_vocab", d.tgt_vocab},
              {"embed_scale", d.embed_scale},
              {"exporter_projection", d.exporter_projection},
              {"tied_output", d.tied_output},
              {"dropout", d.dropout},
              {"dtype", std::string(dtype_name(d.dtype))}};
}

void read(Fields& f, StageConfig& s) {
  f.get("steps", s.steps);
  f.get("batch_size", s.batch_size);
  f.get("peak_lr", s.peak_lr);
  f.get("warmup_steps", s.warmup_steps);
  f.get("clip_norm", s.clip_norm);
  f.get("label_smoothing", s.label_smoothing);
  f.get("ema_decay", s.ema_decay);
  f.get("log_interval", s.log_interval);
  f.get("seed", s.seed);
  f.get("max_skipped", s.max_skipped);
  f.get("l2_targets", s.l2_targets);
}

Json write(const StageConfig& s) {
  return Json{{"steps", s.steps},
              {"batch_size", s.batch_size},
              {"peak_lr", s.peak_lr},
              {"warmup_steps", s.warmup_steps},
              {"clip_norm", s.clip_norm},
              {"label_smoothing", s.label_smoothing},
              {"ema_decay", s.ema_decay},
              {"log_interval", s.log_interval},
              {"seed", s.seed},
              {"max_skipped", s.max_skipped},
              {"l2_targets", s.l2_targets}};
}

Json to_json(const RunConfig& c, bool with_paths) {
  Json j{{"seed", c.seed},
         {"synth", write(c.synth)},
         {"corpus", write(c.corpus)},
         {"model", write(c.model)},
         {"stages",
          Json{{"asr", write(c.stages.asr)},
               {"mt", write(c.stages.mt)},
               {"mt_adapt", write(c.stages.mt_adapt)},
               {"matcher", write(c.stages.matcher)},
               {"finetune", write(c.stages.finetune)}}},
         {"beam_size", c.beam_size},
         {"matcher_tau", c.matcher_tau}};
  if (with_paths) j["paths"] = Json{{"data", c.paths.data}, {"out", c.paths.out}};
  return j;
}

}  // namespace

StageSet default_stages() {
  StageSet s;
  s.asr.steps = 3000;
  s.asr.batch_size = 8;
  s.asr.peak_lr = 2e-3;
  s.asr.warmup_steps = 200;
  s.asr.ema_decay = 0.999;
  s.asr.seed = 11;

  s.mt.steps = 3000;
  s.mt.batch_size = 16;
  s.mt.peak_lr = 2e-3;
  s.mt.warmup_steps = 200;
  s.mt.ema_decay = 0.999;
  s.mt.seed = 12;

  s.mt_adapt = s.mt;
  s.mt_adapt.steps = 800;
  s.mt_adapt.peak_lr = 5e-4;
  s.mt_adapt.seed = 13;

  s.matcher.steps = 1500;
  s.matcher.batch_size = 8;
  s.matcher.peak_lr = 3e-3;
  s.matcher.warmup_steps = 100;
  s.matcher.seed = 14;

  s.finetune.steps = 800;
  s.finetune.batch_size = 8;
  s.finetune.peak_lr = 2e-4;
  s.finetune.warmup_steps = 100;
  s.finetune.seed = 15;
  return s;
}

SynthConfig RunConfig::default_synth() {
  SynthConfig s;
  s.noise_sigma = 1.2;
  return s;
}

ModelDims RunConfig::default_model() {
  ModelDims d;
  d.exporter_projection = true;
  return d;
}

void RunConfig::validate() const {
  try {
    synth.validate();
    model.validate();
    for (const StageConfig* s :
         {&stages.asr, &stages.mt, &stages.mt_adapt, &stages.matcher, &stages.finetune}) {
      s->validate();
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (synth.src_vocab != model.src_vocab || synth.tgt_vocab != model.tgt_vocab) {
    throw ConfigError("synth and model vocab sizes differ");
  }
  if (synth.frame_dim != model.frame_dim) throw ConfigError("synth and model frame_dim differ");
  if (beam_size == 0) throw ConfigError("beam_size must be >= 1");
  if (!(matcher_tau > 0.0)) throw ConfigError("matcher_tau must be > 0");
  const auto& s = corpus.split_seeds;
  if (s[0] == s[1] || s[0] == s[2] || s[1] == s[2]) {
    throw ConfigError("corpus.split_seeds must be pairwise distinct");
  }
}

RunConfig parse_config(const std::string& json_text) {
  Json j;
  try {
    j = Json::parse(json_text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  try {
    Fields f(j, "");
    f.get("seed", c.seed);
    f.object("synth", [&](Fields& g) { read(g, c.synth); });
    f.object("corpus", [&](Fields& g) { read(g, c.corpus); });
    f.object("model", [&](Fields& g) { read(g, c.model); });
    f.object("stages", [&](Fields& g) {
      g.object("asr", [&](Fields& h) { read(h, c.stages.asr); });
      g.object("mt", [&](Fields& h) { read(h, c.stages.mt); });
      g.object("mt_adapt", [&](Fields& h) { read(h, c.stages.mt_adapt); });
      g.object("matcher", [&](Fields& h) { read(h, c.stages.matcher); });
      g.object("finetune", [&](Fields& h) { read(h, c.stages.finetune); });
    });
    f.get("beam_size", c.beam_size);
    f.get("matcher_tau", c.matcher_tau);
    f.object("paths", [&](Fields& g) {
      g.get("data", c.paths.data);
      g.get("out", c.paths.out);
    });
    f.finish();
  } catch (const Json::exception& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const RunConfig& config) { return to_json(config, true).dump(2) + "\n"; }

Digest config_hash(const RunConfig& config) { return sha256(to_json(config, false).dump()); }

}  // namespace mecc
