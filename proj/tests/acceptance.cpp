// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero
// when any criterion fails.
//
//   acceptance [work_dir]
//   acceptance --quick      in-process criteria only (1, 2, 3, 10)
//
// Criteria 4-9, 11 and 12 drive the mecc binary through the default config.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "mecc/checkpoint.hpp"
#include "mecc/corpus_io.hpp"
#include "mecc/ctc.hpp"
#include "mecc/grad_check.hpp"
#include "mecc/hash.hpp"
#include "mecc/layers.hpp"
#include "mecc/metrics.hpp"
#include "mecc/ops.hpp"
#include "mecc/pipeline.hpp"

using namespace mecc;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

const std::string kBin = MECC_BIN;
const std::string kDefaultConfig = MECC_SOURCE_DIR "/configs/default.json";

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int run_mecc(const std::string& args, const fs::path& log) {
  const std::string cmd = kBin + " " + args + " >> " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Tensor randn(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape), DType::kF64);
  std::normal_distribution<double> d(0.0, scale);
  for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, d(rng));
  return t;
}

// --- 1: CTC loss against path enumeration ----------------------------------

Tokens collapse(const Tokens& path) {
  Tokens out;
  TokenId prev = -1;
  for (TokenId t : path) {
    if (t != prev && t != kBlank) out.push_back(t);
    prev = t;
  }
  return out;
}

// Summed probability of every frame path that collapses to `labels`.
double path_sum(const Tensor& log_probs, const Tokens& labels) {
  const std::size_t T = log_probs.dim(0), V = log_probs.dim(1);
  std::size_t total = 1;
  for (std::size_t t = 0; t < T; ++t) total *= V;
  double p = 0.0;
  Tokens path(T);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t c = code;
    double lp = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      path[t] = static_cast<TokenId>(c % V);
      c /= V;
      lp += log_probs.at(t, static_cast<std::size_t>(path[t]));
    }
    if (collapse(path) == labels) p += std::exp(lp);
  }
  return p;
}

Outcome criterion_ctc_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  std::size_t compared = 0, inadmissible = 0;
  double worst = 0.0;
  bool ok = true;
  while (compared < 300) {
    const std::size_t T = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
    const std::size_t V = std::uniform_int_distribution<std::size_t>(2, 3)(rng);
    Tokens labels(std::uniform_int_distribution<std::size_t>(0, 3)(rng));
    for (auto& l : labels) l = std::uniform_int_distribution<TokenId>(1, static_cast<TokenId>(V - 1))(rng);
    const Tensor lp = ops::log_softmax(Var::constant(randn({T, V}, rng, 2.0))).value();
    const CtcLoss r = ctc_loss(Var::constant(lp), labels);
    const double p = path_sum(lp, labels);
    if (T < ctc_min_frames(labels)) {
      ++inadmissible;
      ok = ok && !r.admissible && p == 0.0;
      continue;
    }
    const double err = std::abs(r.loss.value().item() + std::log(p));
    worst = std::max(worst, err);
    ok = ok && r.admissible && err <= 1e-6;
    ++compared;
  }
  const double secs = seconds_since(t0);
  return {ok && secs < 30.0,
          fmt("%zu cases, worst |diff| %.2e, %zu inadmissible flagged, %.2fs", compared, worst,
              inadmissible, secs)};
}

// --- 2: greedy reduction ----------------------------------------------------

ReducedAlignment reference_reduce(const Tokens& labels) {
  ReducedAlignment out;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    const bool run_end = t + 1 == labels.size() || labels[t + 1] != labels[t];
    if (run_end && labels[t] != kBlank) {
      out.tokens.push_back(labels[t]);
      out.frames.push_back(t);
    }
  }
  return out;
}

Outcome criterion_ctc_reduce() {
  const auto t0 = Clock::now();
  std::size_t exhaustive = 0, mismatches = 0;
  for (std::size_t V = 1; V <= 3; ++V) {
    for (std::size_t T = 0; T <= 6; ++T) {
      std::size_t total = 1;
      for (std::size_t t = 0; t < T; ++t) total *= V;
      Tokens seq(T);
      for (std::size_t code = 0; code < total; ++code) {
        std::size_t c = code;
        for (auto& s : seq) {
          s = static_cast<TokenId>(c % V);
          c /= V;
        }
        mismatches += !(ctc_reduce(seq) == reference_reduce(seq));
        ++exhaustive;
      }
    }
  }
  std::mt19937_64 rng(1002);
  std::size_t violations = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto V = std::uniform_int_distribution<TokenId>(2, 21)(rng);
    Tokens seq(std::uniform_int_distribution<std::size_t>(7, 80)(rng));
    for (auto& s : seq) s = std::uniform_int_distribution<TokenId>(0, V - 1)(rng);
    const ReducedAlignment r = ctc_reduce(seq);
    bool good = r.tokens.size() == r.frames.size();
    for (std::size_t k = 0; good && k < r.size(); ++k) {
      good = r.tokens[k] != kBlank && r.frames[k] < seq.size() && seq[r.frames[k]] == r.tokens[k] &&
             (k == 0 || r.frames[k] > r.frames[k - 1]);
    }
    violations += !good || !(r == reference_reduce(seq));
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && violations == 0 && secs < 10.0,
          fmt("%zu exhaustive sequences, %zu mismatches; 10000 random, %zu violations; %.2fs",
              exhaustive, mismatches, violations, secs)};
}

// --- 3: gradient checks -----------------------------------------------------

Outcome criterion_grad_checks() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1003);
  std::vector<std::string> failed;
  double worst = 0.0;
  std::size_t checked = 0;
  auto check = [&](const std::string& what, const std::function<Var()>& loss,
                   const std::vector<Parameter*>& params,
                   const std::vector<std::pair<std::string, Var>>& inputs) {
    for (const GradCheckReport& r : {grad_check(loss, params), grad_check(loss, inputs)}) {
      if (r.checked == 0) continue;
      checked += r.checked;
      worst = std::max(worst, r.max_rel_err);
      if (!r.passed) failed.push_back(what + " (" + r.summary() + ")");
    }
  };
  // each output is weighted differently so normalized outputs still vary
  auto weighted = [&](const std::function<Var()>& f, Shape shape) {
    Var w = Var::constant(randn(std::move(shape), rng));
    return [f, w] { return ops::sum(ops::mul(f(), w)); };
  };

  {
    ParamSet p(DType::kF64);
    Linear lin(p, "lin", 5, 4, rng);
    Var x = Var::leaf(randn({3, 5}, rng));
    check("Linear", weighted([&] { return lin(x); }, {3, 4}), p.all(), {{"x", x}});
  }
  {
    ParamSet p(DType::kF64);
    LayerNorm ln(p, "ln", 6);
    Var x = Var::leaf(randn({3, 6}, rng));
    check("LayerNorm", weighted([&] { return ln(x); }, {3, 6}), p.all(), {{"x", x}});
  }
  {
    ParamSet p(DType::kF64);
    EmbeddingTable emb(p, "emb", 7, 4, rng, 2.0);
    const std::vector<TokenId> ids{3, 0, 6, 3};
    check("EmbeddingTable", weighted([&] { return emb.lookup(ids); }, {4, 4}), p.all(), {});
  }
  {
    ParamSet p(DType::kF64);
    FeedForward ff(p, "ff", 6, 12, rng);
    Var x = Var::leaf(randn({3, 6}, rng));
    check("FeedForward", weighted([&] { return ff(x); }, {3, 6}), p.all(), {{"x", x}});
  }
  for (const bool causal : {false, true}) {
    ParamSet p(DType::kF64);
    MultiHeadAttention attn(p, "attn", {.model_dim = 8, .num_heads = 2, .causal = causal}, rng);
    Var x = Var::leaf(randn({4, 8}, rng));
    check(causal ? "MultiHeadAttention causal" : "MultiHeadAttention self",
          weighted([&] { return attn(x, x); }, {4, 8}), p.all(), {{"x", x}});
  }
  {
    ParamSet p(DType::kF64);
    MultiHeadAttention attn(p, "attn", {.model_dim = 8, .num_heads = 2, .rotary = false}, rng);
    Var q = Var::leaf(randn({3, 8}, rng));
    Var mem = Var::leaf(randn({5, 8}, rng));
    const std::vector<std::uint8_t> mask{0, 1, 0, 0, 1};
    check("MultiHeadAttention cross", weighted([&] { return attn(q, mem, mask); }, {3, 8}),
          p.all(), {{"q", q}, {"mem", mem}});
  }
  {
    ParamSet p(DType::kF64);
    ConformerBlock block(
        p, "conf", {.model_dim = 8, .num_heads = 2, .conv_kernel = 3, .ff_expansion = 2}, rng);
    Var x = Var::leaf(randn({5, 8}, rng));
    check("ConformerBlock", weighted([&] { return block(x); }, {5, 8}), p.all(), {{"x", x}});
  }
  {
    ParamSet p(DType::kF64);
    TransformerEncoderLayer enc(p, "enc", 8, 2, 16, rng);
    Var x = Var::leaf(randn({4, 8}, rng));
    check("TransformerEncoderLayer", weighted([&] { return enc(x); }, {4, 8}), p.all(),
          {{"x", x}});
  }
  {
    ParamSet p(DType::kF64);
    TransformerDecoderLayer dec(p, "dec", 8, 2, 16, rng);
    Var x = Var::leaf(randn({3, 8}, rng));
    Var mem = Var::leaf(randn({4, 8}, rng));
    check("TransformerDecoderLayer", weighted([&] { return dec(x, mem); }, {3, 8}), p.all(),
          {{"x", x}, {"mem", mem}});
  }
  {
    ModelDims d;
    d.dtype = DType::kF64;
    d.asr_dim = 8;
    d.mt_dim = 4;
    d.num_heads = 2;
    d.ff_expansion = 2;
    d.conv_kernel = 3;
    d.exporter_layers = 1;
    d.exporter_projection = true;
    ParamSet p(DType::kF64);
    Exporter exporter(p, d, rng);
    Var x = Var::leaf(randn({3, 8}, rng));
    check("Exporter", weighted([&] { return exporter.forward(x); }, {3, 4}), p.all(),
          {{"x", x}});
  }
  {
    Var logits = Var::leaf(randn({4, 5}, rng));
    const std::vector<TokenId> targets{1, 0, 4, 2};
    check("label-smoothed cross entropy",
          [&] { return cross_entropy_label_smoothed(logits, targets, 0.1, 0); }, {},
          {{"logits", logits}});
  }
  {
    Var logits = Var::leaf(randn({6, 4}, rng));
    const Tokens labels{2, 2, 3};
    check("ctc_loss", [&] { return ctc_loss(ops::log_softmax(logits), labels).loss; }, {},
          {{"logits", logits}});
  }
  const double secs = seconds_since(t0);
  std::string detail = fmt("%zu elements, worst rel err %.2e, %.1fs", checked, worst, secs);
  for (const auto& f : failed) detail += "; failed: " + f;
  return {failed.empty() && secs < 120.0, detail};
}

// --- 10: metric oracles -----------------------------------------------------

Outcome criterion_metrics() {
  std::vector<std::string> bad;
  const TokenId a = 5, b = 6, c = 7, d = 8;
  if (wer(Tokens{a, b, c}, Tokens{a, c}) != 1.0 / 3.0) bad.push_back("wer deletion");
  if (wer(Tokens{a, b, c, d}, Tokens{a, b, c, d}) != 0.0) bad.push_back("wer identical");
  if (edit_distance(Tokens{a}, Tokens{b, c}) != 2 || wer(Tokens{a}, Tokens{b, c}) != 2.0) {
    bad.push_back("wer sub+ins");
  }
  const std::vector<Tokens> refs{{a, b, c, d}, {b, c}, {d, d, a, b, c}};
  if (corpus_bleu(refs, refs) != 100.0) bad.push_back("bleu identical");
  if (corpus_bleu(refs, {{}, {}, {}}) != 0.0) bad.push_back("bleu empty");
  // p1 = 3/4, p2 = 2/3, p3 = 1/2, p4 = 0/1 smoothed to 1/2, BP = 1
  const double hand = 100.0 * std::pow(0.75 * (2.0 / 3.0) * 0.5 * 0.5, 0.25);
  const double got = corpus_bleu({{a, b, c, d}}, {{a, b, c, c}});
  if (std::abs(got - hand) > 1e-9) bad.push_back(fmt("bleu hand pair %.12f vs %.12f", got, hand));
  std::string detail = "wer 3 examples, bleu 3 examples";
  for (const auto& s : bad) detail += "; mismatch: " + s;
  return {bad.empty(), detail};
}

// --- pipeline ---------------------------------------------------------------

struct Pipeline {
  fs::path root;
  fs::path log;
  std::map<std::string, double> seconds;
  std::vector<std::string> errors;

  std::string ckpt(const std::string& stage) const { return (root / stage / "model.ckpt").string(); }
  std::string common(const std::string& config) const {
    return "--config " + config + " --data " + (root / "data").string();
  }
  void step(const std::string& name, const std::string& args) {
    const auto t0 = Clock::now();
    const int code = run_mecc(args + " --out " + (root / name).string(), log);
    seconds[name] = seconds_since(t0);
    std::cerr << "  " << name << " " << fmt("%.0fs", seconds[name]) << " exit " << code << "\n";
    if (code != 0) errors.push_back(fmt("%s exit %d", name.c_str(), code));
  }
};

// gen-data, ASR, base and adapted MT, matcher and matcher-initialized
// fine-tuning on both MTs, plus the random-init ablation on the base MT.
Pipeline run_pipeline(const fs::path& root, bool with_ablation) {
  fs::remove_all(root);
  fs::create_directories(root);
  Pipeline p{root, root / "mecc.log"};
  const std::string c = p.common(kDefaultConfig);
  std::cerr << "pipeline in " << root << "\n";
  p.step("data", "gen-data --config " + kDefaultConfig);
  p.step("asr", "train-asr " + c);
  p.step("mt", "train-mt " + c + " --ckpt " + p.ckpt("asr"));
  p.step("mt_adapt", "adapt-mt " + c + " --ckpt " + p.ckpt("mt"));
  p.step("matcher_base", "train-matcher " + c + " --ckpt " + p.ckpt("mt"));
  p.step("matcher_adapt", "train-matcher " + c + " --ckpt " + p.ckpt("mt_adapt"));
  p.step("ft_base", "finetune-exporter " + c + " --ckpt " + p.ckpt("matcher_base"));
  p.step("ft_adapt", "finetune-exporter " + c + " --ckpt " + p.ckpt("matcher_adapt"));
  if (with_ablation) {
    p.step("ft_base_random",
           "finetune-exporter " + c + " --init random --ckpt " + p.ckpt("matcher_base"));
  }
  return p;
}

std::optional<double> metric(const fs::path& stage_dir, const std::string& name, bool last) {
  std::optional<double> out;
  for (const EvalReport& r : read_metrics((stage_dir / "metrics.jsonl").string())) {
    if (r.metric != name) continue;
    if (!last && !out) return r.value;
    out = r.value;
  }
  return out;
}

std::map<std::string, Digest> digests(const Checkpoint& ckpt, const std::string& prefix) {
  std::map<std::string, Digest> out;
  for (const auto& e : ckpt.entries) {
    if (e.name.rfind(prefix, 0) == 0) out[e.name] = tensor_sha256(e.value);
  }
  return out;
}

Outcome criterion_bypass(const Pipeline& p) {
  const RunConfig config = load_config(kDefaultConfig);
  const auto dev = load_part((p.root / "data").string(), Distribution::kTaskSpeech, Split::kDev);
  const BeamConfig beam{config.beam_size, std::nullopt};

  auto mt_sys = load_system(config, {p.ckpt("mt")});
  LookupExporter lookup(mt_sys->mt());
  const Hypotheses one_best = translate_all(*mt_sys, dev, EvalMode::kOneBest, beam);
  const Hypotheses identity = translate_all(*mt_sys, dev, EvalMode::kMatched, beam, &lookup);
  const double identity_agree = agreement(one_best.hyps, identity.hyps);

  auto matched_sys = load_system(config, {p.ckpt("matcher_base")});
  const Hypotheses matched = translate_all(*matched_sys, dev, EvalMode::kMatched, beam);
  const double agree = agreement(one_best.hyps, matched.hyps);
  const double bleu_gap = std::abs(hypotheses_bleu(matched) - hypotheses_bleu(one_best));
  const auto converged = metric(p.root / "matcher_base", "converged", true);

  return {dev.size() == 500 && identity_agree == 1.0 && converged == 1.0 && agree >= 0.9 &&
              bleu_gap <= 0.5,
          fmt("identity exporter agreement %.1f%% on %zu dev; after matcher (tau reached: %s) "
              "agreement %.1f%%, |BLEU diff| %.2f",
              100.0 * identity_agree, dev.size(), converged == 1.0 ? "yes" : "no", 100.0 * agree,
              bleu_gap)};
}

Outcome criterion_freezing(const Pipeline& p) {
  const Checkpoint before = load_checkpoint(p.ckpt("mt"));
  std::size_t checked = 0;
  bool ok = true;
  for (const std::string stage : {"matcher_base", "ft_base"}) {
    const std::string prev = stage == std::string("matcher_base") ? "mt" : "matcher_base";
    const Checkpoint in = load_checkpoint(p.ckpt(prev)), out = load_checkpoint(p.ckpt(stage));
    for (const std::string prefix : {"asr.", "mt."}) {
      const auto a = digests(before, prefix), b = digests(out, prefix);
      ok = ok && !a.empty() && a == b;
      checked += b.size();
    }
    const auto ea = digests(in, "exporter."), eb = digests(out, "exporter.");
    for (const auto& [name, sha] : eb) ok = ok && ea.at(name) != sha;
  }
  return {ok, fmt("%zu asr/mt tensors compared across matcher and fine-tuning; every exporter "
                  "tensor changed: %s",
                  checked, ok ? "yes" : "no")};
}

Outcome criterion_matcher(const Pipeline& p) {
  const auto l0 = metric(p.root / "matcher_base", "l2_per_token", false);
  const auto l1 = metric(p.root / "matcher_base", "l2_per_token", true);
  if (!l0 || !l1) return {false, "missing l2_per_token records"};
  const double secs = p.seconds.at("matcher_base");
  return {*l1 < 0.1 * *l0 && secs < 300.0,
          fmt("dev l2_per_token %.4f -> %.4f (%.2f%% of step 0), %.0fs", *l0, *l1,
              100.0 * *l1 / *l0, secs)};
}

std::optional<double> gain(const fs::path& dir) {
  const auto b0 = metric(dir, "bleu_matched", false), b1 = metric(dir, "bleu_matched", true);
  if (!b0 || !b1) return std::nullopt;
  return *b1 - *b0;
}

Outcome criterion_base_gain(const Pipeline& p) {
  const auto g = gain(p.root / "ft_base");
  if (!g) return {false, "missing bleu_matched records"};
  const double secs = p.seconds.at("ft_base");
  return {*g >= 2.0 && secs < 900.0,
          fmt("matched BLEU %.2f -> %.2f (gain %+.2f), fine-tuning %.0fs",
              *metric(p.root / "ft_base", "bleu_matched", false),
              *metric(p.root / "ft_base", "bleu_matched", true), *g, secs)};
}

Outcome criterion_adapted_gain(const Pipeline& p) {
  const auto base = gain(p.root / "ft_base"), adapted = gain(p.root / "ft_adapt");
  if (!base || !adapted) return {false, "missing bleu_matched records"};
  return {*adapted < *base, fmt("gain with adapted MT %+.2f vs base MT %+.2f", *adapted, *base)};
}

Outcome criterion_ablation(Pipeline& p) {
  struct Seed {
    std::uint64_t matcher, finetune;
  };
  const std::vector<Seed> seeds{{14, 15}, {24, 25}, {34, 35}};
  int wins = 0;
  std::string detail;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    std::string config = kDefaultConfig, suffix;
    if (i > 0) {
      const fs::path path = p.root / fmt("seed%zu.json", i);
      std::ofstream(path) << fmt(R"({"stages": {"matcher": {"seed": %llu}, "finetune": {"seed": %llu}}})",
                                 static_cast<unsigned long long>(seeds[i].matcher),
                                 static_cast<unsigned long long>(seeds[i].finetune));
      config = path.string();
      suffix = fmt("_s%zu", i);
      const std::string c = p.common(config);
      p.step("matcher_base" + suffix, "train-matcher " + c + " --ckpt " + p.ckpt("mt"));
      p.step("ft_base" + suffix,
             "finetune-exporter " + c + " --ckpt " + p.ckpt("matcher_base" + suffix));
      p.step("ft_base_random" + suffix, "finetune-exporter " + c + " --init random --ckpt " +
                                            p.ckpt("matcher_base" + suffix));
    }
    const auto m = metric(p.root / ("ft_base" + suffix), "bleu_matched", true);
    const auto r = metric(p.root / ("ft_base_random" + suffix), "bleu_matched", true);
    if (!m || !r) return {false, "missing bleu_matched records"};
    wins += *m >= *r;
    detail += fmt("%sseed %llu/%llu: matcher %.2f vs random %.2f", i ? "; " : "",
                  static_cast<unsigned long long>(seeds[i].matcher),
                  static_cast<unsigned long long>(seeds[i].finetune), *m, *r);
  }
  return {wins >= 2, fmt("matcher init >= random in %d of 3; ", wins) + detail};
}

Outcome criterion_round_trip(const Pipeline& p) {
  const fs::path original = p.ckpt("ft_base");
  const fs::path copy = p.root / "roundtrip.ckpt";
  save_checkpoint(copy.string(), load_checkpoint(original.string()));
  const std::string bytes = slurp(original);
  const bool identical = bytes == slurp(copy);

  const fs::path corrupt = p.root / "corrupt.ckpt", truncated = p.root / "truncated.ckpt";
  std::string flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x10;
  std::ofstream(corrupt, std::ios::binary) << flipped;
  std::ofstream(truncated, std::ios::binary) << bytes.substr(0, bytes.size() - 7);
  const int corrupt_code = run_mecc("inspect-ckpt --path " + corrupt.string(), p.log);
  const int truncated_code = run_mecc("inspect-ckpt --path " + truncated.string(), p.log);
  const int stage_code = run_mecc("train-matcher --config " + kDefaultConfig + " --data " +
                                      (p.root / "data").string() + " --ckpt " +
                                      truncated.string() + " --out " +
                                      (p.root / "rejected").string(),
                                  p.log);
  const bool rejected = corrupt_code == kExitData && truncated_code == kExitData &&
                        stage_code == kExitData;
  return {identical && rejected,
          fmt("save-load-save identical: %s; exit codes corrupted %d, truncated %d, stage on "
              "truncated input %d (expected %d)",
              identical ? "yes" : "no", corrupt_code, truncated_code, stage_code, kExitData)};
}

Outcome criterion_determinism(const Pipeline& a, const Pipeline& b) {
  std::size_t compared = 0;
  std::vector<std::string> differ;
  for (const auto& entry : fs::recursive_directory_iterator(a.root)) {
    const std::string name = entry.path().filename().string();
    const bool tracked = name == "model.ckpt" || name == "metrics.jsonl" ||
                         entry.path().extension() == ".mecr" || name == "manifest.json";
    if (!entry.is_regular_file() || !tracked) continue;
    const fs::path rel = fs::relative(entry.path(), a.root);
    if (!fs::exists(b.root / rel)) continue;
    ++compared;
    if (slurp(entry.path()) != slurp(b.root / rel)) differ.push_back(rel.string());
  }
  std::string detail = fmt("%zu files byte-compared across two runs", compared);
  for (const auto& d : differ) detail += "; differs: " + d;
  return {differ.empty() && compared >= 20, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string arg = argc > 1 ? argv[1] : "";
  const bool quick = arg == "--quick";
  const fs::path work =
      arg.empty() || quick ? fs::temp_directory_path() / "mecc_acceptance" : fs::path(arg);
  std::map<int, Outcome> results;
  auto record = [&](int n, const std::function<Outcome()>& f) {
    try {
      results[n] = f();
    } catch (const std::exception& e) {
      results[n] = {false, std::string("exception: ") + e.what()};
    }
    std::cerr << "criterion " << n << " done: " << (results[n].pass ? "PASS" : "FAIL") << "\n";
  };

  record(1, criterion_ctc_oracle);
  record(2, criterion_ctc_reduce);
  record(3, criterion_grad_checks);
  record(10, criterion_metrics);

  if (!quick) {
  Pipeline first = run_pipeline(work / "run1", true);
  auto with_first = [&](Outcome (*f)(const Pipeline&)) {
    return [&first, f] {
      if (!first.errors.empty()) return Outcome{false, "pipeline failed: " + first.errors.front()};
      return f(first);
    };
  };
  record(4, with_first(criterion_bypass));
  record(5, with_first(criterion_freezing));
  record(6, with_first(criterion_matcher));
  record(7, with_first(criterion_base_gain));
  record(8, with_first(criterion_adapted_gain));
  record(9, [&] { return criterion_ablation(first); });
  record(12, with_first(criterion_round_trip));

  Pipeline second = run_pipeline(work / "run2", false);
  record(11, [&] {
    if (!second.errors.empty()) return Outcome{false, "pipeline failed: " + second.errors.front()};
    return criterion_determinism(first, second);
  });
  }

  int failures = 0;
  for (const auto& [n, o] : results) {
    std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail
              << "\n";
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
