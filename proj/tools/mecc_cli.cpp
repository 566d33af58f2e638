// mecc: corpus generation, the five training stages, evaluation, decoding and
// checkpoint inspection.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "mecc/checkpoint.hpp"
#include "mecc/corpus_io.hpp"
#include "mecc/pipeline.hpp"

namespace {

using namespace mecc;

struct Common {
  std::string config_path;
  std::string data;
  std::string out;
};

RunConfig resolve(const Common& c) {
  RunConfig config = c.config_path.empty() ? RunConfig{} : load_config(c.config_path);
  if (!c.data.empty()) config.paths.data = c.data;
  if (!c.out.empty()) config.paths.out = c.out;
  config.validate();
  return config;
}

void print(const std::vector<EvalReport>& records) {
  for (const auto& r : records) std::cout << r.to_json_line() << '\n';
}

std::string join(const Tokens& t) {
  std::string s;
  for (std::size_t i = 0; i < t.size(); ++i) s += (i ? " " : "") + std::to_string(t[i]);
  return s;
}

int inspect(const std::string& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  std::cout << "stage " << ckpt.meta.stage << " step " << ckpt.meta.step << " seed "
            << ckpt.meta.seed << " config " << to_hex(ckpt.meta.config_hash) << '\n';
  for (const auto& e : ckpt.entries) {
    std::cout << e.name << ' ' << shape_str(e.value.shape()) << ' ' << dtype_name(e.value.dtype())
              << " frozen=" << (e.frozen ? "true" : "false") << ' '
              << to_hex(tensor_sha256(e.value)) << '\n';
  }
  return kExitOk;
}

int summarize(const std::vector<std::string>& files) {
  std::printf("| run | stage | split | metric | step | value | count |\n");
  std::printf("|---|---|---|---|---|---|---|\n");
  for (const auto& file : files) {
    std::map<std::tuple<std::string, std::string, std::string>, EvalReport> first, last;
    std::vector<std::tuple<std::string, std::string, std::string>> order;
    for (const auto& r : read_metrics(file)) {
      auto key = std::make_tuple(r.stage, r.split, r.metric);
      if (!first.count(key)) {
        first[key] = r;
        order.push_back(key);
      }
      last[key] = r;
    }
    const std::string run = std::filesystem::path(file).parent_path().filename().string();
    for (const auto& key : order) {
      for (const EvalReport* r : {&first[key], &last[key]}) {
        std::printf("| %s | %s | %s | %s | %lld | %.4f | %zu |\n", run.c_str(), r->stage.c_str(),
                    r->split.c_str(), r->metric.c_str(), static_cast<long long>(r->step), r->value,
                    r->count);
        if (first[key] == last[key]) break;
      }
    }
  }
  return kExitOk;
}

int decode(const RunConfig& config, const std::vector<std::string>& ckpts, EvalMode mode,
           Distribution dist, Split split, std::size_t index) {
  auto sys = load_system(config, ckpts);
  const auto data = load_part(config.paths.data, dist, split);
  if (index >= data.size()) {
    throw DataError("--index " + std::to_string(index) + " out of range (" +
                    std::to_string(data.size()) + " utterances)");
  }
  const Example& ex = data[index];
  const BeamConfig beam{config.beam_size, std::nullopt};
  std::cout << "source " << join(ex.src) << '\n';
  std::cout << "reference " << join(strip_specials(ex.tgt)) << '\n';
  if (mode == EvalMode::kTranscript) {
    const BeamResult r = translate_tokens(sys->mt(), ex.src, beam);
    std::cout << "translation " << join(r.tokens) << (r.terminated ? "" : " [unterminated]")
              << '\n';
    return kExitOk;
  }
  if (ex.frames.dim(0) == 0) throw DataError("decode: cascade modes need speech data");
  const Translation t = cascade_translate(
      sys->asr(), &sys->exporter(), sys->mt(), ex.frames,
      mode == EvalMode::kOneBest ? CascadeMode::kOneBest : CascadeMode::kMatched, beam);
  std::cout << "reduced " << join(t.reduced.tokens) << '\n';
  std::cout << "frames";
  for (std::size_t f : t.reduced.frames) std::cout << ' ' << f;
  std::cout << " (of " << ex.frames.dim(0) << ")\n";
  std::cout << "translation " << join(t.result.tokens)
            << (t.empty_asr ? " [empty asr]" : t.result.terminated ? "" : " [unterminated]")
            << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"matched-embeddings cascade speech translation"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub, bool with_out) {
    sub->add_option("--config", common.config_path, "run config (JSON); defaults built in")
        ->check(CLI::ExistingFile);
    sub->add_option("--data", common.data, "corpus directory (overrides paths.data)");
    if (with_out) sub->add_option("--out", common.out, "output directory")->required();
  };

  auto* gen = app.add_subcommand("gen-data", "write the synthetic corpus");
  add_common(gen, true);

  struct StageCmd {
    const char* name;
    StageKind kind;
    CLI::App* app;
  };
  std::vector<StageCmd> stages = {{"train-asr", StageKind::kAsr, nullptr},
                                  {"train-mt", StageKind::kMt, nullptr},
                                  {"adapt-mt", StageKind::kMtAdapt, nullptr},
                                  {"train-matcher", StageKind::kMatcher, nullptr},
                                  {"finetune-exporter", StageKind::kFinetune, nullptr}};
  std::string init_ckpt, exporter_init = "matcher";
  for (auto& s : stages) {
    s.app = app.add_subcommand(s.name, std::string("run the ") + stage_name(s.kind) + " stage");
    add_common(s.app, true);
    s.app->add_option("--ckpt", init_ckpt, "input checkpoint");
    if (s.kind == StageKind::kFinetune) {
      s.app->add_option("--init", exporter_init, "exporter start: matcher or random")
          ->check(CLI::IsMember({"matcher", "random"}));
    }
  }

  std::vector<std::string> ckpts;
  std::string mode = "one-best", split = "dev", dist = "task_speech", log_path;
  bool lookup = false;
  std::size_t limit = 0, index = 0;
  auto* eval = app.add_subcommand("evaluate", "print WER, BLEU and l2 records");
  add_common(eval, false);
  eval->add_option("--ckpts", ckpts, "checkpoints, applied in order")->required();
  eval->add_option("--mode", mode)->check(CLI::IsMember({"transcript", "one-best", "matched"}));
  eval->add_option("--split", split)->check(CLI::IsMember({"train", "dev", "test"}));
  eval->add_option("--dist", dist)->check(CLI::IsMember({"task_speech", "base_text"}));
  eval->add_flag("--lookup-exporter", lookup,
                 "test only: matched mode through the MT embedding lookup");
  eval->add_option("--limit", limit, "first N utterances only");
  eval->add_option("--log", log_path, "also append the records to this metrics log");

  auto* dec = app.add_subcommand("decode", "translate one stored utterance");
  add_common(dec, false);
  dec->add_option("--ckpts", ckpts, "checkpoints, applied in order")->required();
  dec->add_option("--mode", mode)->check(CLI::IsMember({"transcript", "one-best", "matched"}));
  dec->add_option("--split", split)->check(CLI::IsMember({"train", "dev", "test"}));
  dec->add_option("--dist", dist)->check(CLI::IsMember({"task_speech", "base_text"}));
  dec->add_option("--index", index)->required();

  auto* show = app.add_subcommand("print-config", "print the resolved run config");
  add_common(show, false);

  std::string ckpt_path;
  auto* ins = app.add_subcommand("inspect-ckpt", "list checkpoint parameters");
  ins->add_option("--path", ckpt_path)->required();

  std::vector<std::string> metric_files;
  auto* sum = app.add_subcommand("summarize", "first/last value of every metric as a table");
  sum->add_option("--metrics", metric_files, "metrics.jsonl files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) {
      const RunConfig config = resolve(common);
      std::cout << "corpus " << gen_data_command(config, common.out) << '\n';
      return kExitOk;
    }
    for (const auto& s : stages) {
      if (!*s.app) continue;
      const RunConfig config = resolve(common);
      StageRequest req;
      req.kind = s.kind;
      req.data_dir = config.paths.data;
      if (!init_ckpt.empty()) req.init_ckpt = init_ckpt;
      req.out_dir = common.out;
      req.exporter_init = exporter_init;
      const StageResult r = stage_command(config, req);
      std::fprintf(stderr, "%s: %zu steps, loss %.4f -> %.4f, %zu skipped\n", stage_name(s.kind),
                   r.report.steps, r.report.first_loss, r.report.last_loss, r.report.skipped);
      print(r.evals);
      return kExitOk;
    }
    if (*eval) {
      const RunConfig config = resolve(common);
      EvalRequest req;
      req.data_dir = config.paths.data;
      req.ckpts = ckpts;
      req.mode = parse_eval_mode(mode);
      req.split = parse_split(split);
      req.dist = dist == "base_text" ? Distribution::kBaseText : Distribution::kTaskSpeech;
      req.lookup_exporter = lookup;
      req.limit = limit;
      const auto records = evaluate_command(config, req);
      print(records);
      if (!log_path.empty()) {
        MetricsLog log(log_path);
        for (const auto& r : records) log.write(r);
      }
      return kExitOk;
    }
    if (*dec) {
      return decode(resolve(common), ckpts, parse_eval_mode(mode),
                    dist == "base_text" ? Distribution::kBaseText : Distribution::kTaskSpeech,
                    parse_split(split), index);
    }
    if (*show) {
      std::cout << dump_config(resolve(common));
      return kExitOk;
    }
    if (*ins) return inspect(ckpt_path);
    if (*sum) return summarize(metric_files);
  } catch (const std::exception& e) {
    std::cerr << "mecc: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kExitUsage;
}
