#include "mecc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "json.hpp"

namespace mecc {

std::size_t edit_distance(std::span<const TokenId> ref, std::span<const TokenId> hyp) {
  std::vector<std::size_t> prev(hyp.size() + 1), cur(hyp.size() + 1);
  for (std::size_t j = 0; j <= hyp.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= hyp.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[hyp.size()];
}

std::optional<double> wer(std::span<const TokenId> ref, std::span<const TokenId> hyp) {
  if (ref.empty()) return std::nullopt;
  return static_cast<double>(edit_distance(ref, hyp)) / static_cast<double>(ref.size());
}

void WerAccumulator::add(std::span<const TokenId> ref, std::span<const TokenId> hyp) {
  if (ref.empty()) {
    ++skipped;
    return;
  }
  distance += edit_distance(ref, hyp);
  ref_tokens += ref.size();
  ++utterances;
}

std::optional<double> WerAccumulator::value() const {
  if (ref_tokens == 0) return std::nullopt;
  return static_cast<double>(distance) / static_cast<double>(ref_tokens);
}

void BleuStats::add(std::span<const TokenId> ref, std::span<const TokenId> hyp) {
  for (std::size_t n = 1; n <= 4; ++n) {
    std::map<std::vector<TokenId>, std::size_t> ref_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i) {
      ++ref_counts[std::vector<TokenId>(ref.begin() + i, ref.begin() + i + n)];
    }
    std::map<std::vector<TokenId>, std::size_t> hyp_counts;
    for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
      ++hyp_counts[std::vector<TokenId>(hyp.begin() + i, hyp.begin() + i + n)];
    }
    for (const auto& [gram, count] : hyp_counts) {
      auto it = ref_counts.find(gram);
      matches[n - 1] += it == ref_counts.end() ? 0 : std::min(count, it->second);
      totals[n - 1] += count;
    }
  }
  hyp_len += hyp.size();
  ref_len += ref.size();
  ++sentences;
}

double bleu(const BleuStats& s) {
  if (s.hyp_len == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    const double p = s.matches[n] == 0
                         ? 1.0 / static_cast<double>(s.totals[n] + 1)
                         : static_cast<double>(s.matches[n]) / static_cast<double>(s.totals[n]);
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(s.hyp_len), r = static_cast<double>(s.ref_len);
  const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return 100.0 * bp * std::exp(log_sum / 4.0);
}

double corpus_bleu(const std::vector<Tokens>& refs, const std::vector<Tokens>& hyps) {
  if (refs.empty()) throw std::invalid_argument("corpus_bleu: empty corpus");
  if (refs.size() != hyps.size()) {
    throw std::invalid_argument("corpus_bleu: " + std::to_string(refs.size()) + " references vs " +
                                std::to_string(hyps.size()) + " hypotheses");
  }
  BleuStats stats;
  for (std::size_t i = 0; i < refs.size(); ++i) stats.add(refs[i], hyps[i]);
  return bleu(stats);
}

std::optional<double> l2_per_token(const Tensor& exported, const Tensor& targets) {
  if (exported.shape() != targets.shape() || exported.rank() != 2) {
    throw std::invalid_argument("l2_per_token: shapes " + shape_str(exported.shape()) + " and " +
                                shape_str(targets.shape()));
  }
  const std::size_t n = exported.dim(0), e = exported.dim(1);
  if (n == 0) return std::nullopt;
  double total = 0.0;
  for (std::size_t i = 0; i < n * e; ++i) {
    const double d = exported.at(i) - targets.at(i);
    total += d * d;
  }
  return total / static_cast<double>(n);
}

std::string EvalReport::to_json_line() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["stage"] = stage;
  j["split"] = split;
  j["metric"] = metric;
  j["value"] = value;
  j["count"] = count;
  j["skipped"] = skipped;
  return j.dump();
}

EvalReport EvalReport::from_json_line(const std::string& line) {
  auto j = nlohmann::json::parse(line);
  EvalReport r;
  r.step = j.at("step").get<std::int64_t>();
  r.stage = j.at("stage").get<std::string>();
  r.split = j.at("split").get<std::string>();
  r.metric = j.at("metric").get<std::string>();
  r.value = j.at("value").get<double>();
  r.count = j.at("count").get<std::size_t>();
  r.skipped = j.at("skipped").get<std::size_t>();
  return r;
}

MetricsLog::MetricsLog(const std::string& path) : out_(path, std::ios::app) {
  if (!out_) throw std::runtime_error("cannot open metrics log " + path);
}

void MetricsLog::write(const EvalReport& report) {
  if (!std::isfinite(report.value)) {
    throw std::invalid_argument("metrics: non-finite value for " + report.metric);
  }
  out_ << report.to_json_line() << '\n';
  out_.flush();
}

std::vector<EvalReport> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open metrics log " + path);
  std::vector<EvalReport> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(EvalReport::from_json_line(line));
  }
  return out;
}

}  // namespace mecc
