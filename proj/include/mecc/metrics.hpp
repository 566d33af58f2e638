#pragma once
// WER, token-level corpus BLEU, l2-per-token, and the metric records written
// by every stage.

#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mecc/tensor.hpp"
#include "mecc/types.hpp"

namespace mecc {

// Levenshtein distance with unit substitution, insertion and deletion costs.
std::size_t edit_distance(std::span<const TokenId> ref, std::span<const TokenId> hyp);

// edit_distance / |ref|; absent for an empty reference.
std::optional<double> wer(std::span<const TokenId> ref, std::span<const TokenId> hyp);

// Corpus WER: summed distances over summed reference lengths. Utterances with
// an empty reference are counted in `skipped` and otherwise ignored.
struct WerAccumulator {
  std::size_t distance = 0;
  std::size_t ref_tokens = 0;
  std::size_t utterances = 0;
  std::size_t skipped = 0;

  void add(std::span<const TokenId> ref, std::span<const TokenId> hyp);
  std::optional<double> value() const;
};

// Clipped n-gram statistics, n = 1..4.
struct BleuStats {
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
  std::size_t sentences = 0;

  void add(std::span<const TokenId> ref, std::span<const TokenId> hyp);
};

// 100 * BP * exp(mean_n log p_n). An order with zero matches uses
// p_n = 1 / (totals_n + 1). BP = 1 when hyp_len >= ref_len, otherwise
// exp(1 - ref_len / hyp_len), and 0 when every hypothesis is empty.
double bleu(const BleuStats& stats);

// Throws std::invalid_argument on an empty corpus or mismatched sizes.
double corpus_bleu(const std::vector<Tokens>& refs, const std::vector<Tokens>& hyps);

// Mean over rows of the per-row sum of squared differences; absent for zero
// rows. Throws std::invalid_argument on a shape mismatch.
std::optional<double> l2_per_token(const Tensor& exported, const Tensor& targets);

// One metric record. Serialized as a single JSON line with keys
// step, stage, split, metric, value, count, skipped.
struct EvalReport {
  std::int64_t step = 0;
  std::string stage;
  std::string split;
  std::string metric;
  double value = 0.0;
  std::size_t count = 0;
  std::size_t skipped = 0;

  std::string to_json_line() const;
  static EvalReport from_json_line(const std::string& line);
  bool operator==(const EvalReport&) const = default;
};

// Append-only JSONL metrics log.
class MetricsLog {
 public:
  explicit MetricsLog(const std::string& path);
  void write(const EvalReport& report);

 private:
  std::ofstream out_;
};

std::vector<EvalReport> read_metrics(const std::string& path);

}  // namespace mecc
