#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mecc/models.hpp"

namespace mecc {
namespace {

struct Hypothesis {
  Tokens seq;  // starts with BOS
  double logp = 0.0;
};

// Ranking while searching: higher cumulative log-prob first, then the
// lexicographically smaller sequence.
bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.logp != b.logp) return a.logp > b.logp;
  return a.seq < b.seq;
}

double normalized(const Hypothesis& h) {
  const auto generated = static_cast<double>(h.seq.size() - 1);
  return generated > 0 ? h.logp / generated : 0.0;
}

}  // namespace

BeamResult beam_search(const StepScorer& scorer, std::size_t beam_size, std::size_t max_len) {
  if (beam_size == 0) throw std::invalid_argument("beam_search: beam_size must be >= 1");
  std::vector<Hypothesis> live{{Tokens{kBos}, 0.0}};
  std::vector<Hypothesis> finished;
  std::vector<Hypothesis> candidates;
  bool finished_enough = false;
  for (std::size_t step = 0; step < max_len; ++step) {
    candidates.clear();
    for (const auto& h : live) {
      const std::vector<double> lp = scorer(h.seq);
      for (std::size_t v = 0; v < lp.size(); ++v) {
        const auto id = static_cast<TokenId>(v);
        if (id == kPad || id == kBos || !std::isfinite(lp[v])) continue;
        Hypothesis c{h.seq, h.logp + lp[v]};
        c.seq.push_back(id);
        candidates.push_back(std::move(c));
      }
    }
    const std::size_t keep = std::min(beam_size, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), better);
    live.clear();
    for (std::size_t i = 0; i < keep; ++i) {
      if (candidates[i].seq.back() == kEos) {
        finished.push_back(std::move(candidates[i]));
      } else {
        live.push_back(std::move(candidates[i]));
      }
    }
    if (finished.size() >= beam_size || live.empty()) {
      finished_enough = true;
      break;
    }
  }
  if (!finished_enough) {
    for (auto& h : live) finished.push_back(std::move(h));
  }
  BeamResult result;
  if (finished.empty()) return result;
  const Hypothesis* best = &finished[0];
  for (const auto& h : finished) {
    const double s = normalized(h), bs = normalized(*best);
    if (s > bs || (s == bs && h.seq < best->seq)) best = &h;
  }
  result.terminated = best->seq.back() == kEos;
  result.score = normalized(*best);
  result.tokens.assign(best->seq.begin() + 1, best->seq.end() - (result.terminated ? 1 : 0));
  return result;
}

BeamResult beam_search(const MtModel& mt, const Var& encoder_output, const BeamConfig& config) {
  const std::size_t max_len = config.max_len.value_or(2 * encoder_output.dim(0) + 5);
  return beam_search(
      [&](const Tokens& prefix) { return mt.next_log_probs(encoder_output, prefix); },
      config.beam_size, max_len);
}

}  // namespace mecc
