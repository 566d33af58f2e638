#pragma once
// CTC over a vocabulary whose id 0 is the blank symbol.

#include <cstddef>
#include <span>
#include <vector>

#include "mecc/autograd.hpp"
#include "mecc/types.hpp"

namespace mecc {

inline constexpr TokenId kBlank = 0;

// Greedy CTC reduction result. tokens[i] was emitted by the run of frames
// ending at frames[i]; frames is strictly increasing and no token is blank.
struct ReducedAlignment {
  Tokens tokens;
  std::vector<std::size_t> frames;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
  bool operator==(const ReducedAlignment&) const = default;
};

struct CtcLoss {
  Var loss;  // -log P(labels | log_probs); +inf when inadmissible
  bool admissible = true;
};

// Frames needed to emit `labels`: one per label plus a blank between every
// pair of equal neighbours.
std::size_t ctc_min_frames(std::span<const TokenId> labels);

// log_probs: [T, V] per-frame log-softmax outputs. Labels must not contain
// the blank and must be < V (std::invalid_argument otherwise). Differentiable
// with respect to log_probs; an inadmissible pair yields +inf, flagged, with
// no gradient.
CtcLoss ctc_loss(const Var& log_probs, std::span<const TokenId> labels);

// Per-frame argmax; ties go to the lowest id.
Tokens greedy_frame_labels(const Tensor& log_probs);

// Drops blanks and collapses runs of one token, keeping the last frame index
// of each run. [a, blank, a] stays two tokens.
ReducedAlignment ctc_reduce(std::span<const TokenId> frame_labels);

}  // namespace mecc
