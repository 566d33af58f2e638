#include "mecc/ctc.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace mecc {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace

std::size_t ctc_min_frames(std::span<const TokenId> labels) {
  std::size_t n = labels.size();
  for (std::size_t i = 1; i < labels.size(); ++i) {
    if (labels[i] == labels[i - 1]) ++n;
  }
  return n;
}

CtcLoss ctc_loss(const Var& log_probs, std::span<const TokenId> labels) {
  if (log_probs.value().rank() != 2) {
    throw std::invalid_argument("ctc_loss: log_probs must be [T, V], got " +
                                shape_str(log_probs.shape()));
  }
  const std::size_t steps = log_probs.dim(0), vocab = log_probs.dim(1);
  for (auto l : labels) {
    if (l == kBlank) throw std::invalid_argument("ctc_loss: labels must not contain the blank");
    if (l < 0 || static_cast<std::size_t>(l) >= vocab) {
      throw std::invalid_argument("ctc_loss: label " + std::to_string(l) +
                                  " outside vocabulary of size " + std::to_string(vocab));
    }
  }
  const DType dtype = log_probs.dtype();
  if (steps < ctc_min_frames(labels)) {
    return {Var::constant(Tensor::scalar(std::numeric_limits<double>::infinity(), dtype)), false};
  }
  if (steps == 0) {
    // only the empty label reaches here; its single (empty) path has P = 1
    return {Var::constant(Tensor::scalar(0.0, dtype)), true};
  }

  // blank-interleaved label sequence: _ l1 _ l2 _ ... lL _
  const std::size_t states = 2 * labels.size() + 1;
  std::vector<TokenId> ext(states, kBlank);
  for (std::size_t i = 0; i < labels.size(); ++i) ext[2 * i + 1] = labels[i];
  auto skip_allowed = [&](std::size_t s) {  // transition s-2 -> s
    return s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2];
  };

  const Tensor& lp = log_probs.value();
  auto y = [&](std::size_t t, std::size_t s) { return lp.at(t * vocab + static_cast<std::size_t>(ext[s])); };

  std::vector<double> alpha(steps * states, kNegInf), beta(steps * states, kNegInf);
  alpha[0] = y(0, 0);
  if (states > 1) alpha[1] = y(0, 1);
  for (std::size_t t = 1; t < steps; ++t) {
    for (std::size_t s = 0; s < states; ++s) {
      double acc = alpha[(t - 1) * states + s];
      if (s >= 1) acc = log_add(acc, alpha[(t - 1) * states + s - 1]);
      if (skip_allowed(s)) acc = log_add(acc, alpha[(t - 1) * states + s - 2]);
      alpha[t * states + s] = acc == kNegInf ? kNegInf : acc + y(t, s);
    }
  }
  const std::size_t last = (steps - 1) * states;
  double log_p = alpha[last + states - 1];
  if (states > 1) log_p = log_add(log_p, alpha[last + states - 2]);

  // beta excludes the emission at its own frame
  beta[last + states - 1] = 0.0;
  if (states > 1) beta[last + states - 2] = 0.0;
  for (std::size_t t = steps - 1; t-- > 0;) {
    for (std::size_t s = 0; s < states; ++s) {
      double acc = beta[(t + 1) * states + s] + y(t + 1, s);
      if (s + 1 < states) acc = log_add(acc, beta[(t + 1) * states + s + 1] + y(t + 1, s + 1));
      if (s + 2 < states && skip_allowed(s + 2)) {
        acc = log_add(acc, beta[(t + 1) * states + s + 2] + y(t + 1, s + 2));
      }
      beta[t * states + s] = acc;
    }
  }

  auto grad = std::make_shared<Tensor>(lp.shape(), dtype);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t s = 0; s < states; ++s) {
      const double a = alpha[t * states + s];
      const double b = beta[t * states + s];
      if (a == kNegInf || b == kNegInf) continue;
      const std::size_t k = t * vocab + static_cast<std::size_t>(ext[s]);
      grad->set(k, grad->at(k) - std::exp(a + b - log_p));
    }
  }
  Var loss = make_result(Tensor::scalar(-log_p, dtype), "ctc_loss", {log_probs},
                         [grad](Node& self) {
    Tensor g = *grad;
    const double upstream = self.grad.item();
    if (upstream != 1.0) {
      for (std::size_t i = 0; i < g.numel(); ++i) g.set(i, g.at(i) * upstream);
    }
    self.inputs[0]->accumulate_grad(g);
  });
  return {loss, true};
}

Tokens greedy_frame_labels(const Tensor& log_probs) {
  if (log_probs.rank() != 2) {
    throw std::invalid_argument("greedy_frame_labels: expected [T, V], got " +
                                shape_str(log_probs.shape()));
  }
  const std::size_t steps = log_probs.dim(0), vocab = log_probs.dim(1);
  Tokens out(steps, kBlank);
  dispatch(log_probs.dtype(), [&]<class T>() {
    auto d = log_probs.data<T>();
    for (std::size_t t = 0; t < steps; ++t) {
      std::size_t best = 0;
      for (std::size_t v = 1; v < vocab; ++v) {
        if (d[t * vocab + v] > d[t * vocab + best]) best = v;
      }
      out[t] = static_cast<TokenId>(best);
    }
  });
  return out;
}

ReducedAlignment ctc_reduce(std::span<const TokenId> frame_labels) {
  ReducedAlignment out;
  for (std::size_t t = 0; t < frame_labels.size(); ++t) {
    const TokenId label = frame_labels[t];
    if (label == kBlank) continue;
    const bool continues_run = t > 0 && frame_labels[t - 1] == label;
    if (continues_run) {
      out.frames.back() = t;
    } else {
      out.tokens.push_back(label);
      out.frames.push_back(t);
    }
  }
  return out;
}

}  // namespace mecc
