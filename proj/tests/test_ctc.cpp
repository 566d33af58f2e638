#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "mecc/ctc.hpp"
#include "mecc/grad_check.hpp"
#include "mecc/ops.hpp"

using namespace mecc;

namespace {

Tensor random_log_probs(std::size_t T, std::size_t V, std::mt19937_64& rng, double spread = 2.0) {
  Tensor logits({T, V}, DType::kF64);
  std::normal_distribution<double> d(0.0, spread);
  for (std::size_t i = 0; i < logits.numel(); ++i) logits.set(i, d(rng));
  return ops::log_softmax(Var::constant(logits)).value();
}

// Standard collapse used by the oracle: merge repeats, then drop blanks.
Tokens collapse(const Tokens& path) {
  Tokens out;
  TokenId prev = -1;
  for (TokenId t : path) {
    if (t != prev && t != kBlank) out.push_back(t);
    prev = t;
  }
  return out;
}

// -log of the summed probability of every frame sequence that collapses to
// `labels`, by enumerating all V^T paths.
double brute_force_ctc(const Tensor& log_probs, const Tokens& labels) {
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
  return -std::log(p);
}

Tokens expand(const ReducedAlignment& r, std::size_t T) {
  Tokens out(T, kBlank);
  for (std::size_t i = 0; i < r.size(); ++i) out[r.frames[i]] = r.tokens[i];
  return out;
}

}  // namespace

TEST(CtcLoss, UniformTwoFrameExample) {
  Tensor lp = Tensor::full({2, 2}, std::log(0.5), DType::kF64);
  Tokens a{1};
  auto r = ctc_loss(Var::constant(lp), a);
  EXPECT_TRUE(r.admissible);
  EXPECT_NEAR(r.loss.value().item(), -std::log(0.75), 1e-15);
  EXPECT_NEAR(r.loss.value().item(), 0.2877, 1e-4);
}

TEST(CtcLoss, RepeatWithoutRoomIsInadmissible) {
  Tensor lp = Tensor::full({2, 2}, std::log(0.5), DType::kF64);
  Tokens aa{1, 1};
  EXPECT_EQ(ctc_min_frames(aa), 3u);
  Var x = Var::leaf(lp);
  Tape tape;
  CtcLoss r;
  {
    TapeScope scope(tape);
    r = ctc_loss(x, aa);
  }
  EXPECT_FALSE(r.admissible);
  EXPECT_TRUE(std::isinf(r.loss.value().item()));
  EXPECT_GT(r.loss.value().item(), 0.0);
  EXPECT_FALSE(r.loss.requires_grad());
}

TEST(CtcLoss, SingleDominantPath) {
  // frames strongly prefer (blank, a, b); every other path is ~e^-40 smaller
  const double hi = 0.0, lo = -40.0;
  Tensor lp = Tensor::from({3, 3}, {hi, lo, lo, lo, hi, lo, lo, lo, hi}, DType::kF64);
  Tokens ab{1, 2};
  EXPECT_NEAR(ctc_loss(Var::constant(lp), ab).loss.value().item(), brute_force_ctc(lp, ab), 1e-12);
  EXPECT_NEAR(ctc_loss(Var::constant(lp), ab).loss.value().item(), -(hi + hi + hi), 1e-12);
}

TEST(CtcLoss, MatchesBruteForceOracle) {
  std::mt19937_64 rng(100);
  int cases = 0;
  for (std::size_t T = 1; T <= 6; ++T) {
    for (std::size_t V = 2; V <= 3; ++V) {
      for (int rep = 0; rep < 20; ++rep) {
        Tensor lp = random_log_probs(T, V, rng);
        std::uniform_int_distribution<std::size_t> lend(0, 3);
        std::uniform_int_distribution<TokenId> tokd(1, static_cast<TokenId>(V - 1));
        Tokens labels(lend(rng));
        for (auto& t : labels) t = tokd(rng);
        auto r = ctc_loss(Var::constant(lp), labels);
        if (ctc_min_frames(labels) > T) {
          EXPECT_FALSE(r.admissible);
          EXPECT_TRUE(std::isinf(r.loss.value().item()));
        } else {
          ASSERT_TRUE(r.admissible);
          EXPECT_NEAR(r.loss.value().item(), brute_force_ctc(lp, labels), 1e-6)
              << "T=" << T << " V=" << V << " L=" << labels.size();
        }
        ++cases;
      }
    }
  }
  EXPECT_GE(cases, 200);
}

TEST(CtcLoss, EmptyInputs) {
  Tokens none;
  Tensor empty({0, 3}, DType::kF64);
  EXPECT_EQ(ctc_loss(Var::constant(empty), none).loss.value().item(), 0.0);
  Tokens one{1};
  EXPECT_FALSE(ctc_loss(Var::constant(empty), one).admissible);
  // empty labels: only the all-blank path
  Tensor lp = Tensor::full({3, 2}, std::log(0.5), DType::kF64);
  EXPECT_NEAR(ctc_loss(Var::constant(lp), none).loss.value().item(), 3 * std::log(2.0), 1e-14);
}

TEST(CtcLoss, BadLabelsThrow) {
  Tensor lp = Tensor::full({3, 3}, std::log(1.0 / 3), DType::kF64);
  Tokens has_blank{1, 0};
  Tokens too_big{3};
  EXPECT_THROW(ctc_loss(Var::constant(lp), has_blank), std::invalid_argument);
  EXPECT_THROW(ctc_loss(Var::constant(lp), too_big), std::invalid_argument);
}

TEST(CtcLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(101);
  for (int rep = 0; rep < 5; ++rep) {
    // differentiate through log_softmax so the input is unconstrained
    Tensor logits({5, 4}, DType::kF64);
    std::normal_distribution<double> d(0.0, 1.0);
    for (std::size_t i = 0; i < logits.numel(); ++i) logits.set(i, d(rng));
    Var x = Var::leaf(logits);
    Tokens labels{1, 3, 3};
    auto report = grad_check([&] { return ctc_loss(ops::log_softmax(x), labels).loss; }, {{"x", x}});
    EXPECT_TRUE(report.passed) << report.summary();

    // and directly with respect to the log-prob inputs
    Var lp = Var::leaf(random_log_probs(5, 4, rng));
    auto direct = grad_check([&] { return ctc_loss(lp, labels).loss; }, {{"lp", lp}});
    EXPECT_TRUE(direct.passed) << direct.summary();
  }
}

TEST(CtcLoss, Float32CloseToFloat64) {
  std::mt19937_64 rng(102);
  Tensor lp = random_log_probs(12, 5, rng);
  Tokens labels{2, 4, 4, 1};
  double l64 = ctc_loss(Var::constant(lp), labels).loss.value().item();
  double l32 = ctc_loss(Var::constant(lp.to(DType::kF32)), labels).loss.value().item();
  EXPECT_NEAR(l64, l32, 1e-4);
}

TEST(GreedyLabels, Examples) {
  Tensor lp = Tensor::from({3, 2}, {0.0, -1.0, -2.0, 0.0, -3.0, -0.5}, DType::kF64);
  EXPECT_EQ(greedy_frame_labels(lp), (Tokens{0, 1, 1}));
  Tensor tie = Tensor::from({1, 3}, {-2.0, -0.5, -0.5}, DType::kF64);
  EXPECT_EQ(greedy_frame_labels(tie), (Tokens{1}));
  EXPECT_TRUE(greedy_frame_labels(Tensor({0, 4}, DType::kF64)).empty());
}

TEST(CtcReduce, Examples) {
  const TokenId a = 1, b = 2;
  Tokens f1{kBlank, a, a, kBlank, b};
  auto r1 = ctc_reduce(f1);
  EXPECT_EQ(r1.tokens, (Tokens{a, b}));
  EXPECT_EQ(r1.frames, (std::vector<std::size_t>{2, 4}));
  Tokens f2{a, kBlank, a};
  auto r2 = ctc_reduce(f2);
  EXPECT_EQ(r2.tokens, (Tokens{a, a}));
  EXPECT_EQ(r2.frames, (std::vector<std::size_t>{0, 2}));
  Tokens f3{kBlank, kBlank, kBlank};
  EXPECT_TRUE(ctc_reduce(f3).empty());
  Tokens f4{a, b, b, a};
  auto r4 = ctc_reduce(f4);
  EXPECT_EQ(r4.tokens, (Tokens{a, b, a}));
  EXPECT_EQ(r4.frames, (std::vector<std::size_t>{0, 2, 3}));
}

TEST(CtcReduce, ExhaustiveShortSequences) {
  // every sequence of length <= 6 over {blank, 1, 2}
  for (std::size_t T = 0; T <= 6; ++T) {
    std::size_t total = 1;
    for (std::size_t t = 0; t < T; ++t) total *= 3;
    for (std::size_t code = 0; code < total; ++code) {
      Tokens seq(T);
      std::size_t c = code;
      for (auto& s : seq) {
        s = static_cast<TokenId>(c % 3);
        c /= 3;
      }
      auto r = ctc_reduce(seq);
      EXPECT_EQ(r.tokens, collapse(seq));
      ASSERT_EQ(r.tokens.size(), r.frames.size());
      for (std::size_t i = 0; i < r.size(); ++i) {
        EXPECT_NE(r.tokens[i], kBlank);
        EXPECT_EQ(seq[r.frames[i]], r.tokens[i]);
        if (r.frames[i] + 1 < T) EXPECT_NE(seq[r.frames[i] + 1], r.tokens[i]);
        if (i > 0) EXPECT_LT(r.frames[i - 1], r.frames[i]);
      }
      EXPECT_EQ(ctc_reduce(expand(r, T)), r);
    }
  }
}

TEST(CtcReduce, RandomSequenceProperties) {
  std::mt19937_64 rng(103);
  std::uniform_int_distribution<std::size_t> lend(0, 60);
  for (int rep = 0; rep < 10000; ++rep) {
    std::size_t T = lend(rng);
    std::uniform_int_distribution<TokenId> tokd(0, 6);
    Tokens seq(T);
    for (auto& s : seq) s = tokd(rng);
    auto r = ctc_reduce(seq);
    ASSERT_EQ(r.tokens.size(), r.frames.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
      ASSERT_NE(r.tokens[i], kBlank);
      ASSERT_LT(r.frames[i], T);
      if (i > 0) ASSERT_LT(r.frames[i - 1], r.frames[i]);
    }
    ASSERT_EQ(r.tokens, collapse(seq));
    ASSERT_EQ(ctc_reduce(expand(r, T)), r);
  }
}
