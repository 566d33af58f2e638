#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "mecc/kernels.hpp"

using namespace mecc;

namespace {

class IsaGuard {
 public:
  IsaGuard() : saved_(kernels::active_isa()) {}
  ~IsaGuard() { kernels::set_isa(saved_); }

 private:
  kernels::Isa saved_;
};

template <class T>
std::vector<T> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-2.0, 2.0);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(d(rng));
  return v;
}

template <class T>
void expect_close(const std::vector<T>& a, const std::vector<T>& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(static_cast<double>(a[i]), static_cast<double>(b[i]),
                tol * (1.0 + std::abs(static_cast<double>(a[i]))))
        << "index " << i;
  }
}

template <class T>
void check_equivalence(double tol) {
  if (!kernels::isa_supported(kernels::Isa::kAvx2)) GTEST_SKIP() << "no AVX2 on this CPU";
  IsaGuard guard;
  std::mt19937_64 rng(7);
  // sizes straddle the vector widths and unroll factors
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 9u, 15u, 16u, 17u, 31u, 32u, 33u, 100u, 257u}) {
    auto x = random_vec<T>(n, rng);
    auto y = random_vec<T>(n, rng);
    const T a = static_cast<T>(0.37);

    std::vector<std::vector<T>> outs[2];
    T dots[2], sums[2];
    for (int pass = 0; pass < 2; ++pass) {
      kernels::set_isa(pass == 0 ? kernels::Isa::kScalar : kernels::Isa::kAvx2);
      dots[pass] = kernels::dot<T>(x.data(), y.data(), n);
      sums[pass] = kernels::sum<T>(x.data(), n);
      std::vector<T> axpy = y, add(n), mul(n), scl(n);
      kernels::axpy<T>(a, x.data(), axpy.data(), n);
      kernels::add<T>(x.data(), y.data(), add.data(), n);
      kernels::mul<T>(x.data(), y.data(), mul.data(), n);
      kernels::scale<T>(a, x.data(), scl.data(), n);
      outs[pass] = {axpy, add, mul, scl};
    }
    const double scale = 1.0 + static_cast<double>(n);
    EXPECT_NEAR(static_cast<double>(dots[0]), static_cast<double>(dots[1]), tol * scale) << n;
    EXPECT_NEAR(static_cast<double>(sums[0]), static_cast<double>(sums[1]), tol * scale) << n;
    for (std::size_t k = 0; k < outs[0].size(); ++k) expect_close(outs[0][k], outs[1][k], tol);
  }
}

template <class T>
void check_gemm(double tol) {
  std::mt19937_64 rng(11);
  const std::size_t m = 5, k = 13, n = 9;
  auto a = random_vec<T>(m * k, rng);
  auto b = random_vec<T>(k * n, rng);
  std::vector<T> c(m * n);
  kernels::gemm_nn<T>(a.data(), b.data(), c.data(), m, k, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double ref = 0;
      for (std::size_t p = 0; p < k; ++p) ref += double(a[i * k + p]) * double(b[p * n + j]);
      EXPECT_NEAR(double(c[i * n + j]), ref, tol);
    }
  }
  // A^T-style accumulation routines against the same naive product
  std::vector<T> g = random_vec<T>(m * n, rng);
  std::vector<T> ga(m * k, T(0)), gb(k * n, T(0));
  kernels::gemm_nt_acc<T>(g.data(), b.data(), ga.data(), m, n, k);
  kernels::gemm_tn_acc<T>(a.data(), g.data(), gb.data(), m, k, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      double ref = 0;
      for (std::size_t j = 0; j < n; ++j) ref += double(g[i * n + j]) * double(b[p * n + j]);
      EXPECT_NEAR(double(ga[i * k + p]), ref, tol);
    }
  }
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t j = 0; j < n; ++j) {
      double ref = 0;
      for (std::size_t i = 0; i < m; ++i) ref += double(a[i * k + p]) * double(g[i * n + j]);
      EXPECT_NEAR(double(gb[p * n + j]), ref, tol);
    }
  }
}

}  // namespace

TEST(Kernels, ScalarAndAvx2AgreeF32) { check_equivalence<float>(1e-5); }
TEST(Kernels, ScalarAndAvx2AgreeF64) { check_equivalence<double>(1e-13); }

TEST(Kernels, GemmMatchesNaiveOnEveryIsa) {
  IsaGuard guard;
  for (auto isa : {kernels::Isa::kScalar, kernels::Isa::kAvx2}) {
    if (!kernels::isa_supported(isa)) continue;
    kernels::set_isa(isa);
    SCOPED_TRACE(std::string(kernels::isa_name(isa)));
    check_gemm<float>(1e-4);
    check_gemm<double>(1e-12);
  }
}

TEST(Kernels, ScalarIsAlwaysAvailable) {
  EXPECT_TRUE(kernels::isa_supported(kernels::Isa::kScalar));
  IsaGuard guard;
  EXPECT_NO_THROW(kernels::set_isa(kernels::Isa::kScalar));
  EXPECT_EQ(kernels::active_isa(), kernels::Isa::kScalar);
}

TEST(Kernels, RepeatedCallsAreBitwiseIdentical) {
  std::mt19937_64 rng(3);
  auto x = random_vec<float>(1000, rng);
  auto y = random_vec<float>(1000, rng);
  const float d1 = kernels::dot<float>(x.data(), y.data(), x.size());
  const float d2 = kernels::dot<float>(x.data(), y.data(), x.size());
  EXPECT_EQ(d1, d2);
}
