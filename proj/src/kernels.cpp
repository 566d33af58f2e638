#include "mecc/kernels.hpp"

#include <atomic>
#include <stdexcept>
#include <string>

namespace mecc::kernels {
namespace {

Isa detect_isa() {
#if defined(MECC_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
    return Isa::kAvx2;
  }
#endif
  return Isa::kScalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect_isa()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  if (isa == Isa::kScalar) return true;
  return detect_isa() == Isa::kAvx2;
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("kernel ISA not supported on this CPU: " +
                                std::string(isa_name(isa)));
  }
  current().store(isa, std::memory_order_relaxed);
}

const KernelTable<float>& table_f32() {
#ifdef MECC_HAVE_AVX2
  if (active_isa() == Isa::kAvx2) return detail::avx2_f32();
#endif
  return detail::scalar_f32();
}

const KernelTable<double>& table_f64() {
#ifdef MECC_HAVE_AVX2
  if (active_isa() == Isa::kAvx2) return detail::avx2_f64();
#endif
  return detail::scalar_f64();
}

// The matrix routines are written in terms of dot/axpy so that the ISA choice
// reaches them through the table.

template <class T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  const auto& kt = table<T>();
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      kt.axpy(arow[p], b + p * n, crow, n);
    }
  }
}

template <class T>
void gemm_nt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  const auto& kt = table<T>();
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * n;
    T* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      crow[p] += kt.dot(arow, b + p * n, n);
    }
  }
}

template <class T>
void gemm_tn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  const auto& kt = table<T>();
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      kt.axpy(arow[p], brow, c + p * n, n);
    }
  }
}

template void gemm_nn<float>(const float*, const float*, float*, std::size_t, std::size_t, std::size_t);
template void gemm_nn<double>(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
template void gemm_nt_acc<float>(const float*, const float*, float*, std::size_t, std::size_t, std::size_t);
template void gemm_nt_acc<double>(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
template void gemm_tn_acc<float>(const float*, const float*, float*, std::size_t, std::size_t, std::size_t);
template void gemm_tn_acc<double>(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);

}  // namespace mecc::kernels
