#pragma once
// Inner-loop arithmetic kernels.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The variant is chosen once at startup from CPUID and can
// be overridden with set_isa() (tests use this to compare both paths).
// Results of the two paths agree to rounding, not bitwise; within one process
// and one selected ISA every kernel is deterministic.

#include <cstddef>
#include <string_view>

namespace mecc::kernels {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);
bool isa_supported(Isa isa);
Isa active_isa();
// Throws std::invalid_argument when the ISA is not available on this CPU.
void set_isa(Isa isa);

template <class T>
struct KernelTable {
  // sum_i x[i] * y[i]
  T (*dot)(const T* x, const T* y, std::size_t n);
  // y[i] += a * x[i]
  void (*axpy)(T a, const T* x, T* y, std::size_t n);
  // out[i] = x[i] + y[i]
  void (*add)(const T* x, const T* y, T* out, std::size_t n);
  // out[i] = x[i] * y[i]
  void (*mul)(const T* x, const T* y, T* out, std::size_t n);
  // out[i] = a * x[i]
  void (*scale)(T a, const T* x, T* out, std::size_t n);
  // sum_i x[i]
  T (*sum)(const T* x, std::size_t n);
};

const KernelTable<float>& table_f32();
const KernelTable<double>& table_f64();

template <class T>
const KernelTable<T>& table();
template <>
inline const KernelTable<float>& table<float>() { return table_f32(); }
template <>
inline const KernelTable<double>& table<double>() { return table_f64(); }

template <class T>
T dot(const T* x, const T* y, std::size_t n) { return table<T>().dot(x, y, n); }
template <class T>
void axpy(T a, const T* x, T* y, std::size_t n) { table<T>().axpy(a, x, y, n); }
template <class T>
void add(const T* x, const T* y, T* out, std::size_t n) { table<T>().add(x, y, out, n); }
template <class T>
void mul(const T* x, const T* y, T* out, std::size_t n) { table<T>().mul(x, y, out, n); }
template <class T>
void scale(T a, const T* x, T* out, std::size_t n) { table<T>().scale(a, x, out, n); }
template <class T>
T sum(const T* x, std::size_t n) { return table<T>().sum(x, n); }

// C[m,n] = A[m,k] * B[k,n], row-major, C overwritten.
template <class T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);
// C[m,k] += A[m,n] * B[k,n]^T
template <class T>
void gemm_nt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k);
// C[k,n] += A[m,k]^T * B[m,n]
template <class T>
void gemm_tn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);

namespace detail {
const KernelTable<float>& scalar_f32();
const KernelTable<double>& scalar_f64();
#ifdef MECC_HAVE_AVX2
const KernelTable<float>& avx2_f32();
const KernelTable<double>& avx2_f64();
#endif
}  // namespace detail

}  // namespace mecc::kernels
