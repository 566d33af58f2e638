#include "mecc/kernels.hpp"

namespace mecc::kernels::detail {
namespace {

template <class T>
T dot_ref(const T* x, const T* y, std::size_t n) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <class T>
void axpy_ref(T a, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <class T>
void add_ref(const T* x, const T* y, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

template <class T>
void mul_ref(const T* x, const T* y, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

template <class T>
void scale_ref(T a, const T* x, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i];
}

template <class T>
T sum_ref(const T* x, std::size_t n) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

}  // namespace

const KernelTable<float>& scalar_f32() {
  static const KernelTable<float> t{dot_ref<float>,  axpy_ref<float>,  add_ref<float>,
                                    mul_ref<float>,  scale_ref<float>, sum_ref<float>};
  return t;
}

const KernelTable<double>& scalar_f64() {
  static const KernelTable<double> t{dot_ref<double>, axpy_ref<double>,  add_ref<double>,
                                     mul_ref<double>, scale_ref<double>, sum_ref<double>};
  return t;
}

}  // namespace mecc::kernels::detail
