#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace mecc {

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

std::string_view dtype_name(DType dtype);

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array of float or double values. A rank-0 tensor holds a
// single scalar. Values are owned; copies are deep.
class Tensor {
 public:
  Tensor() : Tensor(Shape{0}, DType::kF32) {}
  Tensor(Shape shape, DType dtype);

  static Tensor zeros(Shape shape, DType dtype) { return Tensor(std::move(shape), dtype); }
  static Tensor full(Shape shape, double value, DType dtype);
  static Tensor scalar(double value, DType dtype);
  static Tensor from(Shape shape, std::span<const double> values, DType dtype);
  static Tensor from(Shape shape, std::initializer_list<double> values, DType dtype) {
    return from(std::move(shape), std::span<const double>(values.begin(), values.size()), dtype);
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  DType dtype() const { return dtype_; }

  template <class T>
  std::span<T> data() {
    check_type<T>();
    auto& v = std::get<std::vector<T>>(data_);
    return {v.data(), v.size()};
  }
  template <class T>
  std::span<const T> data() const {
    check_type<T>();
    const auto& v = std::get<std::vector<T>>(data_);
    return {v.data(), v.size()};
  }

  // Element access through double; convenient in tests and tooling, not in
  // inner loops.
  double at(std::size_t flat) const;
  void set(std::size_t flat, double value);
  double at(std::size_t row, std::size_t col) const;
  double item() const;
  std::vector<double> to_vector() const;

  Tensor to(DType dtype) const;
  Tensor reshaped(Shape shape) const;

  // Raw little-endian byte view of the values (this library only targets
  // little-endian hosts).
  std::span<const std::byte> bytes() const;

  bool bitwise_equal(const Tensor& other) const;
  bool all_finite() const;

 private:
  template <class T>
  void check_type() const {
    constexpr DType want = std::is_same_v<T, double> || std::is_same_v<T, const double>
                               ? DType::kF64
                               : DType::kF32;
    if (want != dtype_) {
      throw std::logic_error("tensor dtype mismatch: holds " + std::string(dtype_name(dtype_)));
    }
  }

  Shape shape_;
  DType dtype_;
  std::variant<std::vector<float>, std::vector<double>> data_;
};

// Calls f.template operator()<T>() with T = float or double per dtype.
template <class F>
decltype(auto) dispatch(DType dtype, F&& f) {
  if (dtype == DType::kF64) return f.template operator()<double>();
  return f.template operator()<float>();
}

}  // namespace mecc
