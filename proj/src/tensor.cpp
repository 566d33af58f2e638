#include "mecc/tensor.hpp"

#include <cmath>
#include <cstring>

namespace mecc {

std::string_view dtype_name(DType dtype) {
  return dtype == DType::kF64 ? "float64" : "float32";
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, DType dtype) : shape_(std::move(shape)), dtype_(dtype) {
  const std::size_t n = shape_numel(shape_);
  if (dtype_ == DType::kF64) {
    data_ = std::vector<double>(n, 0.0);
  } else {
    data_ = std::vector<float>(n, 0.0f);
  }
}

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  Tensor t(std::move(shape), dtype);
  dispatch(dtype, [&]<class T>() {
    for (auto& x : t.data<T>()) x = static_cast<T>(value);
  });
  return t;
}

Tensor Tensor::scalar(double value, DType dtype) { return full(Shape{}, value, dtype); }

Tensor Tensor::from(Shape shape, std::span<const double> values, DType dtype) {
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument("Tensor::from: shape " + shape_str(shape) + " needs " +
                                std::to_string(shape_numel(shape)) + " values, got " +
                                std::to_string(values.size()));
  }
  Tensor t(std::move(shape), dtype);
  dispatch(dtype, [&]<class T>() {
    auto d = t.data<T>();
    for (std::size_t i = 0; i < values.size(); ++i) d[i] = static_cast<T>(values[i]);
  });
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw std::out_of_range("axis " + std::to_string(axis) + " out of range for shape " +
                            shape_str(shape_));
  }
  return shape_[axis];
}

std::size_t Tensor::numel() const {
  return std::visit([](const auto& v) { return v.size(); }, data_);
}

double Tensor::at(std::size_t flat) const {
  return std::visit([&](const auto& v) { return static_cast<double>(v.at(flat)); }, data_);
}

void Tensor::set(std::size_t flat, double value) {
  std::visit([&](auto& v) { v.at(flat) = static_cast<typename std::decay_t<decltype(v)>::value_type>(value); },
             data_);
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw std::logic_error("2-D access on tensor of shape " + shape_str(shape_));
  return at(row * shape_[1] + col);
}

double Tensor::item() const {
  if (numel() != 1) throw std::logic_error("item() on tensor of shape " + shape_str(shape_));
  return at(0);
}

std::vector<double> Tensor::to_vector() const {
  return std::visit([](const auto& v) { return std::vector<double>(v.begin(), v.end()); }, data_);
}

Tensor Tensor::to(DType dtype) const {
  if (dtype == dtype_) return *this;
  Tensor out(shape_, dtype);
  dispatch(dtype, [&]<class T>() {
    auto dst = out.data<T>();
    std::visit(
        [&](const auto& src) {
          for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(src[i]);
        },
        data_);
  });
  return out;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(shape_) + " as " +
                                shape_str(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

std::span<const std::byte> Tensor::bytes() const {
  return std::visit(
      [](const auto& v) {
        return std::span<const std::byte>(reinterpret_cast<const std::byte*>(v.data()),
                                          v.size() * sizeof(v[0]));
      },
      data_);
}

bool Tensor::bitwise_equal(const Tensor& other) const {
  if (dtype_ != other.dtype_ || shape_ != other.shape_) return false;
  auto a = bytes();
  auto b = other.bytes();
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size()) == 0);
}

bool Tensor::all_finite() const {
  return std::visit(
      [](const auto& v) {
        for (auto x : v) {
          if (!std::isfinite(x)) return false;
        }
        return true;
      },
      data_);
}

}  // namespace mecc
