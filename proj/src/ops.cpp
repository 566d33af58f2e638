#include "mecc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mecc/kernels.hpp"

namespace mecc::ops {
namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) +
                              " and " + shape_str(b));
}

void require_rank(const char* op, const Var& x, std::size_t rank) {
  if (x.value().rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) +
                                " input, got shape " + shape_str(x.shape()));
  }
}

void require_same_dtype(const char* op, const Var& a, const Var& b) {
  if (a.dtype() != b.dtype()) {
    throw std::invalid_argument(std::string(op) + ": dtype mismatch " +
                                std::string(dtype_name(a.dtype())) + " vs " +
                                std::string(dtype_name(b.dtype())));
  }
}

std::size_t last_dim(const Tensor& t) { return t.rank() == 0 ? 1 : t.shape().back(); }

// ---------------------------------------------------------------------------
// Broadcasting support

struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a;  // per out axis; 0 where stretched
  std::vector<std::size_t> stride_b;
  bool same = false;
  bool b_is_suffix = false;  // b's shape equals a trailing slice of a == out
};

std::vector<std::size_t> row_major_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

Broadcast broadcast(const char* op, const Shape& a, const Shape& b) {
  Broadcast bc;
  bc.same = a == b;
  const std::size_t r = std::max(a.size(), b.size());
  bc.out.assign(r, 1);
  Shape pa(r, 1), pb(r, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<std::ptrdiff_t>(r - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<std::ptrdiff_t>(r - b.size()));
  for (std::size_t i = 0; i < r; ++i) {
    if (pa[i] == pb[i] || pb[i] == 1) {
      bc.out[i] = pa[i];
    } else if (pa[i] == 1) {
      bc.out[i] = pb[i];
    } else {
      shape_error(op, a, b);
    }
  }
  auto sa = row_major_strides(pa);
  auto sb = row_major_strides(pb);
  bc.stride_a.resize(r);
  bc.stride_b.resize(r);
  for (std::size_t i = 0; i < r; ++i) {
    bc.stride_a[i] = pa[i] == 1 && bc.out[i] != 1 ? 0 : sa[i];
    bc.stride_b[i] = pb[i] == 1 && bc.out[i] != 1 ? 0 : sb[i];
  }
  if (bc.out == a && b.size() <= a.size() &&
      std::equal(b.begin(), b.end(), a.end() - static_cast<std::ptrdiff_t>(b.size()))) {
    bc.b_is_suffix = true;
  }
  return bc;
}

// Visits every output element with its flat offsets into a and b.
template <class F>
void for_each_broadcast(const Broadcast& bc, F&& f) {
  const std::size_t r = bc.out.size();
  const std::size_t n = shape_numel(bc.out);
  if (n == 0) return;
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t k = 0; k < n; ++k) {
    f(k, ia, ib);
    for (std::size_t ax = r; ax-- > 0;) {
      if (++idx[ax] < bc.out[ax]) {
        ia += bc.stride_a[ax];
        ib += bc.stride_b[ax];
        break;
      }
      ia -= bc.stride_a[ax] * (bc.out[ax] - 1);
      ib -= bc.stride_b[ax] * (bc.out[ax] - 1);
      idx[ax] = 0;
    }
  }
}

enum class BinOp { kAdd, kSub, kMul, kDiv };

template <class T>
T apply(BinOp op, T a, T b) {
  switch (op) {
    case BinOp::kAdd:
      return a + b;
    case BinOp::kSub:
      return a - b;
    case BinOp::kMul:
      return a * b;
    case BinOp::kDiv:
      return a / b;
  }
  return T(0);
}

const char* binop_name(BinOp op) {
  switch (op) {
    case BinOp::kAdd:
      return "add";
    case BinOp::kSub:
      return "sub";
    case BinOp::kMul:
      return "mul";
    case BinOp::kDiv:
      return "div";
  }
  return "?";
}

Var binary(BinOp op, const Var& a, const Var& b) {
  const char* name = binop_name(op);
  require_same_dtype(name, a, b);
  Broadcast bc = broadcast(name, a.shape(), b.shape());
  Tensor out(bc.out, a.dtype());
  dispatch(a.dtype(), [&]<class T>() {
    auto pa = a.value().data<T>();
    auto pb = b.value().data<T>();
    auto po = out.data<T>();
    if (bc.same && op == BinOp::kAdd) {
      kernels::add<T>(pa.data(), pb.data(), po.data(), po.size());
    } else if (bc.same && op == BinOp::kMul) {
      kernels::mul<T>(pa.data(), pb.data(), po.data(), po.size());
    } else if (bc.same) {
      for (std::size_t i = 0; i < po.size(); ++i) po[i] = apply(op, pa[i], pb[i]);
    } else if (bc.b_is_suffix && op == BinOp::kAdd && !pb.empty()) {
      const std::size_t m = pb.size();
      for (std::size_t off = 0; off < po.size(); off += m) {
        kernels::add<T>(pa.data() + off, pb.data(), po.data() + off, m);
      }
    } else {
      for_each_broadcast(bc, [&](std::size_t k, std::size_t ia, std::size_t ib) {
        po[k] = apply(op, pa[ia], pb[ib]);
      });
    }
  });
  return make_result(std::move(out), name, {a, b}, [op, bc](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    dispatch(self.value.dtype(), [&]<class T>() {
      auto g = self.grad.data<T>();
      auto pa = na.value.data<T>();
      auto pb = nb.value.data<T>();
      if (na.requires_grad) {
        Tensor ga(na.value.shape(), na.value.dtype());
        auto d = ga.data<T>();
        if (bc.same && (op == BinOp::kAdd || op == BinOp::kSub)) {
          std::copy(g.begin(), g.end(), d.begin());
        } else if (bc.same && op == BinOp::kMul) {
          kernels::mul<T>(g.data(), pb.data(), d.data(), d.size());
        } else {
          for_each_broadcast(bc, [&](std::size_t k, std::size_t ia, std::size_t ib) {
            switch (op) {
              case BinOp::kAdd:
              case BinOp::kSub:
                d[ia] += g[k];
                break;
              case BinOp::kMul:
                d[ia] += g[k] * pb[ib];
                break;
              case BinOp::kDiv:
                d[ia] += g[k] / pb[ib];
                break;
            }
          });
        }
        na.accumulate_grad(ga);
      }
      if (nb.requires_grad) {
        Tensor gb(nb.value.shape(), nb.value.dtype());
        auto d = gb.data<T>();
        if (bc.same && op == BinOp::kAdd) {
          std::copy(g.begin(), g.end(), d.begin());
        } else if (bc.same && op == BinOp::kMul) {
          kernels::mul<T>(g.data(), pa.data(), d.data(), d.size());
        } else if (bc.b_is_suffix && op == BinOp::kAdd && !d.empty()) {
          const std::size_t m = d.size();
          for (std::size_t off = 0; off < g.size(); off += m) {
            kernels::add<T>(d.data(), g.data() + off, d.data(), m);
          }
        } else {
          for_each_broadcast(bc, [&](std::size_t k, std::size_t ia, std::size_t ib) {
            switch (op) {
              case BinOp::kAdd:
                d[ib] += g[k];
                break;
              case BinOp::kSub:
                d[ib] -= g[k];
                break;
              case BinOp::kMul:
                d[ib] += g[k] * pa[ia];
                break;
              case BinOp::kDiv:
                d[ib] -= g[k] * pa[ia] / (pb[ib] * pb[ib]);
                break;
            }
          });
        }
        nb.accumulate_grad(gb);
      }
    });
  });
}

// ---------------------------------------------------------------------------
// Unary elementwise

enum class UnOp { kExp, kLog, kTanh, kSigmoid, kRelu, kSilu };

const char* unop_name(UnOp op) {
  switch (op) {
    case UnOp::kExp:
      return "exp";
    case UnOp::kLog:
      return "log";
    case UnOp::kTanh:
      return "tanh";
    case UnOp::kSigmoid:
      return "sigmoid";
    case UnOp::kRelu:
      return "relu";
    case UnOp::kSilu:
      return "silu";
  }
  return "?";
}

template <class T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <class T>
T unary_fwd(UnOp op, T x) {
  switch (op) {
    case UnOp::kExp:
      return std::exp(x);
    case UnOp::kLog:
      return std::log(x);
    case UnOp::kTanh:
      return std::tanh(x);
    case UnOp::kSigmoid:
      return stable_sigmoid(x);
    case UnOp::kRelu:
      return x > T(0) ? x : T(0);
    case UnOp::kSilu:
      return x * stable_sigmoid(x);
  }
  return T(0);
}

// Derivative given input x and output y.
template <class T>
T unary_deriv(UnOp op, T x, T y) {
  switch (op) {
    case UnOp::kExp:
      return y;
    case UnOp::kLog:
      return T(1) / x;
    case UnOp::kTanh:
      return T(1) - y * y;
    case UnOp::kSigmoid:
      return y * (T(1) - y);
    case UnOp::kRelu:
      return x > T(0) ? T(1) : T(0);
    case UnOp::kSilu: {
      const T s = stable_sigmoid(x);
      return s * (T(1) + x * (T(1) - s));
    }
  }
  return T(0);
}

Var unary(UnOp op, const Var& x) {
  Tensor out(x.shape(), x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    auto px = x.value().data<T>();
    auto po = out.data<T>();
    for (std::size_t i = 0; i < po.size(); ++i) po[i] = unary_fwd(op, px[i]);
  });
  return make_result(std::move(out), unop_name(op), {x}, [op](Node& self) {
    Node& nx = *self.inputs[0];
    dispatch(self.value.dtype(), [&]<class T>() {
      Tensor gx(nx.value.shape(), nx.value.dtype());
      auto d = gx.data<T>();
      auto g = self.grad.data<T>();
      auto px = nx.value.data<T>();
      auto py = self.value.data<T>();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] * unary_deriv(op, px[i], py[i]);
      nx.accumulate_grad(gx);
    });
  });
}

}  // namespace

// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  require_same_dtype("matmul", a, b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) shape_error("matmul", a.shape(), b.shape());
  Tensor out(Shape{m, n}, a.dtype());
  dispatch(a.dtype(), [&]<class T>() {
    kernels::gemm_nn<T>(a.value().data<T>().data(), b.value().data<T>().data(),
                        out.data<T>().data(), m, k, n);
  });
  return make_result(std::move(out), "matmul", {a, b}, [m, k, n](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    dispatch(self.value.dtype(), [&]<class T>() {
      const T* g = self.grad.data<T>().data();
      if (na.requires_grad) {
        Tensor ga(Shape{m, k}, self.value.dtype());
        kernels::gemm_nt_acc<T>(g, nb.value.data<T>().data(), ga.data<T>().data(), m, n, k);
        na.accumulate_grad(ga);
      }
      if (nb.requires_grad) {
        Tensor gb(Shape{k, n}, self.value.dtype());
        kernels::gemm_tn_acc<T>(na.value.data<T>().data(), g, gb.data<T>().data(), m, k, n);
        nb.accumulate_grad(gb);
      }
    });
  });
}

Var add(const Var& a, const Var& b) { return binary(BinOp::kAdd, a, b); }
Var sub(const Var& a, const Var& b) { return binary(BinOp::kSub, a, b); }
Var mul(const Var& a, const Var& b) { return binary(BinOp::kMul, a, b); }
Var div(const Var& a, const Var& b) { return binary(BinOp::kDiv, a, b); }

Var scale(const Var& x, double s) {
  Tensor out(x.shape(), x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    auto px = x.value().data<T>();
    kernels::scale<T>(static_cast<T>(s), px.data(), out.data<T>().data(), px.size());
  });
  return make_result(std::move(out), "scale", {x}, [s](Node& self) {
    Node& nx = *self.inputs[0];
    dispatch(self.value.dtype(), [&]<class T>() {
      Tensor gx(nx.value.shape(), nx.value.dtype());
      auto g = self.grad.data<T>();
      kernels::scale<T>(static_cast<T>(s), g.data(), gx.data<T>().data(), g.size());
      nx.accumulate_grad(gx);
    });
  });
}

Var neg(const Var& x) { return scale(x, -1.0); }

Var add_scalar(const Var& x, double s) {
  Tensor out(x.shape(), x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    auto px = x.value().data<T>();
    auto po = out.data<T>();
    for (std::size_t i = 0; i < po.size(); ++i) po[i] = px[i] + static_cast<T>(s);
  });
  return make_result(std::move(out), "add_scalar", {x},
                     [](Node& self) { self.inputs[0]->accumulate_grad(self.grad); });
}

Var exp(const Var& x) { return unary(UnOp::kExp, x); }
Var log(const Var& x) { return unary(UnOp::kLog, x); }
Var tanh(const Var& x) { return unary(UnOp::kTanh, x); }
Var sigmoid(const Var& x) { return unary(UnOp::kSigmoid, x); }
Var relu(const Var& x) { return unary(UnOp::kRelu, x); }
Var silu(const Var& x) { return unary(UnOp::kSilu, x); }

Var glu(const Var& x) {
  if (x.value().rank() == 0 || last_dim(x.value()) % 2 != 0) {
    throw std::invalid_argument("glu: last axis must be even, got shape " + shape_str(x.shape()));
  }
  const std::size_t width = last_dim(x.value());
  const std::size_t half = width / 2;
  const std::size_t rows = x.value().numel() / width;
  Shape out_shape = x.shape();
  out_shape.back() = half;
  Tensor out(out_shape, x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    auto px = x.value().data<T>();
    auto po = out.data<T>();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < half; ++j) {
        po[r * half + j] = px[r * width + j] * stable_sigmoid(px[r * width + half + j]);
      }
    }
  });
  return make_result(std::move(out), "glu", {x}, [rows, half, width](Node& self) {
    Node& nx = *self.inputs[0];
    dispatch(self.value.dtype(), [&]<class T>() {
      Tensor gx(nx.value.shape(), nx.value.dtype());
      auto d = gx.data<T>();
      auto g = self.grad.data<T>();
      auto px = nx.value.data<T>();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < half; ++j) {
          const T a = px[r * width + j];
          const T s = stable_sigmoid(px[r * width + half + j]);
          const T gg = g[r * half + j];
          d[r * width + j] = gg * s;
          d[r * width + half + j] = gg * a * s * (T(1) - s);
        }
      }
      nx.accumulate_grad(gx);
    });
  });
}

Var softmax(const Var& x) {
  if (x.value().rank() == 0) throw std::invalid_argument("softmax: scalar input");
  const std::size_t width = last_dim(x.value());
  const std::size_t rows = width == 0 ? 0 : x.value().numel() / width;
  Tensor out(x.shape(), x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    auto px = x.value().data<T>();
    auto po = out.data<T>();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* in = px.data() + r * width;
      T* o = po.data() + r * width;
      const T mx = *std::max_element(in, in + width);
      if (!std::isfinite(mx)) {
        // every entry masked: uniform is undefined, emit zeros
        std::fill(o, o + width, T(0));
        continue;
      }
      T z = T(0);
      for (std::size_t j = 0; j < width; ++j) {
        o[j] = std::exp(in[j] - mx);
        z += o[j];
      }
      const T inv = T(1) / z;
      for (std::size_t j = 0; j < width; ++j) o[j] *= inv;
    }
  });
  return make_result(std::move(out), "softmax", {x}, [rows, width](Node& self) {
    Node& nx = *self.inputs[0];
    dispatch(self.value.dtype(), [&]<class T>() {
      Tensor gx(nx.value.shape(), nx.value.dtype());
      auto d = gx.data<T>();
      auto g = self.grad.data<T>();
      auto y = self.value.data<T>();
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t off = r * width;
        const T s = kernels::dot<T>(g.data() + off, y.data() + off, width);
        for (std::size_t j = 0; j < width; ++j) d[off + j] = y[off + j] * (g[off + j] - s);
      }
      nx.accumulate_grad(gx);
    });
  });
}

Var log_softmax(const Var& x) {
  if (x.value().rank() == 0) throw std::invalid_argument("log_softmax: scalar input");
  const std::size_t width = last_dim(x.value());
  const std::size_t rows = width == 0 ? 0 : x.value().numel() / width;
  Tensor out(x.shape(), x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    auto px = x.value().data<T>();
    auto po = out.data<T>();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* in = px.data() + r * width;
      T* o = po.data() + r * width;
      const T mx = *std::max_element(in, in + width);
      T z = T(0);
      for (std::size_t j = 0; j < width; ++j) z += std::exp(in[j] - mx);
      const T lz = mx + std::log(z);
      for (std::size_t j = 0; j < width; ++j) o[j] = in[j] - lz;
    }
  });
  return make_result(std::move(out), "log_softmax", {x}, [rows, width](Node& self) {
    Node& nx = *self.inputs[0];
    dispatch(self.value.dtype(), [&]<class T>() {
      Tensor gx(nx.value.shape(), nx.value.dtype());
      auto d = gx.data<T>();
      auto g = self.grad.data<T>();
      auto y = self.value.data<T>();
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t off = r * width;
        const T s = kernels::sum<T>(g.data() + off, width);
        for (std::size_t j = 0; j < width; ++j) d[off + j] = g[off + j] - std::exp(y[off + j]) * s;
      }
      nx.accumulate_grad(gx);
    });
  });
}

namespace {

Var layer_norm_impl(const Var& x, const Var* gamma, const Var* beta, double eps) {
  if (x.value().rank() == 0) throw std::invalid_argument("layer_norm: scalar input");
  const std::size_t width = last_dim(x.value());
  const std::size_t rows = width == 0 ? 0 : x.value().numel() / width;
  if (gamma) {
    require_same_dtype("layer_norm", x, *gamma);
    if (gamma->shape() != Shape{width} || beta->shape() != Shape{width}) {
      shape_error("layer_norm", x.shape(), gamma->shape());
    }
  }
  Tensor out(x.shape(), x.dtype());
  // normalized activations and reciprocal std, kept for backward
  auto xhat = std::make_shared<Tensor>(x.shape(), x.dtype());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  dispatch(x.dtype(), [&]<class T>() {
    auto px = x.value().data<T>();
    auto ph = xhat->data<T>();
    auto po = out.data<T>();
    const T* pg = gamma ? gamma->value().data<T>().data() : nullptr;
    const T* pbeta = beta ? beta->value().data<T>().data() : nullptr;
    for (std::size_t r = 0; r < rows; ++r) {
      const T* in = px.data() + r * width;
      T mu = T(0);
      for (std::size_t j = 0; j < width; ++j) mu += in[j];
      mu /= static_cast<T>(width);
      T var = T(0);
      for (std::size_t j = 0; j < width; ++j) var += (in[j] - mu) * (in[j] - mu);
      var /= static_cast<T>(width);
      const T rs = T(1) / std::sqrt(var + static_cast<T>(eps));
      (*rstd)[r] = static_cast<double>(rs);
      for (std::size_t j = 0; j < width; ++j) {
        const T h = (in[j] - mu) * rs;
        ph[r * width + j] = h;
        po[r * width + j] = pg ? h * pg[j] + pbeta[j] : h;
      }
    }
  });
  std::vector<Var> inputs{x};
  if (gamma) {
    inputs.push_back(*gamma);
    inputs.push_back(*beta);
  }
  const bool affine = gamma != nullptr;
  return make_result(std::move(out), "layer_norm", std::move(inputs),
                     [rows, width, affine, xhat, rstd](Node& self) {
    Node& nx = *self.inputs[0];
    dispatch(self.value.dtype(), [&]<class T>() {
      auto g = self.grad.data<T>();
      auto ph = xhat->data<T>();
      const T* pg = affine ? self.inputs[1]->value.data<T>().data() : nullptr;
      if (nx.requires_grad) {
        Tensor gx(nx.value.shape(), nx.value.dtype());
        auto d = gx.data<T>();
        std::vector<T> dh(width);
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t off = r * width;
          T m1 = T(0), m2 = T(0);
          for (std::size_t j = 0; j < width; ++j) {
            dh[j] = pg ? g[off + j] * pg[j] : g[off + j];
            m1 += dh[j];
            m2 += dh[j] * ph[off + j];
          }
          m1 /= static_cast<T>(width);
          m2 /= static_cast<T>(width);
          const T rs = static_cast<T>((*rstd)[r]);
          for (std::size_t j = 0; j < width; ++j) {
            d[off + j] = rs * (dh[j] - m1 - ph[off + j] * m2);
          }
        }
        nx.accumulate_grad(gx);
      }
      if (affine) {
        Node& ng = *self.inputs[1];
        Node& nb = *self.inputs[2];
        Tensor gg(Shape{width}, self.value.dtype());
        Tensor gb(Shape{width}, self.value.dtype());
        auto dg = gg.data<T>();
        auto db = gb.data<T>();
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t off = r * width;
          for (std::size_t j = 0; j < width; ++j) {
            dg[j] += g[off + j] * ph[off + j];
            db[j] += g[off + j];
          }
        }
        ng.accumulate_grad(gg);
        nb.accumulate_grad(gb);
      }
    });
  });
}

}  // namespace

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  return layer_norm_impl(x, &gamma, &beta, eps);
}

Var layer_norm(const Var& x, double eps) { return layer_norm_impl(x, nullptr, nullptr, eps); }

Var depthwise_conv1d(const Var& x, const Var& weight, const Var& bias) {
  require_rank("depthwise_conv1d", x, 2);
  require_rank("depthwise_conv1d", weight, 2);
  require_same_dtype("depthwise_conv1d", x, weight);
  const std::size_t steps = x.dim(0), channels = x.dim(1), kernel = weight.dim(0);
  if (weight.dim(1) != channels || bias.shape() != Shape{channels}) {
    shape_error("depthwise_conv1d", x.shape(), weight.shape());
  }
  if (kernel % 2 == 0) {
    throw std::invalid_argument("depthwise_conv1d: kernel size must be odd, got " +
                                std::to_string(kernel));
  }
  const auto half = static_cast<std::ptrdiff_t>(kernel / 2);
  const auto nsteps = static_cast<std::ptrdiff_t>(steps);
  Tensor out(Shape{steps, channels}, x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    auto px = x.value().data<T>();
    auto pw = weight.value().data<T>();
    auto pb = bias.value().data<T>();
    auto po = out.data<T>();
    for (std::ptrdiff_t t = 0; t < nsteps; ++t) {
      T* o = po.data() + t * static_cast<std::ptrdiff_t>(channels);
      std::copy(pb.begin(), pb.end(), o);
      for (std::size_t j = 0; j < kernel; ++j) {
        const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(j) - half;
        if (src < 0 || src >= nsteps) continue;
        const T* in = px.data() + src * static_cast<std::ptrdiff_t>(channels);
        const T* w = pw.data() + j * channels;
        for (std::size_t c = 0; c < channels; ++c) o[c] += w[c] * in[c];
      }
    }
  });
  return make_result(std::move(out), "depthwise_conv1d", {x, weight, bias},
                     [steps, channels, kernel, half](Node& self) {
    Node& nx = *self.inputs[0];
    Node& nw = *self.inputs[1];
    Node& nb = *self.inputs[2];
    const auto nsteps = static_cast<std::ptrdiff_t>(steps);
    const auto ch = static_cast<std::ptrdiff_t>(channels);
    dispatch(self.value.dtype(), [&]<class T>() {
      auto g = self.grad.data<T>();
      auto px = nx.value.data<T>();
      auto pw = nw.value.data<T>();
      Tensor gx(nx.value.shape(), nx.value.dtype());
      Tensor gw(nw.value.shape(), nw.value.dtype());
      Tensor gb(nb.value.shape(), nb.value.dtype());
      auto dx = gx.data<T>();
      auto dw = gw.data<T>();
      auto db = gb.data<T>();
      for (std::ptrdiff_t t = 0; t < nsteps; ++t) {
        const T* gt = g.data() + t * ch;
        for (std::size_t c = 0; c < channels; ++c) db[c] += gt[c];
        for (std::size_t j = 0; j < kernel; ++j) {
          const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(j) - half;
          if (src < 0 || src >= nsteps) continue;
          for (std::size_t c = 0; c < channels; ++c) {
            dx[src * ch + static_cast<std::ptrdiff_t>(c)] += gt[c] * pw[j * channels + c];
            dw[j * channels + c] += gt[c] * px[src * ch + static_cast<std::ptrdiff_t>(c)];
          }
        }
      }
      nx.accumulate_grad(gx);
      nw.accumulate_grad(gw);
      nb.accumulate_grad(gb);
    });
  });
}

Var gather_rows(const Var& x, std::span<const std::size_t> rows) {
  require_rank("gather_rows", x, 2);
  const std::size_t n = x.dim(0), width = x.dim(1);
  std::vector<std::size_t> index(rows.begin(), rows.end());
  for (auto r : index) {
    if (r >= n) {
      throw std::out_of_range("gather_rows: row " + std::to_string(r) + " out of range for shape " +
                              shape_str(x.shape()));
    }
  }
  Tensor out(Shape{index.size(), width}, x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    auto px = x.value().data<T>();
    auto po = out.data<T>();
    for (std::size_t i = 0; i < index.size(); ++i) {
      std::copy_n(px.data() + index[i] * width, width, po.data() + i * width);
    }
  });
  return make_result(std::move(out), "gather_rows", {x}, [index, width](Node& self) {
    Node& nx = *self.inputs[0];
    dispatch(self.value.dtype(), [&]<class T>() {
      Tensor gx(nx.value.shape(), nx.value.dtype());
      auto d = gx.data<T>();
      auto g = self.grad.data<T>();
      for (std::size_t i = 0; i < index.size(); ++i) {
        kernels::add<T>(d.data() + index[i] * width, g.data() + i * width,
                        d.data() + index[i] * width, width);
      }
      nx.accumulate_grad(gx);
    });
  });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  if (axis > 1) throw std::invalid_argument("concat: axis must be 0 or 1");
  for (const auto& p : parts) {
    require_rank("concat", p, 2);
    require_same_dtype("concat", parts[0], p);
    if (p.dim(1 - axis) != parts[0].dim(1 - axis)) {
      shape_error("concat", parts[0].shape(), p.shape());
    }
  }
  std::vector<std::size_t> sizes;
  std::size_t total = 0;
  for (const auto& p : parts) {
    sizes.push_back(p.dim(axis));
    total += p.dim(axis);
  }
  const std::size_t other = parts[0].dim(1 - axis);
  Shape out_shape = axis == 0 ? Shape{total, other} : Shape{other, total};
  Tensor out(out_shape, parts[0].dtype());
  dispatch(out.dtype(), [&]<class T>() {
    auto po = out.data<T>();
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      auto pp = parts[k].value().data<T>();
      if (axis == 0) {
        std::copy(pp.begin(), pp.end(), po.begin() + static_cast<std::ptrdiff_t>(offset * other));
      } else {
        for (std::size_t r = 0; r < other; ++r) {
          std::copy_n(pp.data() + r * sizes[k], sizes[k], po.data() + r * total + offset);
        }
      }
      offset += sizes[k];
    }
  });
  return make_result(std::move(out), "concat", parts, [axis, sizes, total, other](Node& self) {
    dispatch(self.value.dtype(), [&]<class T>() {
      auto g = self.grad.data<T>();
      std::size_t offset = 0;
      for (std::size_t k = 0; k < sizes.size(); ++k) {
        Node& np = *self.inputs[k];
        if (np.requires_grad) {
          Tensor gp(np.value.shape(), np.value.dtype());
          auto d = gp.data<T>();
          if (axis == 0) {
            std::copy_n(g.data() + offset * other, d.size(), d.data());
          } else {
            for (std::size_t r = 0; r < other; ++r) {
              std::copy_n(g.data() + r * total + offset, sizes[k], d.data() + r * sizes[k]);
            }
          }
          np.accumulate_grad(gp);
        }
        offset += sizes[k];
      }
    });
  });
}

Var slice(const Var& x, std::size_t axis, std::size_t start, std::size_t length) {
  require_rank("slice", x, 2);
  if (axis > 1 || start + length > x.dim(axis)) {
    throw std::out_of_range("slice: [" + std::to_string(start) + ", " +
                            std::to_string(start + length) + ") on axis " + std::to_string(axis) +
                            " of shape " + shape_str(x.shape()));
  }
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Shape out_shape = axis == 0 ? Shape{length, cols} : Shape{rows, length};
  Tensor out(out_shape, x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    auto px = x.value().data<T>();
    auto po = out.data<T>();
    if (axis == 0) {
      std::copy_n(px.data() + start * cols, length * cols, po.data());
    } else {
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(px.data() + r * cols + start, length, po.data() + r * length);
      }
    }
  });
  return make_result(std::move(out), "slice", {x}, [axis, start, length, rows, cols](Node& self) {
    Node& nx = *self.inputs[0];
    dispatch(self.value.dtype(), [&]<class T>() {
      Tensor gx(nx.value.shape(), nx.value.dtype());
      auto d = gx.data<T>();
      auto g = self.grad.data<T>();
      if (axis == 0) {
        std::copy_n(g.data(), length * cols, d.data() + start * cols);
      } else {
        for (std::size_t r = 0; r < rows; ++r) {
          std::copy_n(g.data() + r * length, length, d.data() + r * cols + start);
        }
      }
      nx.accumulate_grad(gx);
    });
  });
}

Var transpose(const Var& x) {
  require_rank("transpose", x, 2);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor out(Shape{cols, rows}, x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    auto px = x.value().data<T>();
    auto po = out.data<T>();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) po[c * rows + r] = px[r * cols + c];
    }
  });
  return make_result(std::move(out), "transpose", {x}, [rows, cols](Node& self) {
    Node& nx = *self.inputs[0];
    dispatch(self.value.dtype(), [&]<class T>() {
      Tensor gx(nx.value.shape(), nx.value.dtype());
      auto d = gx.data<T>();
      auto g = self.grad.data<T>();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) d[r * cols + c] = g[c * rows + r];
      }
      nx.accumulate_grad(gx);
    });
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), "reshape", {x}, [](Node& self) {
    Node& nx = *self.inputs[0];
    nx.accumulate_grad(self.grad.reshaped(nx.value.shape()));
  });
}

Var sum(const Var& x) {
  Tensor out(Shape{}, x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    auto px = x.value().data<T>();
    out.data<T>()[0] = kernels::sum<T>(px.data(), px.size());
  });
  return make_result(std::move(out), "sum", {x}, [](Node& self) {
    Node& nx = *self.inputs[0];
    nx.accumulate_grad(Tensor::full(nx.value.shape(), self.grad.item(), nx.value.dtype()));
  });
}

Var mean(const Var& x) {
  const std::size_t n = x.value().numel();
  if (n == 0) throw std::invalid_argument("mean: empty input");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

namespace {

Var reduce_last(const Var& x, bool average) {
  if (x.value().rank() == 0) throw std::invalid_argument("sum_last: scalar input");
  const std::size_t width = last_dim(x.value());
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  const std::size_t rows = shape_numel(out_shape);
  const double factor = average ? (width == 0 ? 0.0 : 1.0 / static_cast<double>(width)) : 1.0;
  Tensor out(out_shape, x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    auto px = x.value().data<T>();
    auto po = out.data<T>();
    for (std::size_t r = 0; r < rows; ++r) {
      po[r] = kernels::sum<T>(px.data() + r * width, width) * static_cast<T>(factor);
    }
  });
  return make_result(std::move(out), average ? "mean_last" : "sum_last", {x},
                     [rows, width, factor](Node& self) {
    Node& nx = *self.inputs[0];
    dispatch(self.value.dtype(), [&]<class T>() {
      Tensor gx(nx.value.shape(), nx.value.dtype());
      auto d = gx.data<T>();
      auto g = self.grad.data<T>();
      for (std::size_t r = 0; r < rows; ++r) {
        const T v = g[r] * static_cast<T>(factor);
        std::fill_n(d.data() + r * width, width, v);
      }
      nx.accumulate_grad(gx);
    });
  });
}

}  // namespace

Var sum_last(const Var& x) { return reduce_last(x, false); }
Var mean_last(const Var& x) { return reduce_last(x, true); }

Var masked_fill(const Var& x, std::span<const std::uint8_t> mask, double value) {
  if (mask.size() != x.value().numel()) {
    throw std::invalid_argument("masked_fill: mask has " + std::to_string(mask.size()) +
                                " entries for shape " + shape_str(x.shape()));
  }
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  Tensor out = x.value();
  dispatch(x.dtype(), [&]<class T>() {
    auto po = out.data<T>();
    for (std::size_t i = 0; i < po.size(); ++i) {
      if (m[i]) po[i] = static_cast<T>(value);
    }
  });
  return make_result(std::move(out), "masked_fill", {x}, [m = std::move(m)](Node& self) {
    Node& nx = *self.inputs[0];
    Tensor gx = self.grad;
    dispatch(self.value.dtype(), [&]<class T>() {
      auto d = gx.data<T>();
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (m[i]) d[i] = T(0);
      }
    });
    nx.accumulate_grad(gx);
  });
}

Var rotary(const Var& x, std::span<const std::int64_t> positions, double base) {
  require_rank("rotary", x, 2);
  const std::size_t steps = x.dim(0), width = x.dim(1);
  if (width % 2 != 0) {
    throw std::invalid_argument("rotary: head dimension must be even, got " +
                                std::to_string(width));
  }
  if (positions.size() != steps) {
    throw std::invalid_argument("rotary: " + std::to_string(positions.size()) +
                                " positions for " + std::to_string(steps) + " rows");
  }
  // cos/sin table per (row, pair)
  auto table = std::make_shared<std::vector<double>>(steps * width);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < width / 2; ++i) {
      const double theta =
          std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(width));
      const double angle = static_cast<double>(positions[t]) * theta;
      (*table)[t * width + 2 * i] = std::cos(angle);
      (*table)[t * width + 2 * i + 1] = std::sin(angle);
    }
  }
  Tensor out(x.shape(), x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    auto px = x.value().data<T>();
    auto po = out.data<T>();
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t i = 0; i < width; i += 2) {
        const T c = static_cast<T>((*table)[t * width + i]);
        const T s = static_cast<T>((*table)[t * width + i + 1]);
        const T a = px[t * width + i], b = px[t * width + i + 1];
        po[t * width + i] = a * c - b * s;
        po[t * width + i + 1] = a * s + b * c;
      }
    }
  });
  return make_result(std::move(out), "rotary", {x}, [steps, width, table](Node& self) {
    Node& nx = *self.inputs[0];
    dispatch(self.value.dtype(), [&]<class T>() {
      Tensor gx(nx.value.shape(), nx.value.dtype());
      auto d = gx.data<T>();
      auto g = self.grad.data<T>();
      for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t i = 0; i < width; i += 2) {
          const T c = static_cast<T>((*table)[t * width + i]);
          const T s = static_cast<T>((*table)[t * width + i + 1]);
          const T ga = g[t * width + i], gb = g[t * width + i + 1];
          d[t * width + i] = ga * c + gb * s;
          d[t * width + i + 1] = -ga * s + gb * c;
        }
      }
      nx.accumulate_grad(gx);
    });
  });
}

Var dropout(const Var& x, double rate, std::mt19937_64* rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
  if (!rng) throw std::invalid_argument("dropout: rate > 0 needs a generator");
  const std::size_t n = x.value().numel();
  std::vector<std::uint8_t> keep(n);
  std::bernoulli_distribution bern(1.0 - rate);
  for (auto& k : keep) k = bern(*rng) ? 1 : 0;
  const double inv = 1.0 / (1.0 - rate);
  Tensor out(x.shape(), x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    auto px = x.value().data<T>();
    auto po = out.data<T>();
    for (std::size_t i = 0; i < n; ++i) po[i] = keep[i] ? px[i] * static_cast<T>(inv) : T(0);
  });
  return make_result(std::move(out), "dropout", {x}, [keep = std::move(keep), inv](Node& self) {
    Node& nx = *self.inputs[0];
    dispatch(self.value.dtype(), [&]<class T>() {
      Tensor gx(nx.value.shape(), nx.value.dtype());
      auto d = gx.data<T>();
      auto g = self.grad.data<T>();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = keep[i] ? g[i] * static_cast<T>(inv) : T(0);
      nx.accumulate_grad(gx);
    });
  });
}

Var pick(const Var& x, std::span<const std::size_t> index) {
  require_rank("pick", x, 2);
  const std::size_t rows = x.dim(0), width = x.dim(1);
  if (index.size() != rows) {
    throw std::invalid_argument("pick: " + std::to_string(index.size()) + " indices for shape " +
                                shape_str(x.shape()));
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  for (auto i : idx) {
    if (i >= width) {
      throw std::out_of_range("pick: index " + std::to_string(i) + " out of range for shape " +
                              shape_str(x.shape()));
    }
  }
  Tensor out(Shape{rows}, x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    auto px = x.value().data<T>();
    auto po = out.data<T>();
    for (std::size_t r = 0; r < rows; ++r) po[r] = px[r * width + idx[r]];
  });
  return make_result(std::move(out), "pick", {x}, [idx = std::move(idx), width](Node& self) {
    Node& nx = *self.inputs[0];
    dispatch(self.value.dtype(), [&]<class T>() {
      Tensor gx(nx.value.shape(), nx.value.dtype());
      auto d = gx.data<T>();
      auto g = self.grad.data<T>();
      for (std::size_t r = 0; r < idx.size(); ++r) d[r * width + idx[r]] = g[r];
      nx.accumulate_grad(gx);
    });
  });
}

}  // namespace mecc::ops
