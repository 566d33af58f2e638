#pragma once
// Differentiable tensor ops.
//
// Broadcasting (add, sub, mul, div): shapes are aligned at their trailing
// axes; a missing leading axis or an axis of size 1 stretches to the other
// operand's size. Any other disagreement is a std::invalid_argument naming the
// op and both shapes. The gradient of a stretched operand is summed over the
// stretched axes.
//
// Ops documented as "rank 2" take (rows x cols) matrices. "Last axis" ops
// (softmax, log_softmax, layer_norm, glu, sum_last, mean_last) treat every
// leading index as an independent row.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "mecc/autograd.hpp"

namespace mecc::ops {

Var matmul(const Var& a, const Var& b);  // rank 2: [m,k] x [k,n]

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

Var neg(const Var& x);
Var scale(const Var& x, double s);
Var add_scalar(const Var& x, double s);

Var exp(const Var& x);
Var log(const Var& x);
Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var relu(const Var& x);
Var silu(const Var& x);  // x * sigmoid(x), the conformer "swish"
// Gated linear unit over the last axis: first half * sigmoid(second half).
Var glu(const Var& x);

Var softmax(const Var& x);
Var log_softmax(const Var& x);
// Normalizes over the last axis; a constant row maps to zeros (eps keeps the
// division finite). gamma/beta have the size of the last axis.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var layer_norm(const Var& x, double eps = 1e-5);

// x: [T,C], weight: [K,C], bias: [C]; zero "same" padding, K odd.
Var depthwise_conv1d(const Var& x, const Var& weight, const Var& bias);

Var gather_rows(const Var& x, std::span<const std::size_t> rows);  // rank 2
Var concat(const std::vector<Var>& parts, std::size_t axis);         // rank 2
Var slice(const Var& x, std::size_t axis, std::size_t start, std::size_t length);  // rank 2
Var transpose(const Var& x);                                          // rank 2
Var reshape(const Var& x, Shape shape);

Var sum(const Var& x);   // -> scalar
Var mean(const Var& x);  // -> scalar
Var sum_last(const Var& x);
Var mean_last(const Var& x);

// mask has x.numel() entries; nonzero entries are replaced by value and get
// zero gradient.
Var masked_fill(const Var& x, std::span<const std::uint8_t> mask, double value);

// Rotates each pair (x[2i], x[2i+1]) of row t by positions[t] * base^(-2i/d).
// x: [T,d] with d even.
Var rotary(const Var& x, std::span<const std::int64_t> positions, double base = 10000.0);

// Inverted dropout. rate == 0 returns x unchanged and draws nothing.
Var dropout(const Var& x, double rate, std::mt19937_64* rng);

// out[i] = x[i, index[i]]; x: [N,V].
Var pick(const Var& x, std::span<const std::size_t> index);

}  // namespace mecc::ops
