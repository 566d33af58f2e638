#include "mecc/param.hpp"

#include <cmath>
#include <stdexcept>

namespace mecc {

Parameter::Parameter(std::string name, Tensor value, bool frozen)
    : name_(std::move(name)), frozen_(frozen), var_(Var::leaf(std::move(value), !frozen)) {}

void Parameter::set_frozen(bool frozen) {
  frozen_ = frozen;
  var_.node()->requires_grad = !frozen;
  if (frozen) var_.node()->zero_grad();
}

void Parameter::assign(const Tensor& value) {
  if (value.shape() != this->value().shape() || value.dtype() != this->value().dtype()) {
    throw std::invalid_argument("parameter " + name_ + ": cannot assign " +
                                shape_str(value.shape()) + " " +
                                std::string(dtype_name(value.dtype())) + " to " +
                                shape_str(this->value().shape()) + " " +
                                std::string(dtype_name(this->value().dtype())));
  }
  var_.node()->value = value;
}

Parameter& ParamSet::add(std::string name, Tensor value) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  if (value.dtype() != dtype_) value = value.to(dtype_);
  index_.emplace(name, params_.size());
  return params_.emplace_back(std::move(name), std::move(value));
}

Parameter& ParamSet::add_glorot(std::string name, std::size_t fan_in, std::size_t fan_out,
                                std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return add_uniform(std::move(name), Shape{fan_in, fan_out}, bound, rng);
}

Parameter& ParamSet::add_filled(std::string name, Shape shape, double value) {
  return add(std::move(name), Tensor::full(std::move(shape), value, dtype_));
}

Parameter& ParamSet::add_uniform(std::string name, Shape shape, double bound,
                                 std::mt19937_64& rng) {
  Tensor t(std::move(shape), dtype_);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, dist(rng));
  return add(std::move(name), std::move(t));
}

Parameter* ParamSet::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

const Parameter* ParamSet::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

Parameter& ParamSet::at(const std::string& name) {
  if (auto* p = find(name)) return *p;
  throw std::out_of_range("no parameter named " + name);
}

const Parameter& ParamSet::at(const std::string& name) const {
  if (const auto* p = find(name)) return *p;
  throw std::out_of_range("no parameter named " + name);
}

std::vector<Parameter*> ParamSet::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParamSet::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

void ParamSet::set_frozen_prefix(const std::string& prefix, bool frozen) {
  for (auto& p : params_) {
    if (p.name().rfind(prefix, 0) == 0) p.set_frozen(frozen);
  }
}

void ParamSet::zero_grad() {
  for (auto& p : params_) p.var().node()->zero_grad();
}

std::map<std::string, Tensor> ParamSet::snapshot() const {
  std::map<std::string, Tensor> out;
  for (const auto& p : params_) out.emplace(p.name(), p.value());
  return out;
}

void ParamSet::restore(const std::map<std::string, Tensor>& values) {
  for (const auto& [name, value] : values) at(name).assign(value);
}

Gradients backward(Tape& tape, const Var& loss, ParamSet& params) {
  tape.backward(loss);
  Gradients grads;
  for (auto* p : params.all()) {
    if (p->frozen()) continue;
    grads.emplace(p->name(), p->var().grad());
  }
  params.zero_grad();
  return grads;
}

}  // namespace mecc
