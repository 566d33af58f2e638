#pragma once

#include <deque>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "mecc/autograd.hpp"

namespace mecc {

// Named trainable tensor. A frozen parameter never receives a gradient of its
// own, but ops that read it still pass gradients on to their other inputs.
class Parameter {
 public:
  Parameter(std::string name, Tensor value, bool frozen = false);

  const std::string& name() const { return name_; }
  bool frozen() const { return frozen_; }
  void set_frozen(bool frozen);

  Var var() const { return var_; }
  const Tensor& value() const { return var_.value(); }
  // Replaces the stored values; shape and dtype must match.
  void assign(const Tensor& value);
  Tensor& mutable_value() { return var_.node()->value; }

 private:
  std::string name_;
  bool frozen_;
  Var var_;
};

using Gradients = std::map<std::string, Tensor>;

// Owns the parameters of one model. Names are unique; references returned by
// add() stay valid for the set's lifetime.
class ParamSet {
 public:
  explicit ParamSet(DType dtype = DType::kF32) : dtype_(dtype) {}
  ParamSet(const ParamSet&) = delete;
  ParamSet& operator=(const ParamSet&) = delete;

  DType dtype() const { return dtype_; }

  Parameter& add(std::string name, Tensor value);
  // Glorot-uniform matrix [fan_in, fan_out].
  Parameter& add_glorot(std::string name, std::size_t fan_in, std::size_t fan_out,
                        std::mt19937_64& rng);
  Parameter& add_filled(std::string name, Shape shape, double value);
  Parameter& add_uniform(std::string name, Shape shape, double bound, std::mt19937_64& rng);

  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t size() const { return params_.size(); }

  void set_frozen_prefix(const std::string& prefix, bool frozen);
  void zero_grad();

  // Per-parameter copy of current values, keyed by name.
  std::map<std::string, Tensor> snapshot() const;
  void restore(const std::map<std::string, Tensor>& values);

 private:
  DType dtype_;
  std::deque<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

// Runs tape.backward(loss) and returns the gradient of every non-frozen
// parameter in `params` (zeros when the loss does not depend on it). Leaf
// gradients are cleared afterwards so the next step starts from zero.
Gradients backward(Tape& tape, const Var& loss, ParamSet& params);

}  // namespace mecc
