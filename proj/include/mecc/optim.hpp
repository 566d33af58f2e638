#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "mecc/param.hpp"

namespace mecc {

// Linear warmup to `peak` over `warmup_steps`, then peak * sqrt(warmup / step).
struct LrSchedule {
  double peak = 1e-3;
  std::int64_t warmup_steps = 100;

  double at(std::int64_t step) const;  // step counts from 1
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  LrSchedule schedule;
  std::int64_t step = 0;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
};

// Scales every gradient by max_norm / g when the global L2 norm g exceeds
// max_norm. Returns the pre-clipping norm.
double clip_global_norm(Gradients& grads, double max_norm);
double global_norm(const Gradients& grads);

// One bias-corrected Adam update with learning rate `lr`. Frozen parameters
// are skipped; a trainable parameter without a gradient is an error.
void adam_step(ParamSet& params, const Gradients& grads, AdamState& state, double lr);

// shadow = decay * shadow + (1 - decay) * value for every trainable
// parameter; each needs a shadow entry.
void ema_update(std::map<std::string, Tensor>& shadow, const ParamSet& params, double decay);
void ema_update(Tensor& shadow, const Tensor& value, double decay);

}  // namespace mecc
