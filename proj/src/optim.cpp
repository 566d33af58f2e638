#include "mecc/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "mecc/kernels.hpp"

namespace mecc {

double LrSchedule::at(std::int64_t step) const {
  const double s = static_cast<double>(std::max<std::int64_t>(step, 1));
  const double w = static_cast<double>(std::max<std::int64_t>(warmup_steps, 1));
  if (s <= w) return peak * s / w;
  return peak * std::sqrt(w / s);
}

double global_norm(const Gradients& grads) {
  double total = 0.0;
  for (const auto& [name, g] : grads) {
    dispatch(g.dtype(), [&]<class T>() {
      auto d = g.data<T>();
      for (auto v : d) total += static_cast<double>(v) * static_cast<double>(v);
    });
  }
  return std::sqrt(total);
}

double clip_global_norm(Gradients& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_global_norm: max_norm must be > 0");
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& [name, g] : grads) {
      dispatch(g.dtype(), [&]<class T>() {
        auto d = g.data<T>();
        kernels::scale<T>(static_cast<T>(factor), d.data(), d.data(), d.size());
      });
    }
  }
  return norm;
}

void adam_step(ParamSet& params, const Gradients& grads, AdamState& state, double lr) {
  const auto& cfg = state.config;
  for (auto* p : params.all()) {
    if (p->frozen()) continue;
    if (!grads.count(p->name())) {
      throw std::invalid_argument("adam_step: missing gradient for trainable parameter " +
                                  p->name());
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto* p : params.all()) {
    if (p->frozen()) continue;
    const Tensor& g = grads.at(p->name());
    Tensor& value = p->mutable_value();
    if (g.shape() != value.shape()) {
      throw std::invalid_argument("adam_step: gradient shape " + shape_str(g.shape()) +
                                  " for parameter " + p->name() + " of shape " +
                                  shape_str(value.shape()));
    }
    auto [m_it, m_new] = state.first_moment.try_emplace(p->name(), value.shape(), value.dtype());
    auto [v_it, v_new] = state.second_moment.try_emplace(p->name(), value.shape(), value.dtype());
    dispatch(value.dtype(), [&]<class T>() {
      auto w = value.data<T>();
      auto gd = g.data<T>();
      auto m = m_it->second.data<T>();
      auto v = v_it->second.data<T>();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(gd[i]);
        const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi;
        const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double mhat = mi / bc1;
        const double vhat = vi / bc2;
        w[i] = static_cast<T>(static_cast<double>(w[i]) - lr * mhat / (std::sqrt(vhat) + cfg.epsilon));
      }
    });
  }
}

void ema_update(Tensor& shadow, const Tensor& value, double decay) {
  if (shadow.shape() != value.shape() || shadow.dtype() != value.dtype()) {
    throw std::invalid_argument("ema_update: shadow " + shape_str(shadow.shape()) +
                                " vs value " + shape_str(value.shape()));
  }
  dispatch(value.dtype(), [&]<class T>() {
    auto s = shadow.data<T>();
    auto v = value.data<T>();
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = static_cast<T>(decay * static_cast<double>(s[i]) +
                            (1.0 - decay) * static_cast<double>(v[i]));
    }
  });
}

void ema_update(std::map<std::string, Tensor>& shadow, const ParamSet& params, double decay) {
  for (const auto* p : params.all()) {
    if (p->frozen()) continue;
    auto it = shadow.find(p->name());
    if (it == shadow.end()) {
      throw std::invalid_argument("ema_update: no shadow for parameter " + p->name());
    }
    ema_update(it->second, p->value(), decay);
  }
}

}  // namespace mecc
