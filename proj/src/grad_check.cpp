#include "mecc/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mecc {
namespace {

struct Target {
  std::string name;
  std::shared_ptr<Node> node;
};

GradCheckReport run_check(const std::function<Var()>& loss_fn, const std::vector<Target>& targets,
                          const GradCheckOptions& opt) {
  for (const auto& t : targets) t.node->zero_grad();
  Tape tape;
  Var loss;
  {
    TapeScope scope(tape);
    loss = loss_fn();
  }
  std::vector<Tensor> analytic;
  if (!tape.empty()) tape.backward(loss);
  for (const auto& t : targets) {
    analytic.push_back(t.node->has_grad ? t.node->grad
                                        : Tensor::zeros(t.node->value.shape(), t.node->value.dtype()));
    t.node->zero_grad();
  }
  tape.clear();

  GradCheckReport report;
  std::vector<GradCheckEntry> entries;
  NoGradScope no_grad;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    Tensor& value = targets[k].node->value;
    for (std::size_t i = 0; i < value.numel(); ++i) {
      const double original = value.at(i);
      auto central = [&](double h) {
        value.set(i, original + h);
        const double up = loss_fn().value().item();
        value.set(i, original - h);
        const double down = loss_fn().value().item();
        return (up - down) / (2.0 * h);
      };
      const double coarse = central(opt.eps);
      const double fine = central(0.5 * opt.eps);
      value.set(i, original);
      const double numeric = (4.0 * fine - coarse) / 3.0;
      const double a = analytic[k].at(i);
      const double denom = std::max({std::abs(a), std::abs(numeric), opt.abs_floor});
      const double err = std::abs(a - numeric) / denom;
      entries.push_back({targets[k].name, i, a, numeric, err});
      report.max_rel_err = std::max(report.max_rel_err, err);
      if (!std::isfinite(err)) report.max_rel_err = err;
      ++report.checked;
    }
  }
  std::sort(entries.begin(), entries.end(),
            [](const auto& x, const auto& y) { return x.rel_err > y.rel_err; });
  entries.resize(std::min(entries.size(), opt.report_top));
  report.worst = std::move(entries);
  report.passed = std::isfinite(report.max_rel_err) && report.max_rel_err <= opt.rel_tol;
  return report;
}

}  // namespace

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "PASS" : "FAIL") << " checked=" << checked << " max_rel_err=" << max_rel_err;
  for (const auto& e : worst) {
    os << "\n  " << e.name << "[" << e.index << "] analytic=" << e.analytic
       << " numeric=" << e.numeric << " rel_err=" << e.rel_err;
  }
  return os.str();
}

GradCheckReport grad_check(const std::function<Var()>& loss_fn,
                           const std::vector<Parameter*>& params,
                           const GradCheckOptions& options) {
  std::vector<Target> targets;
  for (auto* p : params) {
    if (p->frozen()) continue;
    targets.push_back({p->name(), p->var().node()});
  }
  return run_check(loss_fn, targets, options);
}

GradCheckReport grad_check(const std::function<Var()>& loss_fn,
                           const std::vector<std::pair<std::string, Var>>& leaves,
                           const GradCheckOptions& options) {
  std::vector<Target> targets;
  for (const auto& [name, v] : leaves) {
    if (!v.requires_grad()) continue;
    targets.push_back({name, v.node()});
  }
  return run_check(loss_fn, targets, options);
}

}  // namespace mecc
