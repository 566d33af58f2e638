#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mecc/param.hpp"

namespace mecc {

struct GradCheckOptions {
  // Step of the coarser central difference; the estimate is Richardson
  // extrapolated from steps eps and eps/2.
  double eps = 1e-3;
  double rel_tol = 1e-6;
  // Denominator floor of the relative error, so entries whose true gradient
  // is ~0 are judged on absolute error instead.
  double abs_floor = 1e-4;
  std::size_t report_top = 5;
};

struct GradCheckEntry {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  std::size_t checked = 0;
  double max_rel_err = 0.0;
  std::vector<GradCheckEntry> worst;  // descending rel_err
  bool passed = true;

  std::string summary() const;
};

// Compares backward() gradients of the scalar `loss_fn` against central
// finite differences for every element of every target. Frozen parameters
// are skipped. The function is re-evaluated 4x per element, so keep inputs
// small; run in float64.
GradCheckReport grad_check(const std::function<Var()>& loss_fn,
                           const std::vector<Parameter*>& params,
                           const GradCheckOptions& options = {});

// Same, for plain leaf variables (inputs rather than parameters).
GradCheckReport grad_check(const std::function<Var()>& loss_fn,
                           const std::vector<std::pair<std::string, Var>>& leaves,
                           const GradCheckOptions& options = {});

}  // namespace mecc
