#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "aimclr/tensor.hpp"

namespace aimclr {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_coordinate = 0;
  std::size_t coordinates = 0;
  // Set when f or the analytic gradient was non-finite at some perturbation.
  std::optional<std::size_t> nonfinite_tensor;
  std::optional<std::size_t> nonfinite_coordinate;
  bool passed = false;
};

/// Compares reverse-mode gradients against central differences
/// (f(x+eps*e_i) - f(x-eps*e_i)) / 2eps for every coordinate of every tensor
/// in `inputs`. The per-coordinate relative error is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-4).
/// `f` must be deterministic and return a scalar; the inputs must require grad.
GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                           double eps, double tol);

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double eps, double tol);

/// False when some coordinate's central difference at eps disagrees with the
/// one at eps/4 by more than `tol` (same relative measure as grad_check).
/// Piecewise-smooth functions such as ReLU networks fail this only when a
/// kink lies within eps of the point, where finite differences are not a
/// valid oracle.
bool locally_smooth(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double eps,
                    double tol = 1e-6);

}  // namespace aimclr
