#include "aimclr/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>

namespace aimclr {

namespace {
constexpr double kRelFloor = 1e-4;
}

GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                           double eps, double tol) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
  for (auto& x : inputs) {
    if (!x.requires_grad()) throw std::invalid_argument("grad_check: input does not require grad");
    x.zero_grad();
  }

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tensor y = f();
    if (y.numel() != 1) throw ShapeError("grad_check: f must return a scalar");
    if (tape.size() > 0) tape.backward(y);
    for (const auto& x : inputs) {
      if (x.has_grad()) {
        analytic.emplace_back(x.grad().begin(), x.grad().end());
      } else {
        analytic.emplace_back(x.numel(), 0.0);
      }
    }
  }

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    auto values = inputs[ti].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double plus = f().item();
      values[i] = saved - eps;
      const double minus = f().item();
      values[i] = saved;

      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[ti][i];
      ++report.coordinates;
      if (!std::isfinite(numeric) || !std::isfinite(a)) {
        if (!report.nonfinite_coordinate) {
          report.nonfinite_tensor = ti;
          report.nonfinite_coordinate = i;
        }
        continue;
      }
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), kRelFloor});
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_tensor = ti;
        report.worst_coordinate = i;
      }
    }
  }
  report.passed = !report.nonfinite_coordinate && report.max_rel_error <= tol;
  return report;
}

bool locally_smooth(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double eps, double tol) {
  if (!(eps > 0.0)) throw std::invalid_argument("locally_smooth: eps must be positive");
  NoGradGuard no_grad;
  auto central = [&](std::span<double> values, std::size_t i, double h) {
    const double saved = values[i];
    values[i] = saved + h;
    const double plus = f().item();
    values[i] = saved - h;
    const double minus = f().item();
    values[i] = saved;
    return (plus - minus) / (2.0 * h);
  };
  for (auto& x : inputs) {
    auto values = x.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double coarse = central(values, i, eps);
      const double fine = central(values, i, eps / 4.0);
      if (!std::isfinite(coarse) || !std::isfinite(fine)) return false;
      if (std::abs(coarse - fine) / std::max({std::abs(coarse), std::abs(fine), kRelFloor}) > tol) return false;
    }
  }
  return true;
}

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double eps, double tol) {
  return grad_check([&]() { return f(x); }, {x}, eps, tol);
}

}  // namespace aimclr
