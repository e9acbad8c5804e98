#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include <Eigen/Dense>

namespace cmguard::testing {

struct GradCheck {
  double max_rel = 0.0;
  int checked = 0;
  int skipped = 0;  // stencils straddling a ReLU kink
};

// Central-difference oracle. A coordinate whose estimate changes between h
// and h/4 has a non-smooth point inside the stencil and is skipped.
inline GradCheck central_difference_check(const std::function<double(const Eigen::VectorXd&)>& f,
                                          const Eigen::VectorXd& x, const Eigen::VectorXd& analytic, double h,
                                          const std::function<bool(Eigen::Index)>& active = {}) {
  GradCheck out;
  const auto fd_at = [&](Eigen::Index k, double step) {
    Eigen::VectorXd xp = x, xm = x;
    xp(k) += step;
    xm(k) -= step;
    return (f(xp) - f(xm)) / (2.0 * step);
  };
  Eigen::VectorXd fd = Eigen::VectorXd::Zero(x.size());
  std::vector<bool> use(static_cast<size_t>(x.size()), false);
  const double noise = 1e-9 * std::max(1.0, std::abs(f(x)));
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    if (active && !active(k)) continue;
    const double a = fd_at(k, h);
    const double b = fd_at(k, h / 4.0);
    if (std::abs(a - b) > noise + 1e-6 * std::max(std::abs(a), std::abs(b))) {
      ++out.skipped;
      continue;
    }
    fd(k) = b;
    use[static_cast<size_t>(k)] = true;
  }
  const double scale = std::max(fd.cwiseAbs().maxCoeff(), analytic.cwiseAbs().maxCoeff());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    if (!use[static_cast<size_t>(k)]) continue;
    const double denom = std::max({std::abs(fd(k)), std::abs(analytic(k)), 1e-4 * scale, 1e-12});
    out.max_rel = std::max(out.max_rel, std::abs(fd(k) - analytic(k)) / denom);
    ++out.checked;
  }
  return out;
}

}  // namespace cmguard::testing
