#pragma once

// Damped Newton for square systems F(x) = s(x) .* r(x) = 0 with box bounds.
//
// The per-equation scales s are re-evaluated once per iteration and held fixed
// while the finite-difference Jacobian and the line search run, so a jump in s
// (a decade change of the scale factor) never lands inside a difference quotient.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <vector>

namespace magchain {

template <class S>
concept ScaledSystem = requires(const S& s, const Eigen::VectorXd& x) {
  { s.raw(x) } -> std::convertible_to<Eigen::VectorXd>;
  { s.scales(x) } -> std::convertible_to<Eigen::VectorXd>;
};

struct NewtonOptions {
  double tolerance = 1e-10;  // on the scaled residual, infinity norm
  int max_iterations = 200;
  double fd_step = 1e-7;     // central differences
  double max_step = 0.5;     // infinity-norm cap on a single Newton step
};

struct IterationRecord {
  int step = 0;
  double residual_norm = 0.0;
  Eigen::VectorXd x;
};

struct NewtonResult {
  Eigen::VectorXd x;
  double residual_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline Eigen::VectorXd project(Eigen::VectorXd x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

template <ScaledSystem S>
Eigen::MatrixXd fd_jacobian(const S& sys, const Eigen::VectorXd& x, const Eigen::VectorXd& scale,
                            const Eigen::VectorXd& fx, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                            double h) {
  const auto n = x.size();
  Eigen::MatrixXd J(fx.size(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::VectorXd xp = x, xm = x;
    const bool room_below = x[j] - h >= lo[j];
    const bool room_above = x[j] + h <= hi[j];
    if (room_below && room_above) {
      xp[j] += h;
      xm[j] -= h;
      J.col(j) = (scale.cwiseProduct(sys.raw(xp)) - scale.cwiseProduct(sys.raw(xm))) / (2.0 * h);
    } else if (room_above) {
      xp[j] += h;
      J.col(j) = (scale.cwiseProduct(sys.raw(xp)) - fx) / h;
    } else {
      xm[j] -= h;
      J.col(j) = (fx - scale.cwiseProduct(sys.raw(xm))) / h;
    }
  }
  return J;
}

}  // namespace detail

template <ScaledSystem S>
NewtonResult solve_newton(const S& sys, const Eigen::VectorXd& x0, const Eigen::VectorXd& lower,
                          const Eigen::VectorXd& upper, const NewtonOptions& opts,
                          std::vector<IterationRecord>* trace = nullptr) {
  NewtonResult best;
  Eigen::VectorXd x = detail::project(x0, lower, upper);

  for (int it = 0; it <= opts.max_iterations; ++it) {
    const Eigen::VectorXd scale = sys.scales(x);
    const Eigen::VectorXd fx = scale.cwiseProduct(sys.raw(x));
    const double norm = fx.lpNorm<Eigen::Infinity>();
    if (trace) trace->push_back({it, norm, x});
    if (norm < best.residual_norm) {
      best.x = x;
      best.residual_norm = norm;
      best.iterations = it;
    }
    if (norm <= opts.tolerance) {
      best.converged = true;
      return best;
    }
    if (it == opts.max_iterations) break;

    const Eigen::MatrixXd J = detail::fd_jacobian(sys, x, scale, fx, lower, upper, opts.fd_step);
    Eigen::VectorXd dx = J.colPivHouseholderQr().solve(-fx);
    if (!dx.allFinite()) dx = -J.transpose() * fx;
    const double step_norm = dx.lpNorm<Eigen::Infinity>();
    if (step_norm > opts.max_step) dx *= opts.max_step / step_norm;

    // Backtracking on 0.5 ||F||^2 with the scales frozen.
    const double merit = 0.5 * fx.squaredNorm();
    bool accepted = false;
    for (double lambda = 1.0; lambda > 1e-12; lambda *= 0.5) {
      const Eigen::VectorXd trial = detail::project(x + lambda * dx, lower, upper);
      Eigen::VectorXd ft;
      try {
        ft = scale.cwiseProduct(sys.raw(trial));
      } catch (const std::exception&) {
        continue;
      }
      if (!ft.allFinite()) continue;
      if (0.5 * ft.squaredNorm() <= (1.0 - 1e-4 * lambda) * merit) {
        x = trial;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // Levenberg-Marquardt fallback before giving up.
      const Eigen::MatrixXd JtJ = J.transpose() * J;
      const Eigen::VectorXd g = J.transpose() * fx;
      for (double mu = 1e-6 * std::max(1.0, JtJ.diagonal().maxCoeff()); mu < 1e12; mu *= 10.0) {
        Eigen::MatrixXd A = JtJ;
        A.diagonal().array() += mu;
        const Eigen::VectorXd trial = detail::project(x + A.ldlt().solve(-g), lower, upper);
        Eigen::VectorXd ft;
        try {
          ft = scale.cwiseProduct(sys.raw(trial));
        } catch (const std::exception&) {
          continue;
        }
        if (ft.allFinite() && 0.5 * ft.squaredNorm() < merit) {
          x = trial;
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) break;
  }
  return best;
}

}  // namespace magchain
