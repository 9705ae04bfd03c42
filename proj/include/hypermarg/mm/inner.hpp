#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "hypermarg/core/errors.hpp"
#include "hypermarg/core/types.hpp"
#include "hypermarg/model/box.hpp"

namespace hypermarg {

/// Diagonal metric for the projected gradient step theta - s D g.
///   none:     D = I
///   relative: D_j = theta_j^2 on components with a positive lower bound,
///             (width_j / 4)^2 elsewhere
enum class InnerScaling { none, relative };

struct InnerOptions {
  Index max_iter = 15;
  double step_tol = 1e-4;
  double armijo_c = 1e-4;
  Index max_backtracks = 40;
  InnerScaling scaling = InnerScaling::relative;
  double initial_move = 0.1;  // first trial step moves scaled coordinates by at most this much
  double max_move = 1.0;      // cap on the scaled move of any accepted trial step
  // Called after every accepted step with (iteration, theta, value).
  std::function<void(Index, const Vec&, double)> on_iterate;
};

struct InnerResult {
  Vec theta;
  double value = 0.0;
  double initial_value = 0.0;
  Index iterations = 0;  // accepted steps
  Index fn_evals = 0;
  Index grad_evals = 0;
  Index backtracks = 0;
  bool converged = false;
};

namespace detail {

inline Vec inner_metric(const Box& box, const Vec& theta, InnerScaling scaling) {
  Vec d = Vec::Ones(theta.size());
  if (scaling == InnerScaling::none) return d;
  for (Index j = 0; j < theta.size(); ++j) {
    if (box.lower()[j] > 0.0) {
      d[j] = theta[j] * theta[j];
    } else {
      const double w = 0.25 * (box.upper()[j] - box.lower()[j]);
      d[j] = w * w;
    }
  }
  return d;
}

inline double checked(double v, const char* who) {
  if (!std::isfinite(v)) throw NumericalFailure(std::string(who) + ": non-finite objective value");
  return v;
}

}  // namespace detail

/// Projected (diagonally scaled) gradient descent with Barzilai-Borwein trial
/// steps and Armijo backtracking on the projected arc. Returns the best point
/// seen, so f(result) <= f(theta0). Only f(theta0) must be finite.
inline InnerResult projected_gradient_min(const std::function<double(const Vec&)>& f,
                                          const std::function<Vec(const Vec&)>& grad, const Box& box, const Vec& theta0,
                                          const InnerOptions& opts = {}) {
  box.require_contains(theta0, "projected_gradient_min");
  InnerResult out;
  Vec x = theta0;
  double fx = detail::checked(f(x), "projected_gradient_min");
  ++out.fn_evals;
  out.initial_value = fx;
  out.theta = x;
  out.value = fx;

  Vec prev_x, prev_g;
  double step = 0.0;
  for (Index k = 0; k < opts.max_iter; ++k) {
    const Vec g = grad(x);
    ++out.grad_evals;
    if (!g.allFinite()) throw NumericalFailure("projected_gradient_min: non-finite gradient");
    const Vec metric = detail::inner_metric(box, x, opts.scaling);
    const Vec dir = -metric.cwiseProduct(g);
    // largest scaled move per unit step
    const double speed = (metric.cwiseSqrt().cwiseProduct(g)).cwiseAbs().maxCoeff();
    if (speed == 0.0) {
      out.converged = true;
      break;
    }
    const double cap = opts.max_move / speed;
    if (k == 0) {
      step = opts.initial_move / speed;
    } else {
      const Vec dx = x - prev_x, dg = g - prev_g;
      const double num = dx.cwiseProduct(metric.cwiseInverse()).dot(dx);
      const double den = dx.dot(dg);
      step = (den > 0.0 && std::isfinite(num / den)) ? num / den : 2.0 * step;
    }
    step = std::min(step, cap);

    bool accepted = false;
    Vec trial;
    double ftrial = 0.0;
    for (Index b = 0; b <= opts.max_backtracks; ++b) {
      trial = box.project(x + step * dir);
      if (trial == x) break;
      ftrial = f(trial);
      ++out.fn_evals;
      // a non-finite trial value is treated as a failed Armijo test
      if (std::isfinite(ftrial) && ftrial <= fx + opts.armijo_c * g.dot(trial - x)) {
        accepted = true;
        break;
      }
      step *= 0.5;
      ++out.backtracks;
    }
    if (!accepted) {
      // no admissible decrease along the projected arc: stationary to working precision
      out.converged = true;
      break;
    }
    prev_x = x;
    prev_g = g;
    const double move = (trial - x).norm() / std::max(1.0, x.norm());
    x = trial;
    fx = ftrial;
    ++out.iterations;
    if (fx <= out.value) {
      out.value = fx;
      out.theta = x;
    }
    if (opts.on_iterate) opts.on_iterate(out.iterations, x, fx);
    if (move < opts.step_tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace hypermarg
