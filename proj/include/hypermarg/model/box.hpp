#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "hypermarg/core/errors.hpp"
#include "hypermarg/core/types.hpp"

namespace hypermarg {

/// Compact parameter box [lower, upper] with finite bounds.
class Box {
 public:
  Box() = default;

  Box(Vec lower, Vec upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
    if (lower_.size() != upper_.size()) throw InvalidArgument("Box: bound lengths differ");
    for (Index j = 0; j < lower_.size(); ++j) {
      if (!std::isfinite(lower_[j]) || !std::isfinite(upper_[j])) {
        throw InvalidArgument("Box: bound " + std::to_string(j) + " is not finite");
      }
      if (!(lower_[j] < upper_[j])) throw InvalidArgument("Box: lower must be below upper in component " + std::to_string(j));
    }
  }

  static Box uniform(Index p, double lo, double hi) { return Box(Vec::Constant(p, lo), Vec::Constant(p, hi)); }

  Index dim() const { return lower_.size(); }
  const Vec& lower() const { return lower_; }
  const Vec& upper() const { return upper_; }
  Vec width() const { return upper_ - lower_; }
  Vec center() const { return 0.5 * (lower_ + upper_); }

  /// Radius of the smallest enclosing ball (half the diagonal).
  double radius() const { return 0.5 * width().norm(); }

  Vec project(const Vec& theta) const {
    check(theta);
    return theta.cwiseMax(lower_).cwiseMin(upper_);
  }

  bool contains(const Vec& theta, double tol = 0.0) const {
    check(theta);
    return ((theta - lower_).array() >= -tol).all() && ((upper_ - theta).array() >= -tol).all();
  }

  void require_contains(const Vec& theta, const std::string& who) const {
    if (!contains(theta)) throw InvalidArgument(who + ": theta outside the box");
  }

 private:
  void check(const Vec& theta) const {
    if (theta.size() != dim()) {
      throw InvalidArgument("Box: expected " + std::to_string(dim()) + " parameters, got " + std::to_string(theta.size()));
    }
  }

  Vec lower_;
  Vec upper_;
};

/// theta = [psi; y] split into distribution (psi) and model (y) parts.
struct HyperParams {
  Vec psi;
  Vec y;

  Index size() const { return psi.size() + y.size(); }

  Vec theta() const {
    Vec out(size());
    out << psi, y;
    return out;
  }

  static HyperParams split(const Vec& theta, Index n_psi) {
    if (n_psi < 0 || n_psi > theta.size()) throw InvalidArgument("HyperParams::split: bad psi length");
    return {theta.head(n_psi), theta.tail(theta.size() - n_psi)};
  }
};

/// Signed forward-difference step for component j: magnitude
/// rel * max(1, |theta_j|), pointing away from the nearer bound.
inline double one_sided_step(const Box& box, const Vec& theta, Index j, double rel) {
  const double h = rel * std::max(1.0, std::abs(theta[j]));
  if (box.upper()[j] - box.lower()[j] < 2.0 * h) {
    throw InvalidArgument("finite-difference step: box too thin in component " + std::to_string(j));
  }
  const double room_up = box.upper()[j] - theta[j];
  const double room_down = theta[j] - box.lower()[j];
  return room_up < room_down ? -h : h;
}

}  // namespace hypermarg
