#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hypermarg/core/errors.hpp"
#include "hypermarg/core/types.hpp"

namespace hypermarg {

/// Factorized hyperprior. Additive constants are dropped, so
///   gamma(rate)          -> rate * theta_j              (theta_j >= 0)
///   gaussian(mean, var)  -> (theta_j - mean)^2 / (2 var)
///   uniform(lo, hi)      -> 0                           (lo <= theta_j <= hi)
class HyperPrior {
 public:
  enum class Family { gamma, gaussian, uniform };

  struct Component {
    Family family = Family::uniform;
    double a = 0.0;  // rate | mean | lower
    double b = 0.0;  // unused | variance | upper
  };

  static Component gamma(double rate) {
    if (!(rate >= 0.0)) throw InvalidArgument("HyperPrior::gamma: rate must be nonnegative");
    return {Family::gamma, rate, 0.0};
  }
  static Component gaussian(double mean, double variance) {
    if (!(variance > 0.0)) throw InvalidArgument("HyperPrior::gaussian: variance must be positive");
    return {Family::gaussian, mean, variance};
  }
  static Component uniform(double lo, double hi) {
    if (!(lo < hi)) throw InvalidArgument("HyperPrior::uniform: need lo < hi");
    return {Family::uniform, lo, hi};
  }

  HyperPrior() = default;
  explicit HyperPrior(std::vector<Component> components) : components_(std::move(components)) {}

  static HyperPrior repeat(Component c, Index p) { return HyperPrior(std::vector<Component>(static_cast<std::size_t>(p), c)); }

  Index dim() const { return static_cast<Index>(components_.size()); }
  const std::vector<Component>& components() const { return components_; }

  double neglog(const Vec& theta) const {
    check(theta);
    double out = 0.0;
    for (Index j = 0; j < dim(); ++j) {
      const auto& c = components_[static_cast<std::size_t>(j)];
      switch (c.family) {
        case Family::gamma:
          out += c.a * theta[j];
          break;
        case Family::gaussian:
          out += (theta[j] - c.a) * (theta[j] - c.a) / (2.0 * c.b);
          break;
        case Family::uniform:
          break;
      }
    }
    return out;
  }

  Vec grad_neglog(const Vec& theta) const {
    check(theta);
    Vec g = Vec::Zero(dim());
    for (Index j = 0; j < dim(); ++j) {
      const auto& c = components_[static_cast<std::size_t>(j)];
      switch (c.family) {
        case Family::gamma:
          g[j] = c.a;
          break;
        case Family::gaussian:
          g[j] = (theta[j] - c.a) / c.b;
          break;
        case Family::uniform:
          break;
      }
    }
    return g;
  }

 private:
  void check(const Vec& theta) const {
    if (theta.size() != dim()) throw InvalidArgument("HyperPrior: parameter length mismatch");
    for (Index j = 0; j < dim(); ++j) {
      const auto& c = components_[static_cast<std::size_t>(j)];
      const bool ok = std::isfinite(theta[j]) && (c.family != Family::gamma || theta[j] >= 0.0) &&
                      (c.family != Family::uniform || (theta[j] >= c.a && theta[j] <= c.b));
      if (!ok) throw InvalidArgument("HyperPrior: component " + std::to_string(j) + " outside its support");
    }
  }

  std::vector<Component> components_;
};

}  // namespace hypermarg
