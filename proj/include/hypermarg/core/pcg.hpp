#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "hypermarg/core/errors.hpp"
#include "hypermarg/core/nystrom.hpp"
#include "hypermarg/core/sym_op.hpp"
#include "hypermarg/core/types.hpp"

namespace hypermarg {

struct PcgOptions {
  double tol = 1e-8;  // relative residual
  Index maxit = 500;
  // Called with (iteration, iterate) after every update.
  std::function<void(Index, const Vec&)> observer;
};

struct PcgResult {
  Vec x;
  Index iterations = 0;
  bool converged = false;
  double relative_residual = 0.0;
};

/// Preconditioned conjugate gradient for SPD op. A recursively converged
/// solve is confirmed against the true residual and restarted if it drifted.
inline PcgResult pcg_solve(const SymOp& op, const Vec& rhs, const Preconditioner* pre = nullptr,
                           const PcgOptions& opts = {}) {
  const Index m = op.dim();
  if (rhs.size() != m) throw InvalidArgument("pcg_solve: rhs length mismatch");
  if (!(opts.tol > 0.0 && opts.tol < 1.0)) throw InvalidArgument("pcg_solve: tol must lie in (0, 1)");
  if (pre && pre->dim() != m) throw InvalidArgument("pcg_solve: preconditioner dimension mismatch");
  if (!rhs.allFinite()) throw NumericalFailure("pcg_solve: non-finite right-hand side");

  PcgResult out;
  out.x = Vec::Zero(m);
  const double bnorm = rhs.norm();
  if (bnorm == 0.0) {
    out.converged = true;
    return out;
  }
  const double target = opts.tol * bnorm;
  auto precond = [&](const Vec& v) -> Vec { return pre ? pre->apply_inverse(v) : v; };

  Vec r = rhs;
  constexpr int kMaxRestarts = 3;
  for (int restart = 0; restart <= kMaxRestarts; ++restart) {
    Vec z = precond(r);
    Vec p = z;
    double rz = r.dot(z);
    bool recursive_converged = false;
    while (out.iterations < opts.maxit) {
      const Vec ap = op.matvec(p);
      const double pap = p.dot(ap);
      if (!std::isfinite(pap) || !std::isfinite(rz)) {
        throw NumericalFailure("pcg_solve: non-finite value at iteration " + std::to_string(out.iterations + 1));
      }
      if (!(pap > 0.0)) {
        throw NumericalFailure("pcg_solve: operator not positive definite (p^T A p = " + std::to_string(pap) + ")");
      }
      const double step = rz / pap;
      out.x += step * p;
      r -= step * ap;
      ++out.iterations;
      if (opts.observer) opts.observer(out.iterations, out.x);
      if (!r.allFinite()) throw NumericalFailure("pcg_solve: non-finite residual");
      if (r.norm() <= target) {
        recursive_converged = true;
        break;
      }
      z = precond(r);
      const double rz_next = r.dot(z);
      p = z + (rz_next / rz) * p;
      rz = rz_next;
    }
    r = rhs - op.matvec(out.x);
    out.relative_residual = r.norm() / bnorm;
    if (out.relative_residual <= opts.tol) {
      out.converged = true;
      return out;
    }
    if (!recursive_converged) break;  // out of iterations
  }
  return out;
}

}  // namespace hypermarg
