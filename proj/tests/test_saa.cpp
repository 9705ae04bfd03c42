#include <gtest/gtest.h>

#include <cmath>

#include "hypermarg/model/test_problems.hpp"
#include "hypermarg/saa/saa.hpp"

using namespace hypermarg;

namespace {

// A(theta) rotates the plane, Q = q I, so Psi = (q + r) I is constant while the
// misfit |A(theta) mu - b|^2 / (q + r) still depends on theta.
Mat rotation(double t, bool derivative) {
  Mat a(2, 2);
  if (derivative) {
    a << -std::sin(t), -std::cos(t), std::cos(t), -std::sin(t);
  } else {
    a << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
  }
  return a;
}

ProblemSpec rotation_problem(const Vec& b, double prior_mean, double prior_var, double q, double r) {
  ProblemSpec p;
  p.name = "rotation";
  p.n = p.m = 2;
  p.n_psi = 0;
  p.n_y = 1;
  p.forward_builder = [](const Vec& t) { return LinearMap::from_dense(rotation(t[0], false)); };
  p.prior_cov_builder = [q](const Vec&) { return SymOp::scaled_identity(2, q); };
  p.noise_builder = [r](const Vec&) { return Vec::Constant(2, r); };
  p.derivative_builder = [](const Vec& t, Index) -> std::optional<PsiDerivativeParts> {
    PsiDerivativeParts d;
    d.forward = LinearMap::from_dense(rotation(t[0], true));
    return d;
  };
  p.prior_mean = Vec{{1.0, 0.0}};
  p.data = b;
  p.hyperprior = HyperPrior({HyperPrior::gaussian(prior_mean, prior_var)});
  p.box = Box::uniform(1, -1.5, 1.5);
  return p;
}

ProblemSpec tomo() {
  TestProblemOptions o;
  o.kind = "tomo";
  o.size = 6;
  o.sources = 5;
  o.receivers = 6;
  o.seed = 2;
  return make_test_problem(o);
}

}  // namespace

TEST(Saa, ConstantPsiReducesToPriorPlusMisfit) {
  // b = beta (cos phi, sin phi): F = (theta - m0)^2 / (2v) - beta cos(theta - phi) / s + const,
  // stationary where (theta - m0) / v + beta sin(theta - phi) / s = 0.
  const double beta = 1.3, phi = 0.6, m0 = -0.2, v = 0.5, s = 0.8;
  const ProblemSpec p = rotation_problem(Vec{{beta * std::cos(phi), beta * std::sin(phi)}}, m0, v, 0.3, s - 0.3);
  auto stationarity = [&](double t) { return (t - m0) / v + beta * std::sin(t - phi) / s; };
  double lo = -1.5, hi = 1.5;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (stationarity(mid) > 0.0 ? hi : lo) = mid;
  }
  SaaConfig cfg;
  cfg.n_probes = 4;
  cfg.lanczos_steps = 1;
  cfg.max_iter = 500;
  cfg.step_tol = 1e-12;
  cfg.inner_scaling = InnerScaling::none;
  const OptimizeResult r = saa_optimize(p, Vec{{-1.4}}, cfg);
  EXPECT_NEAR(r.theta_hat[0], 0.5 * (lo + hi), 1e-6);
}

TEST(Saa, DeterministicGivenSeed) {
  const ProblemSpec p = tomo();
  SaaConfig cfg;
  cfg.n_probes = 10;
  cfg.lanczos_steps = 15;
  cfg.max_iter = 5;
  cfg.seed = 3;
  const Vec theta0{{1e-2, 1.0, 0.5}};
  const OptimizeResult a = saa_optimize(p, theta0, cfg);
  const OptimizeResult b = saa_optimize(p, theta0, cfg);
  ASSERT_EQ(a.metrics.rows.size(), b.metrics.rows.size());
  for (std::size_t i = 0; i < a.metrics.rows.size(); ++i) EXPECT_EQ(a.metrics.rows[i].theta, b.metrics.rows[i].theta);
  EXPECT_EQ(a.theta_hat, b.theta_hat);
}

TEST(Saa, NeverWorseAndLedgerExact) {
  const ProblemSpec p = tomo();
  for (GradientOption g : {GradientOption::analytic, GradientOption::finite_difference}) {
    SaaConfig cfg;
    cfg.n_probes = 8;
    cfg.lanczos_steps = 12;
    cfg.max_iter = 6;
    cfg.gradient = g;
    cfg.precond_rank = 5;
    const Vec theta0{{1e-2, 1.0, 0.5}};
    const OptimizeResult r = saa_optimize(p, theta0, cfg);
    EXPECT_LE(r.objective_trace.back(), r.objective_trace.front());
    EXPECT_EQ(r.metrics.summary.total_matvecs_A, r.metrics.ledger_delta.a);
    EXPECT_EQ(r.metrics.summary.total_matvecs_Q, r.metrics.ledger_delta.q);
    EXPECT_EQ(r.metrics.summary.total_pcg_iters, r.metrics.ledger_delta.pcg);
  }
}

TEST(Saa, RejectsBadConfig) {
  const ProblemSpec p = tomo();
  SaaConfig cfg;
  cfg.n_probes = 0;
  EXPECT_THROW(saa_optimize(p, Vec{{1e-2, 1.0, 0.5}}, cfg), InvalidArgument);
  cfg.n_probes = 2;
  EXPECT_THROW(saa_optimize(p, Vec{{1e3, 1.0, 0.5}}, cfg), InvalidArgument);
}
