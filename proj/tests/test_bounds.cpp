#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>

#include "hypermarg/bounds/bounds.hpp"
#include "hypermarg/model/test_problems.hpp"
#include "oracles.hpp"

using namespace hypermarg;
using Big = boost::multiprecision::cpp_bin_float_50;

namespace {

SpectralConstants constants() {
  SpectralConstants c;
  c.alpha = 1.0;
  c.beta = 4.0;
  c.lipschitz = 1.0;
  c.varsigma_F = 12.0;
  c.varsigma_2 = 4.0;
  c.radius = 1.0;
  c.p = 2;
  c.m = 50;
  return c;
}

// Psi(theta) = theta I on [lo, hi].
ProblemSpec scalar_family(double lo, double hi, Index m) {
  ProblemSpec p;
  p.name = "scalar";
  p.n = p.m = m;
  p.n_psi = 1;
  p.forward_builder = [m](const Vec&) { return LinearMap::from_dense(Mat::Zero(m, m)); };
  p.prior_cov_builder = [m](const Vec&) { return SymOp::identity(m); };
  p.noise_builder = [m](const Vec& t) { return Vec::Constant(m, t[0]); };
  p.prior_mean = Vec::Zero(m);
  p.data = Vec::Ones(m);
  p.hyperprior = HyperPrior({HyperPrior::uniform(lo, hi)});
  p.box = Box::uniform(1, lo, hi);
  return p;
}

}  // namespace

TEST(Bounds, CoveringNumber) {
  EXPECT_EQ(covering_number_bound(1.0, 1.0, 3), 27u);
  EXPECT_EQ(covering_number_bound(2.0, 1.0, 1), 6u);
  EXPECT_EQ(covering_number_bound(1.0, 1.5, 4), 1u);
  EXPECT_THROW(covering_number_bound(0.0, 1.0, 1), InvalidArgument);
  EXPECT_THROW(covering_number_bound(1.0, -1.0, 1), InvalidArgument);
  EXPECT_THROW(covering_number_bound(1.0, 1.0, 0), InvalidArgument);
}

TEST(Bounds, LanczosStepsWorkedExampleAndMonotone) {
  EXPECT_EQ(lanczos_steps_bound(1.0, 10, 1.0), 2);
  // high-precision check of the argument
  const Big s = boost::multiprecision::sqrt(Big(2));
  const Big k = s / 4 * boost::multiprecision::log(Big(40) * (s + 1) * boost::multiprecision::log(Big(2)));
  EXPECT_NEAR(static_cast<double>(k), 1.4869, 1e-3);
  Index prev = 0;
  for (double eps = 2.0; eps > 1e-6; eps /= 2.0) {
    const Index kk = lanczos_steps_bound(50.0, 100, eps);
    EXPECT_GE(kk, prev);
    prev = kk;
  }
  EXPECT_THROW(lanczos_steps_bound(0.5, 10, 1.0), InvalidArgument);
  EXPECT_GE(lanczos_steps_bound_uniform(10.0, 10, 1.0), lanczos_steps_bound(10.0, 10, 1.0));
}

TEST(Bounds, LanczosStepsControlHutchinsonGap) {
  const double eps = 0.5;
  for (unsigned seed = 0; seed < 20; ++seed) {
    const int m = 30;
    const double cond = 2.0 + 4.9 * seed;
    const Mat a = oracle::random_spd(m, cond, 100 + seed);
    const Index k = lanczos_steps_bound(cond, m, eps);
    const ProbeSet w = rademacher_probes(m, 10, seed);
    const Mat lg = oracle::matfun(a, [](double x) { return std::log(x); });
    double hutch = 0.0, slq = 0.0;
    const SymOp op = SymOp::from_dense(a);
    for (Index i = 0; i < w.count(); ++i) {
      hutch += w.column(i).dot(lg * w.column(i));
      slq += lanczos_quadform_log(op, w.column(i), std::min<Index>(k, m));
    }
    EXPECT_LE(std::abs(hutch - slq) / 10.0, eps / 2.0) << seed;
  }
}

TEST(Bounds, SlqSamplesStructure) {
  SpectralConstants c = constants();
  c.lipschitz = 0.0;  // eta infinite, gamma = 1
  const SlqSampleBound base = slq_samples_detail(0.5, 0.1, c);
  EXPECT_EQ(base.gamma, 1.0);
  EXPECT_FALSE(base.audited_norms);
  // doubling ln(2/delta): delta -> delta^2 / 2
  const double d2 = 0.1 * 0.1 / 2.0;
  const Index doubled = slq_samples_bound(0.5, d2, c);
  EXPECT_NEAR(static_cast<double>(doubled) / static_cast<double>(base.samples), 2.0, 0.01);
  // halving eps scales the eps^-2 term by 4 and the eps^-1 term by 2
  EXPECT_GE(slq_samples_bound(0.25, 0.1, c), 2 * base.samples - 2);
  SpectralConstants lead = c;
  lead.varsigma_2 = 1e-9;
  EXPECT_GE(slq_samples_bound(0.25, 0.1, lead), 4 * slq_samples_bound(0.5, 0.1, lead) - 4);
  EXPECT_THROW(slq_samples_bound(0.5, 1.0, c), InvalidArgument);
  EXPECT_THROW(slq_samples_bound(0.5, 0.0, c), InvalidArgument);
}

TEST(Bounds, SlqSamplesHighPrecision) {
  const SpectralConstants c = constants();
  const double eps = 0.5, delta = 0.1;
  const SlqSampleBound b = slq_samples_detail(eps, delta, c);
  using boost::multiprecision::ceil;
  using boost::multiprecision::log;
  using boost::multiprecision::pow;
  const Big E(eps), D(delta), alpha(c.alpha);
  const Big eta = alpha * E / (Big(5) * c.m * c.lipschitz);
  Big gamma = pow(Big(3) * c.radius / eta, c.p);
  if (gamma < 1) gamma = 1;
  const Big sf = alpha * c.varsigma_F, s2 = alpha * c.varsigma_2;
  const Big n = 32 * (Big(25) / 4 / (E * E) * sf * sf + Big(5) / 2 / E * s2) * log(2 * gamma / D);
  EXPECT_EQ(b.samples, static_cast<Index>(ceil(n)));
  EXPECT_NEAR(b.eta, static_cast<double>(eta), 1e-15);
}

TEST(Bounds, ScheduleHighPrecisionAndMonotone) {
  const SpectralConstants c = constants();
  const double eps0 = 1.0, rho = 0.8, delta0 = 0.01;
  EXPECT_GT(m3c_sample_schedule(eps0, rho, delta0, c, 5), m3c_sample_schedule(eps0, rho, delta0, c, 0));
  Index prev = 0;
  for (Index t = 0; t < 12; ++t) {
    const Index n = m3c_sample_schedule(eps0, rho, delta0, c, t);
    EXPECT_GE(n, prev);
    prev = n;
  }
  using boost::multiprecision::ceil;
  using boost::multiprecision::log;
  using boost::multiprecision::pow;
  const Index t = 3;
  const Big et = Big(eps0) * pow(Big(rho), t), dt = Big(delta0) * pow(Big(rho), t);
  Big gt = pow(Big(12) * c.radius * c.m * c.lipschitz / (et * c.alpha), c.p);
  if (gt < 1) gt = 1;
  const Big n = 16 * (2 * Big(c.varsigma_F) * c.varsigma_F + et * c.varsigma_2) / (et * et) * log(2 * gt / dt);
  EXPECT_EQ(m3c_sample_schedule(eps0, rho, delta0, c, t), static_cast<Index>(ceil(n)));
  EXPECT_THROW(m3c_sample_schedule(eps0, 1.0, delta0, c, 0), InvalidArgument);
}

TEST(Bounds, ScheduleVarsigmaFDominant) {
  SpectralConstants c = constants();
  c.varsigma_F = 100.0;
  c.varsigma_2 = 1.0;
  const ScheduleBound b = m3c_sample_detail(0.5, 0.8, 0.01, c, 2);
  const double approx = 32.0 * c.varsigma_F * c.varsigma_F / (b.eps_t * b.eps_t) * std::log(2.0 * b.gamma_t / b.delta_t);
  EXPECT_NEAR(static_cast<double>(b.samples) / approx, 1.0, 0.1);
}

TEST(Bounds, ScalarFamilyConstants) {
  const ProblemSpec p = scalar_family(1.0, 2.0, 5);
  const SpectralConstants c = estimate_spectral_constants(p, {.samples = 10, .seed = 1});
  EXPECT_NEAR(c.alpha, 1.0, 1e-12);
  EXPECT_NEAR(c.beta, 2.0, 1e-12);
  EXPECT_NEAR(c.lipschitz, 1.0, 1e-9);
  EXPECT_NEAR(c.radius, 0.5, 1e-15);
  EXPECT_LE(c.varsigma_2, c.varsigma_F);
  EXPECT_LE(c.varsigma_F, std::sqrt(5.0) * c.varsigma_2 + 1e-12);
}

TEST(Bounds, FixedPsiHasZeroLipschitz) {
  ProblemSpec p = scalar_family(1.0, 2.0, 4);
  p.noise_builder = [](const Vec&) { return Vec::Constant(4, 1.5); };
  EXPECT_EQ(estimate_spectral_constants(p, {.samples = 6}).lipschitz, 0.0);
}

TEST(Bounds, TomoAlphaBelowSampledEigenvalues) {
  TestProblemOptions o;
  o.kind = "tomo";
  o.size = 8;
  o.box = Box(Vec{{1e-4, 0.1, 0.1}}, Vec{{1e-1, 1.0, 0.5}});
  const ProblemSpec p = make_test_problem(o);
  const SpectralConstants c = estimate_spectral_constants(p, {.samples = 8, .seed = 2});
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int s = 0; s < 10; ++s) {
    Vec t(3);
    for (Index j = 0; j < 3; ++j) t[j] = p.box.lower()[j] + u(gen) * p.box.width()[j];
    // the lower box corner minimizes every eigenvalue of this family
    EXPECT_LE(c.alpha, dense_eigenvalues(psi_dense(p, t)).minCoeff() + 1e-12);
  }
  const SpectralConstants lz = estimate_spectral_constants(p, {.samples = 8, .seed = 2, .dense_limit = 10});
  EXPECT_GT(lz.alpha, 0.0);
  EXPECT_GE(lz.alpha, c.alpha - 1e-9);
}

TEST(Bounds, SurrogateLipschitzDiagnostic) {
  TestProblemOptions o;
  o.kind = "tomo";
  o.size = 6;
  o.sources = 5;
  o.receivers = 6;
  o.box = Box(Vec{{1e-3, 0.1, 0.1}}, Vec{{1e-1, 1.0, 0.5}});
  const ProblemSpec p = make_test_problem(o);
  const SpectralConstants c = estimate_spectral_constants(p, {.samples = 30, .seed = 5});
  const SurrogateLipschitzCheck chk = surrogate_lipschitz_check(p, p.box.center(), c, 20, 6);
  EXPECT_GT(chk.sampled, 0.0);
  EXPECT_LE(chk.sampled, chk.theoretical * 1.05);
}

TEST(Bounds, AuditedLogNorms) {
  const ProblemSpec p = scalar_family(1.0, 3.0, 4);
  const SpectralConstants c = estimate_spectral_constants(p, {.samples = 4, .audit_log_norms = true});
  ASSERT_TRUE(c.offdiag_log_fro);
  EXPECT_NEAR(*c.offdiag_log_fro, 0.0, 1e-12);  // diagonal family
  EXPECT_TRUE(slq_samples_detail(0.5, 0.1, c).audited_norms);
}
