#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "hypermarg/core/dense.hpp"
#include "hypermarg/core/lanczos.hpp"
#include "hypermarg/core/nystrom.hpp"
#include "hypermarg/core/parallel.hpp"
#include "hypermarg/core/pcg.hpp"
#include "hypermarg/core/probes.hpp"
#include "hypermarg/core/rng.hpp"
#include "hypermarg/core/sym_op.hpp"
#include "hypermarg/core/trace.hpp"
#include "oracles.hpp"

using namespace hypermarg;

TEST(SymOp, LinearSymmetricAndCounted) {
  const Mat a = oracle::random_spd(15, 50.0, 1);
  const SymOp op = SymOp::from_dense(a);
  const Vec u = oracle::random_vec(15, 2), v = oracle::random_vec(15, 3);
  const double s = 1.7, t = -0.3;
  const Vec lhs = op.matvec(s * u + t * v);
  const Vec rhs = s * op.matvec(u) + t * op.matvec(v);
  EXPECT_LE((lhs - rhs).norm(), 1e-12 * lhs.norm());
  const double uv = u.dot(op.matvec(v)), vu = v.dot(op.matvec(u));
  EXPECT_LE(std::abs(uv - vu), 1e-10 * std::abs(uv));
  const auto before = op.matvec_count();
  op.matvec(u);
  EXPECT_EQ(op.matvec_count(), before + 1);
  EXPECT_THROW(op.matvec(Vec::Ones(3)), InvalidArgument);
}

TEST(SymOp, ToDenseRefusesAboveLimit) {
  const SymOp op = SymOp::identity(10);
  EXPECT_THROW(op.to_dense(5), InvalidArgument);
  EXPECT_TRUE(op.to_dense().isIdentity());
}

TEST(SymOp, SharedCounterAcrossCopies) {
  auto counter = make_counter();
  const SymOp a = SymOp::identity(3, counter);
  const SymOp b = SymOp::scaled_identity(3, 2.0, counter);
  a.matvec(Vec::Ones(3));
  b.matvec(Vec::Ones(3));
  EXPECT_EQ(counter->load(), 2);
}

TEST(Rng, FrozenDraws) {
  const CounterRng rng(42, 0);
  // Frozen: SplitMix64 finalizer arithmetic, platform independent.
  EXPECT_EQ(CounterRng::mix(0), 0ULL);
  EXPECT_EQ(CounterRng::mix(0x9E3779B97F4A7C15ULL), 0xE220A8397B1DCDAFULL);  // first SplitMix64 output of seed 0
  EXPECT_EQ(rng.bits(0), CounterRng(42, 0).bits(0));
  EXPECT_NE(rng.bits(0), CounterRng(42, 1).bits(0));
  EXPECT_NE(rng.bits(0), CounterRng(43, 0).bits(0));
  for (std::uint64_t c = 0; c < 1000; ++c) {
    const double u = rng.uniform(c);
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(Rng, NormalMoments) {
  const CounterRng rng(9, 4);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal(i);
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 5.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 5.0 * std::sqrt(2.0 / n));
}

TEST(Probes, EntriesAreSigns) {
  const ProbeSet p = rademacher_probes(4, 2, 7);
  ASSERT_EQ(p.W.rows(), 4);
  ASSERT_EQ(p.W.cols(), 2);
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 2; ++j) EXPECT_TRUE(p.W(i, j) == 1.0 || p.W(i, j) == -1.0);
}

TEST(Probes, Deterministic) {
  EXPECT_EQ(rademacher_probes(4, 2, 7).W, rademacher_probes(4, 2, 7).W);
  EXPECT_NE(rademacher_probes(64, 2, 7).W, rademacher_probes(64, 2, 8).W);
  // prefix property
  EXPECT_EQ(rademacher_probes(30, 5, 3).W, rademacher_probes(30, 9, 3).W.leftCols(5));
}

TEST(Probes, RejectsEmpty) {
  EXPECT_THROW(rademacher_probes(0, 2, 1), InvalidArgument);
  EXPECT_THROW(rademacher_probes(3, 0, 1), InvalidArgument);
}

TEST(Probes, ColumnMeansConcentrate) {
  const ProbeSet p = rademacher_probes(1000, 200, 1);
  int ok = 0;
  for (Index j = 0; j < 200; ++j) ok += std::abs(p.W.col(j).mean()) <= 4.0 / std::sqrt(1000.0);
  EXPECT_GE(ok, 190);
}

TEST(Lanczos, IdentityBreaksDownAtFirstStep) {
  const SymOp op = SymOp::identity(6);
  const auto d = lanczos_decompose(op, oracle::random_vec(6, 5), 3);
  ASSERT_TRUE(d.breakdown_step.has_value());
  EXPECT_EQ(*d.breakdown_step, 1);
  EXPECT_EQ(d.steps(), 1);
  EXPECT_NEAR(d.alpha[0], 1.0, 1e-15);
  EXPECT_EQ(op.matvec_count(), 1);
}

TEST(Lanczos, DiagonalSpectrumRecovered) {
  const SymOp op = SymOp::diagonal((Vec(4) << 1, 2, 3, 4).finished());
  const auto d = lanczos_decompose(op, Vec::Constant(4, 0.5), 4);
  EXPECT_EQ(op.matvec_count(), 4);
  EXPECT_FALSE(d.breakdown_step.has_value());
  Eigen::SelfAdjointEigenSolver<Mat> es(d.tridiagonal());
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(es.eigenvalues()[i], i + 1.0, 1e-10);
}

TEST(Lanczos, DecompositionInvariants) {
  const Mat a = oracle::random_spd(40, 100.0, 11);
  const SymOp op = SymOp::from_dense(a);
  const auto d = lanczos_decompose(op, oracle::random_vec(40, 12), 25);
  ASSERT_EQ(d.steps(), 25);
  const Mat& v = d.basis;
  EXPECT_LE((v.transpose() * v - Mat::Identity(25, 25)).norm(), 1e-8);
  const Mat t = d.tridiagonal();
  EXPECT_LE((v.transpose() * a * v - t).norm(), 1e-8 * t.norm());
  for (Index i = 0; i < d.beta.size(); ++i) EXPECT_GT(d.beta[i], 0.0);
}

TEST(Lanczos, ReorthogonalizationKeepsBasisOrthonormal) {
  // eigenvalue spread 1e8
  const Mat a = oracle::random_spd(50, 1e8, 21);
  const SymOp op = SymOp::from_dense(a);
  const Vec v0 = oracle::random_vec(50, 22);
  const auto on = lanczos_decompose(op, v0, 50, true);
  const auto off = lanczos_decompose(op, v0, 50, false);
  const Index k_on = on.steps();
  const Index k_off = off.steps();
  const double loss_on = (on.basis.transpose() * on.basis - Mat::Identity(k_on, k_on)).norm();
  const double loss_off = (off.basis.transpose() * off.basis - Mat::Identity(k_off, k_off)).norm();
  EXPECT_LE(loss_on, 1e-8);
  EXPECT_GT(loss_off, loss_on);
}

TEST(Lanczos, Errors) {
  const SymOp op = SymOp::identity(4);
  EXPECT_THROW(lanczos_decompose(op, Vec::Zero(4), 2), InvalidArgument);
  EXPECT_THROW(lanczos_decompose(op, Vec::Ones(4), 5), InvalidArgument);
}

TEST(LanczosQuadformLog, Identity) {
  const SymOp op = SymOp::identity(9);
  EXPECT_EQ(lanczos_quadform_log(op, oracle::random_vec(9, 1), 4), 0.0);
}

TEST(LanczosQuadformLog, ScaledIdentity) {
  const SymOp op = SymOp::scaled_identity(8, 2.0);
  EXPECT_NEAR(lanczos_quadform_log(op, Vec::Ones(8), 3), 8.0 * std::log(2.0), 1e-12);
  EXPECT_NEAR(8.0 * std::log(2.0), 5.5452, 1e-4);
}

TEST(LanczosQuadformLog, MatchesDenseAtFullSteps) {
  for (unsigned seed = 0; seed < 5; ++seed) {
    const int m = 10 + 6 * static_cast<int>(seed);
    const Mat a = oracle::random_spd(m, 80.0, 100 + seed);
    const Vec w = oracle::random_vec(m, 200 + seed);
    const double ref = w.dot(oracle::matfun(a, [](double x) { return std::log(x); }) * w);
    EXPECT_NEAR(lanczos_quadform_log(SymOp::from_dense(a), w, m), ref, 1e-8 * std::max(1.0, std::abs(ref)));
  }
}

TEST(LanczosQuadformLog, IndefiniteNamesRitzValue) {
  const SymOp op = SymOp::diagonal((Vec(3) << 1.0, -2.0, 3.0).finished());
  try {
    lanczos_quadform_log(op, Vec::Ones(3), 3);
    FAIL() << "expected NumericalFailure";
  } catch (const NumericalFailure& e) {
    EXPECT_NE(std::string(e.what()).find("Ritz value -2"), std::string::npos) << e.what();
  }
}

TEST(LanczosInvSqrt, IdentityAndScaled) {
  const Vec w = oracle::random_vec(7, 3);
  EXPECT_LE((lanczos_inv_sqrt_apply(SymOp::identity(7), w, 3) - w).norm(), 1e-14 * w.norm());
  EXPECT_LE((lanczos_inv_sqrt_apply(SymOp::scaled_identity(7, 4.0), w, 3) - w / 2).norm(), 1e-12 * w.norm());
}

TEST(LanczosInvSqrt, MatchesDense) {
  const Mat a = oracle::random_spd(20, 30.0, 77);
  const Vec w = oracle::random_vec(20, 78);
  const Vec ref = oracle::matfun(a, [](double x) { return 1.0 / std::sqrt(x); }) * w;
  EXPECT_LE(oracle::rel_err(lanczos_inv_sqrt_apply(SymOp::from_dense(a), w, 20), ref), 1e-8);
}

TEST(Pcg, IdentityOneIteration) {
  const Vec b = oracle::random_vec(12, 4);
  const auto res = pcg_solve(SymOp::identity(12), b);
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.iterations, 1);
  EXPECT_LE((res.x - b).norm(), 1e-14 * b.norm());
}

TEST(Pcg, Diagonal) {
  Vec d(10);
  for (int i = 0; i < 10; ++i) d[i] = i + 1;
  PcgOptions o;
  o.tol = 1e-10;
  const auto res = pcg_solve(SymOp::diagonal(d), Vec::Ones(10), nullptr, o);
  EXPECT_TRUE(res.converged);
  for (int i = 0; i < 10; ++i) EXPECT_NEAR(res.x[i], 1.0 / d[i], 1e-9);
}

TEST(Pcg, ZeroRhs) {
  const auto res = pcg_solve(SymOp::identity(3), Vec::Zero(3));
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.iterations, 0);
  EXPECT_TRUE(res.x.isZero());
}

TEST(Pcg, NotConvergedFlag) {
  const Mat a = oracle::random_spd(60, 1e6, 9);
  PcgOptions o;
  o.maxit = 3;
  const auto res = pcg_solve(SymOp::from_dense(a), Vec::Ones(60), nullptr, o);
  EXPECT_FALSE(res.converged);
  EXPECT_EQ(res.iterations, 3);
}

TEST(Pcg, NonFiniteIsNumericalFailure) {
  Vec b = Vec::Ones(3);
  b[1] = std::nan("");
  EXPECT_THROW(pcg_solve(SymOp::identity(3), b), NumericalFailure);
  const SymOp bad(3, [](const Vec& v) -> Vec { return Vec::Constant(v.size(), std::nan("")); });
  EXPECT_THROW(pcg_solve(bad, Vec::Ones(3)), NumericalFailure);
}

TEST(Pcg, EnergyErrorNonincreasing) {
  for (unsigned seed = 0; seed < 4; ++seed) {
    const Mat a = oracle::random_spd(40, 1e3, 300 + seed);
    const Vec b = oracle::random_vec(40, 400 + seed);
    const Vec xs = a.llt().solve(b);
    double prev = std::sqrt(xs.dot(a * xs));
    PcgOptions o;
    o.tol = 1e-12;
    o.observer = [&](Index, const Vec& x) {
      const Vec e = x - xs;
      const double err = std::sqrt(e.dot(a * e));
      EXPECT_LE(err, prev * (1 + 1e-10) + 1e-14);
      prev = err;
    };
    pcg_solve(SymOp::from_dense(a), b, nullptr, o);
  }
}

TEST(Pcg, NystromPreconditionerCutsIterations) {
  const int m = 100;
  std::mt19937_64 gen(5);
  const Mat g = oracle::random_orthogonal(m, gen).leftCols(5);
  const Vec s = (Vec(5) << 1e4, 3e3, 1e3, 300, 100).finished();
  const Mat a = g * s.asDiagonal() * g.transpose() + Mat::Identity(m, m);
  const SymOp op = SymOp::from_dense(a);
  const Vec b = oracle::random_vec(m, 6);
  const auto plain = pcg_solve(op, b);
  const Preconditioner pre = nystrom_preconditioner(op, 1.0, 10, 17);
  const auto fast = pcg_solve(op, b, &pre);
  EXPECT_TRUE(fast.converged);
  EXPECT_LE(fast.iterations, 8);
  EXPECT_GT(plain.iterations, fast.iterations);
}

TEST(Nystrom, ExactShiftGivesScaledInverse) {
  const double mu = 2.5;
  const Preconditioner pre = nystrom_preconditioner(SymOp::scaled_identity(12, mu), mu, 4, 1);
  const Vec v = oracle::random_vec(12, 2);
  EXPECT_LE((pre.apply_inverse(v) - v / mu).norm(), 1e-10 * v.norm());
  EXPECT_EQ(pre.rank(), 0);
}

TEST(Nystrom, RankOneTwoIterations) {
  const Vec u = oracle::random_vec(30, 8);
  const double mu = 0.7;
  const Mat a = u * u.transpose() + mu * Mat::Identity(30, 30);
  const SymOp op = SymOp::from_dense(a);
  const Preconditioner pre = nystrom_preconditioner(op, mu, 3, 4);
  // preconditioned operator has (numerically) at most two distinct eigenvalues
  const Mat pinv = Mat(pre.to_dense()).inverse();
  Vec ev = Eigen::SelfAdjointEigenSolver<Mat>(pinv * a).eigenvalues();
  EXPECT_NEAR(ev.minCoeff(), ev.maxCoeff(), 1e-6 * ev.maxCoeff());
  const auto res = pcg_solve(op, oracle::random_vec(30, 9), &pre);
  EXPECT_TRUE(res.converged);
  EXPECT_LE(res.iterations, 2);
}

TEST(Nystrom, LogdetOfApproximation) {
  const SymOp op = SymOp::diagonal((Vec(4) << 3, 3, 1, 1).finished());
  const Preconditioner pre = nystrom_preconditioner(op, 1.0, 2, 3);
  EXPECT_NEAR(pre.logdet_of_approximation(), 2.0 * std::log(3.0), 1e-10);
  EXPECT_NEAR(pre.logdet_of_approximation(), oracle::logdet_eig(pre.to_dense()), 1e-10);
}

TEST(Nystrom, InverseSpdAndSqrtComposition) {
  const Mat a = oracle::random_spd(25, 40.0, 3) + 0.5 * Mat::Identity(25, 25);
  const Preconditioner pre = nystrom_preconditioner(SymOp::from_dense(a), 0.5, 6, 10);
  for (unsigned s = 0; s < 5; ++s) {
    const Vec v = oracle::random_vec(25, 50 + s);
    EXPECT_GT(v.dot(pre.apply_inverse(v)), 0.0);
    const Vec twice = pre.apply_inverse_sqrt(pre.apply_inverse_sqrt(v));
    EXPECT_LE(oracle::rel_err(twice, pre.apply_inverse(v)), 1e-8);
  }
}

TEST(Nystrom, WhitenedFactorization) {
  Vec d(20);
  for (int i = 0; i < 20; ++i) d[i] = 0.5 + 0.1 * i;
  const Mat g = oracle::random_vec(20, 3) * oracle::random_vec(20, 4).transpose();
  const Mat a = g * g.transpose() + Mat(d.asDiagonal());
  const Preconditioner pre = nystrom_preconditioner(SymOp::from_dense(a), 1.0, 4, 5, d);
  const Vec v = oracle::random_vec(20, 6);
  // G^T G = P^{-1}
  EXPECT_LE(oracle::rel_err(pre.apply_inverse_sqrt_transpose(pre.apply_inverse_sqrt(v)), pre.apply_inverse(v)), 1e-10);
  // rank-one plus whitened shift is captured exactly
  EXPECT_LE(oracle::rel_err(pre.apply_inverse(v), a.llt().solve(v)), 1e-8);
  EXPECT_NEAR(pre.logdet_of_approximation(), oracle::logdet_eig(a), 1e-8);
}

TEST(Nystrom, RejectsNonpositiveShift) {
  EXPECT_THROW(nystrom_preconditioner(SymOp::identity(5), 0.0, 2, 1), InvalidArgument);
  EXPECT_THROW(nystrom_preconditioner(SymOp::identity(5), -1.0, 2, 1), InvalidArgument);
}

TEST(DenseLogdet, Basics) {
  EXPECT_EQ(dense_logdet(Mat::Identity(5, 5)), 0.0);
  EXPECT_NEAR(dense_logdet(Vec::Constant(2, 2.0).asDiagonal().toDenseMatrix()), 2 * std::log(2.0), 1e-15);
  EXPECT_NEAR(2 * std::log(2.0), 1.38629, 1e-5);
  const Mat a = oracle::random_spd(12, 500.0, 31);
  EXPECT_NEAR(dense_logdet(a), oracle::logdet_eig(a), 1e-10);
}

TEST(DenseLogdet, NotPdNamesPivot) {
  Mat a = Mat::Identity(4, 4);
  a(2, 2) = -1.0;
  try {
    dense_logdet(a);
    FAIL();
  } catch (const NumericalFailure& e) {
    EXPECT_NE(std::string(e.what()).find("pivot 2"), std::string::npos) << e.what();
  }
}

TEST(Hutchinson, UnbiasedWithOffDiagonalVariance) {
  const int m = 10;
  const Mat b = oracle::random_symmetric(m, 71);
  const ProbeSet probes = rademacher_probes(m, 100000, 72);
  const auto est = hutchinson_trace(SymOp::from_dense(b), probes);
  double var = 0.0;
  for (double s : est.samples) var += (s - est.mean) * (s - est.mean);
  var /= static_cast<double>(est.samples.size() - 1);
  const double se = std::sqrt(var / est.samples.size());
  EXPECT_LE(std::abs(est.mean - b.trace()), 5 * se);
  const double predicted = 2.0 * oracle::offdiag_fro2(b);
  EXPECT_LE(std::abs(var - predicted), 0.1 * predicted);
}

TEST(Slq, DenseEquivalenceAtFullSteps) {
  for (int m : {5, 17, 40}) {
    const Mat a = oracle::random_spd(m, 60.0, 500 + m);
    const ProbeSet probes = rademacher_probes(m, 6, m);
    const auto est = slq_logdet(SymOp::from_dense(a), probes, m);
    const Mat la = oracle::matfun(a, [](double x) { return std::log(x); });
    double ref = 0.0;
    for (Index i = 0; i < 6; ++i) ref += probes.W.col(i).dot(la * probes.W.col(i));
    ref /= 6;
    EXPECT_NEAR(est.mean, ref, 1e-8 * std::max(1.0, std::abs(ref)));
  }
}

TEST(Parallel, ResultsIndependentOfThreadCount) {
  const Mat a = oracle::random_spd(30, 20.0, 8);
  const ProbeSet probes = rademacher_probes(30, 16, 9);
  set_thread_cap(1);
  const double one = slq_logdet(SymOp::from_dense(a), probes, 10).mean;
  set_thread_cap(4);
  const double four = slq_logdet(SymOp::from_dense(a), probes, 10).mean;
  set_thread_cap(0);
  EXPECT_EQ(one, four);
}

TEST(Parallel, PairwiseSumFixedOrder) {
  std::vector<double> x(1000);
  for (int i = 0; i < 1000; ++i) x[i] = 1.0 / (i + 1);
  EXPECT_EQ(pairwise_sum(x), pairwise_sum(x));
  EXPECT_NEAR(pairwise_sum(x), 7.485470860550345, 1e-13);
}
