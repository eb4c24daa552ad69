#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"

using namespace qbatt;

namespace {

constexpr double pi = std::numbers::pi;

Distribution thermal(int d, int n, double beta) {
  return thermal_distribution(build_spectrum(d, n), Beta::from_value(beta));
}

// Energy after the shift by m, written out level by level (1-based).
double shift_energy_direct(const Distribution& p, std::size_t m) {
  const std::size_t d = p.size();
  const auto& lv = p.spectrum().level_table();
  double e = 0.0;
  for (std::size_t n = 1; n <= d - m; ++n) e += p[n - 1] * lv[n + m - 1];
  for (std::size_t n = d - m + 1; n <= d; ++n) e += p[n - 1] * lv[d - n];
  return e;
}

}  // namespace

TEST(Phase1, Examples) {
  const auto spec = build_spectrum(3, 1);
  const Distribution p(spec, {0.5, 0.3, 0.2});
  TraceState t(p);
  t.apply_permutation(phase1_permutation(3, 1));
  EXPECT_EQ(t.weights(), (std::vector<double>{0.2, 0.5, 0.3}));

  EXPECT_EQ(phase1_permutation(4, 0), (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_EQ(phase1_permutation(4, 3), (std::vector<std::size_t>{3, 2, 1, 0}));
  EXPECT_THROW(phase1_permutation(4, 4), ValidationError);
}

TEST(Phase1, ShiftEnergy) {
  const auto p = thermal(3, 1, 1.0);
  EXPECT_NEAR(energy_after_shift(p, 1), 1.154697, 1e-6);
  EXPECT_NEAR(energy_after_shift(p, 0), mean_energy(p), 1e-15);
  const auto pure = thermal_distribution(build_spectrum(6, 1), Beta::zero_temperature());
  for (std::size_t m = 0; m < 6; ++m) EXPECT_EQ(energy_after_shift(pure, m), static_cast<double>(m));
  for (auto [d, n] : {std::pair{5, 1}, std::pair{2, 4}, std::pair{3, 2}}) {
    const auto q = thermal(d, n, 0.8);
    for (std::size_t m = 0; m < q.size(); ++m) {
      EXPECT_NEAR(energy_after_shift(q, m), shift_energy_direct(q, m), 1e-13);
      if (m > 0) {
        EXPECT_GE(energy_after_shift(q, m), energy_after_shift(q, m - 1) - 1e-12);
      }
    }
  }
}

TEST(SelectShift, Examples) {
  const auto pure = thermal_distribution(build_spectrum(5, 1), Beta::zero_temperature());
  const auto a = select_m_tilde(pure, 2.4);
  EXPECT_EQ(a.m_tilde, 2u);
  EXPECT_NEAR(a.residual, 0.4, 1e-12);
  const auto b = select_m_tilde(thermal(5, 1, 1.0), 0.0);
  EXPECT_EQ(b.m_tilde, 0u);
  EXPECT_EQ(b.residual, 0.0);
}

TEST(SelectShift, MatchesScan) {
  const auto p = thermal(5, 1, 1.0);
  const double target = mean_energy(p) + 1.3;
  std::size_t expect = 0;
  for (std::size_t m = 0; m < p.size(); ++m)
    if (shift_energy_direct(p, m) <= target) expect = m;
  const auto plan = select_m_tilde(p, 1.3);
  EXPECT_EQ(plan.m_tilde, expect);
  EXPECT_NEAR(plan.residual, target - shift_energy_direct(p, expect), 1e-12);
  const double gap = shift_energy_direct(p, expect + 1) - shift_energy_direct(p, expect);
  EXPECT_NEAR(std::pow(std::sin(plan.theta), 2), plan.residual / gap, 1e-12);
}

TEST(Chain, ZeroAngleLeavesWeights) {
  const auto p = thermal(5, 1, 1.0);
  TraceState t(p);
  phase2_chain(t, 1, 0.0);
  EXPECT_EQ(t.weights(), p.weights());
}

TEST(Chain, HalfPiEqualsNextShift) {
  for (auto [d, n] : {std::pair{5, 1}, std::pair{2, 4}, std::pair{2, 6}, std::pair{8, 2}, std::pair{64, 1}}) {
    const auto p = thermal(d, n, 0.7);
    for (std::size_t m = 0; m + 1 < p.size(); m += std::max<std::size_t>(1, p.size() / 7)) {
      TraceState t(p);
      if (m > 0) t.apply_permutation(phase1_permutation(p.size(), m));
      phase2_chain(t, m, pi / 2);
      TraceState ref(p);
      ref.apply_permutation(phase1_permutation(p.size(), m + 1));
      for (std::size_t s = 0; s < p.size(); ++s) EXPECT_NEAR(t.weights()[s], ref.weights()[s], 1e-12);
    }
  }
}

TEST(Chain, SequentialQuarterTurn) {
  const auto spec = build_spectrum(3, 1);
  const double p1 = 0.5, p2 = 0.3, p3 = 0.2;
  TraceState t(Distribution(spec, {p1, p2, p3}));
  phase2_chain(t, 0, pi / 4);
  // First G(2,3): level 3 gets (p2+p3)/2, level 2 gets (p2+p3)/2; then G(1,2).
  const double mid = 0.5 * (p2 + p3);
  EXPECT_NEAR(t.weights()[2], mid, 1e-15);
  EXPECT_NEAR(t.weights()[1], 0.5 * (p1 + mid), 1e-15);
  EXPECT_NEAR(t.weights()[0], 0.5 * (p1 + mid), 1e-15);
}

TEST(Chain, ModelMatchesTrace) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> uni(0.0, pi / 2);
  for (auto [d, n] : {std::pair{5, 1}, std::pair{2, 4}, std::pair{3, 2}}) {
    const auto p = thermal(d, n, 0.9);
    for (std::size_t m = 0; m + 1 < p.size(); ++m) {
      const ChainModel model(p, m);
      std::vector<double> angles(model.rotations());
      for (auto& a : angles) a = uni(rng);
      TraceState t(p);
      if (m > 0) t.apply_permutation(phase1_permutation(p.size(), m));
      phase2_chain(t, m, angles);
      const auto ev = model.evaluate(angles);
      const auto st = tpm_stats(p, t);
      EXPECT_NEAR(ev.energy, t.mean_eps(), 1e-12);
      EXPECT_NEAR(ev.mean_work, st.mean_work, 1e-12);
      EXPECT_NEAR(ev.fluct_sq, st.fluct_sq, 1e-11);
      EXPECT_NEAR(ev.variance, variance(t.dist()), 1e-11);
      const auto q = model.final_weights(angles);
      for (std::size_t s = 0; s < p.size(); ++s) EXPECT_NEAR(q[s], t.weights()[s], 1e-13);
    }
  }
}

TEST(SolveTheta, Endpoints) {
  const auto p = thermal(5, 1, 1.0);
  const double e1 = energy_after_shift(p, 1);
  const double e2 = energy_after_shift(p, 2);
  EXPECT_NEAR(solve_theta(p, 1, e1), 0.0, 1e-9);
  EXPECT_NEAR(solve_theta(p, 1, e2), pi / 2, 1e-9);
  const double th = solve_theta(p, 1, 0.5 * (e1 + e2));
  const ChainModel model(p, 1);
  EXPECT_NEAR(model.evaluate(std::vector<double>(model.rotations(), th)).energy, 0.5 * (e1 + e2), 1e-10);
}

TEST(SolveTheta, PureStateQuarterTurn) {
  const auto pure = thermal_distribution(build_spectrum(5, 1), Beta::zero_temperature());
  EXPECT_NEAR(solve_theta(pure, 1, 1.5), pi / 4, 1e-9);
}

TEST(ClosedForm, PureIntegerChargeVanishes) {
  const auto pure = thermal_distribution(build_spectrum(5, 1), Beta::zero_temperature());
  for (int k = 0; k < 5; ++k) {
    const auto plan = select_m_tilde(pure, k);
    EXPECT_NEAR(closed_form_fluct(pure, plan.m_tilde, plan.theta, k), 0.0, 1e-20);
  }
}

TEST(ClosedForm, ZeroAngleIsTwoGroups) {
  const auto p = thermal(5, 1, 1.0);
  const std::size_t m = 2;
  const double de = energy_after_shift(p, m) - mean_energy(p);
  double ref = 0.0;
  for (std::size_t n = 1; n <= 5 - m; ++n) ref += p[n - 1] * std::pow(double(m) - de, 2);
  for (std::size_t n = 5 - m + 1; n <= 5; ++n)
    ref += p[n - 1] * std::pow(double(5 - n) - double(n - 1) - de, 2);
  EXPECT_NEAR(closed_form_fluct(p, m, 0.0, de), ref, 1e-13);
}

TEST(ClosedForm, AgreesWithIdealMapEnergy) {
  const auto p = thermal(5, 1, 1.0);
  const auto plan = select_m_tilde(p, 1.3);
  const Distribution q(p.spectrum_ptr(), ideal_phase2_weights(p, plan.m_tilde, plan.theta));
  EXPECT_NEAR(mean_energy(q) - mean_energy(p), 1.3, 1e-12);
  const double cf = closed_form_fluct(p, plan.m_tilde, plan.theta, 1.3);
  const auto run = charge_min_fluct(build_spectrum(5, 1), Beta::from_value(1.0), 1.3);
  EXPECT_GT(cf, 0.0);
  EXPECT_NEAR(*run.report.fluct_sq_eq32, cf, 1e-15);
  EXPECT_TRUE(std::isfinite(*run.report.fluct_sq));
}

TEST(MinFluct, ZeroCharge) {
  const auto r = charge_min_fluct(build_spectrum(5, 1), Beta::from_value(1.0), 0.0).report;
  EXPECT_EQ(*r.fluct_sq, 0.0);
  EXPECT_EQ(*r.n_steps, 0);
}

TEST(MinFluct, LowTemperatureDips) {
  const auto spec = build_spectrum(5, 1);
  const auto beta = Beta::from_temperature(0.2);
  auto w = [&](double de) { return *charge_min_fluct(spec, beta, de).report.fluct_sq; };
  EXPECT_LT(w(1.0), 0.01);
  EXPECT_LT(w(1.0), w(0.5));
  EXPECT_LT(w(1.0), w(1.5));
  EXPECT_LT(w(2.0), w(1.5));
}

TEST(MinFluct, MeanWorkAndNotAboveCommonAngle) {
  for (auto [d, n] : {std::pair{5, 1}, std::pair{2, 4}})
    for (double t : {0.3, 1.0}) {
      const auto spec = build_spectrum(d, n);
      const auto beta = Beta::from_temperature(t);
      const double top = charge_range(spec, beta).hi;
      for (double f = 0.05; f < 1.0; f += 0.15) {
        const auto r = charge_min_fluct(spec, beta, f * top).report;
        EXPECT_NEAR(*r.mean_work, r.delta_eps, 1e-10);
        if (auto common = r.find_extra("fluct_sq_common_theta")) {
          EXPECT_LE(*r.fluct_sq, *common + 1e-12);
        }
      }
    }
}

TEST(MinFluct, FourQubitsNearFrozenOracle) {
  // Givens-oracle optimum at T=0.2, delta_eps=2 (4 restarts, 1e5 evaluations each).
  constexpr double oracle_w = 0.00135586;
  const auto r = charge_min_fluct(build_spectrum(2, 4), Beta::from_temperature(0.2), 2.0).report;
  EXPECT_LE(*r.fluct_sq, oracle_w * 1.01);
}

TEST(MinFluct, SeedDeterminism) {
  const auto spec = build_spectrum(2, 3);
  const auto beta = Beta::from_value(1.0);
  FluctOptions o;
  o.seed = 17;
  const auto a = charge_min_fluct(spec, beta, 0.8, o).report;
  const auto b = charge_min_fluct(spec, beta, 0.8, o).report;
  EXPECT_EQ(*a.fluct_sq, *b.fluct_sq);
  EXPECT_EQ(a.variance, b.variance);
}

TEST(MinFluct, IdealEvaluation) {
  const auto spec = build_spectrum(5, 1);
  const auto r = charge_min_fluct_ideal(spec, Beta::from_value(1.0), 1.3);
  EXPECT_EQ(r.protocol, "fluctuation-ideal");
  EXPECT_NEAR(*r.mean_work, 1.3, 1e-12);
  EXPECT_EQ(*r.fluct_sq, *r.fluct_sq_eq32);
}
