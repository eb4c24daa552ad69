#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"

using namespace qbatt;

namespace {

QubitThermal qubit(double beta) { return QubitThermal::at(Beta::from_value(beta)); }

}  // namespace

TEST(Local, QubitPopulations) {
  const auto q = qubit(1.0);
  EXPECT_NEAR(q.p0, 0.731059, 1e-6);
  EXPECT_NEAR(q.p1, 0.268941, 1e-6);
  const auto z = QubitThermal::at(Beta::zero_temperature());
  EXPECT_EQ(z.p0, 1.0);
  EXPECT_EQ(z.p1, 0.0);
}

TEST(Slcp, MaximumVarianceAtHalfFilling) {
  const auto q = qubit(1.0);
  const double de = 4.0 * (0.5 - q.p1);
  const auto r = slcp_charge(4, Beta::from_value(1.0), de);
  EXPECT_NEAR(r.variance, 1.0, 1e-12);
  EXPECT_NEAR(*r.mean_work, de, 1e-12);
}

TEST(Slcp, ZeroCharge) {
  const auto q = qubit(1.0);
  const auto r = slcp_charge(4, Beta::from_value(1.0), 0.0);
  EXPECT_NEAR(r.variance, 4.0 * q.p1 * q.p0, 1e-15);
  EXPECT_NEAR(*r.fluct_sq, 0.0, 1e-15);
}

TEST(Slcp, FluctFormula) {
  const auto b = Beta::from_value(1.0);
  const auto q = qubit(1.0);
  EXPECT_NEAR(slcp_fluct_formula(3, b, q.p1), 0.0, 1e-15);
  for (double x : {0.0, 0.3, 0.5, 1.0})
    EXPECT_NEAR(slcp_fluct_formula(3, Beta::zero_temperature(), x), 3.0 * x * (1.0 - x), 1e-15);

  TraceState t(thermal_distribution(build_spectrum(2, 1), b));
  t.apply_givens(0, 1, local_angle(q, 0.5));
  EXPECT_NEAR(t.weights()[1], 0.5, 1e-14);
  EXPECT_NEAR(slcp_fluct_formula(1, b, 0.5), tpm_stats(t.initial(), t).fluct_sq, 1e-13);
}

TEST(Slcp, ProductTraceMatchesFormulas) {
  for (double beta : {0.5, 1.0, 2.0})
    for (int n = 1; n <= 4; ++n) {
      const auto b = Beta::from_value(beta);
      const auto q = qubit(beta);
      for (double x : {q.p1, 0.4, 0.5, 0.6, q.p0}) {
        std::vector<double> xs(static_cast<std::size_t>(n), x);
        xs[0] = std::clamp(x + 0.05, q.p1, q.p0);
        const auto plan = make_local_plan(n, b, xs);
        const auto t = local_product_trace(plan);
        const auto st = tpm_stats(t.initial(), t);
        EXPECT_NEAR(variance(t.dist()), local_variance(plan), 1e-12);
        EXPECT_NEAR(st.fluct_sq, local_fluct(plan), 1e-12);
        double sum = 0.0;
        for (double v : xs) sum += v - q.p1;
        EXPECT_NEAR(st.mean_work, sum, 1e-12);
      }
    }
}

TEST(Slcp, PerturbationIdentity) {
  const auto b = Beta::from_value(1.0);
  const double v = slcp_charge(4, b, 4.0 * (0.5 - qubit(1.0).p1)).variance;
  EXPECT_NEAR(perturbed_slcp_variance(4, b, 0.5, 0.0), v, 1e-12);
  EXPECT_NEAR(perturbed_slcp_variance(4, b, 0.5, 0.1), 0.98, 1e-12);
  for (double d : {0.01, 0.1, 0.2}) EXPECT_LT(perturbed_slcp_variance(4, b, 0.5, d), v);
  EXPECT_THROW(perturbed_slcp_variance(1, b, 0.5, 0.1), ValidationError);
}

TEST(RandomLocal, ZeroChargeIsThermal) {
  const auto q = qubit(1.0);
  for (const auto& s : random_local_sample(3, Beta::from_value(1.0), 0.0, 10, 1)) {
    EXPECT_NEAR(s.variance, 3.0 * q.p0 * q.p1, 1e-14);
    EXPECT_NEAR(s.fluct_sq, 0.0, 1e-14);
  }
}

TEST(RandomLocal, NeverAboveSlcp) {
  for (int n = 2; n <= 4; ++n) {
    const auto b = Beta::from_value(1.0);
    const double top = local_max_delta(n, qubit(1.0));
    for (double f : {0.2, 0.5, 0.8}) {
      const auto ref = slcp_charge(n, b, f * top);
      for (const auto& s : random_local_sample(n, b, f * top, 500, 3)) {
        EXPECT_LE(s.variance, ref.variance + 1e-9);
        EXPECT_LE(s.fluct_sq, *ref.fluct_sq + 1e-9);
        double sum = 0.0;
        for (double x : s.excitations) sum += x - qubit(1.0).p1;
        EXPECT_NEAR(sum, f * top, 1e-12);
      }
    }
  }
}

TEST(RandomLocal, SeededDeterminism) {
  const auto b = Beta::from_value(1.0);
  const auto a = random_local_sample(2, b, 0.3, 10, 42);
  const auto c = random_local_sample(2, b, 0.3, 10, 42);
  ASSERT_EQ(a.size(), 10u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].excitations, c[i].excitations);
    EXPECT_EQ(a[i].variance, c[i].variance);
  }
  EXPECT_NE(random_local_sample(2, b, 0.3, 10, 43)[0].excitations, a[0].excitations);
}

TEST(OptimalLocal, MatchesVertexEnumeration) {
  for (double beta : {0.5, 1.0, 2.0})
    for (int n = 1; n <= 5; ++n) {
      const auto b = Beta::from_value(beta);
      const auto q = qubit(beta);
      const double top = local_max_delta(n, q);
      for (double f = 0.0; f <= 1.0 + 1e-12; f += 0.1) {
        const double de = std::min(f * top, top);
        const double total = de + n * q.p1;
        for (auto obj : {LocalObjective::variance, LocalObjective::fluct}) {
          const auto r = optimal_local_search(n, b, de, obj);
          const auto cost = [&](double x) {
            return obj == LocalObjective::variance ? local_qubit_variance(q, x) : local_qubit_fluct(q, x);
          };
          const double ref = oracle::concave_vertex_minimum(n, q.p1, q.p0, total, cost);
          const double got = obj == LocalObjective::variance ? r.variance : *r.fluct_sq;
          EXPECT_NEAR(got, ref, 1e-10) << "beta=" << beta << " n=" << n << " f=" << f;
        }
      }
    }
}

TEST(OptimalLocal, EndpointsAndStrictInterior) {
  const auto z = Beta::zero_temperature();
  const auto slcp0 = slcp_charge(4, z, 0.0);
  const auto slcp4 = slcp_charge(4, z, 4.0);
  EXPECT_NEAR(optimal_local_search(4, z, 0.0, LocalObjective::variance).variance, slcp0.variance, 1e-12);
  EXPECT_NEAR(optimal_local_search(4, z, 4.0, LocalObjective::variance).variance, slcp4.variance, 1e-12);
  for (double de : {0.5, 1.5, 2.5, 3.5})
    EXPECT_LT(optimal_local_search(4, z, de, LocalObjective::variance).variance,
              slcp_charge(4, z, de).variance - 1e-3);

  const auto b = Beta::from_value(1.0);
  const double margin = slcp_charge(4, b, 1.5).variance - optimal_local_search(4, b, 1.5, LocalObjective::variance).variance;
  EXPECT_GT(margin, 0.05);
}

TEST(OptimalLocal, RangeErrors) {
  const auto b = Beta::from_value(1.0);
  EXPECT_THROW(slcp_charge(2, b, 2.0), RangeError);
  EXPECT_THROW(optimal_local_search(2, b, -0.5, LocalObjective::fluct), RangeError);
  EXPECT_THROW(slcp_charge(0, b, 0.0), ValidationError);
}
