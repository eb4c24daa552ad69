#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "precision.hpp"
#include "report.hpp"
#include "states.hpp"
#include "trace.hpp"

namespace qbatt {

// Single-qubit thermal populations (ground p0, excited p1).
struct QubitThermal {
  double p0 = 1.0;
  double p1 = 0.0;
  double omega = 1.0;

  static QubitThermal at(Beta beta, double omega = 1.0) {
    if (!(omega > 0.0)) throw ValidationError("omega must be positive");
    if (beta.is_zero_temperature(omega)) return {1.0, 0.0, omega};
    const double x = std::exp(-beta.value() * omega);
    return {1.0 / (1.0 + x), x / (1.0 + x), omega};
  }
  double span() const { return p0 - p1; }
};

// Per-qubit excited populations after local rotations.
struct LocalPlan {
  int n_qubits = 1;
  std::vector<double> excitations;
  QubitThermal thermal;
  double beta = 0.0;
};

inline constexpr double local_slack = 1e-12;

namespace detail {

inline void check_excitation(const QubitThermal& q, double x) {
  if (!(x >= q.p1 - local_slack && x <= q.p0 + local_slack))
    throw ValidationError("excitation " + format_double(x) + " outside reachable interval [" +
                          format_double(q.p1) + ", " + format_double(q.p0) + "]");
}

}  // namespace detail

inline double local_qubit_variance(const QubitThermal& q, double x) {
  return q.omega * q.omega * x * (1.0 - x);
}

// omega^2 [x(1-x) + p1(1-p1) - 2(p1(x-p0)/(p1-p0) - p1 x)]
inline double local_qubit_fluct(const QubitThermal& q, double x) {
  const double w2 = q.omega * q.omega;
  if (q.span() <= 0.0) return 0.0;
  const double cross = q.p1 * (x - q.p0) / (q.p1 - q.p0) - q.p1 * x;
  return w2 * (x * (1.0 - x) + q.p1 * (1.0 - q.p1) - 2.0 * cross);
}

inline double local_variance(const LocalPlan& plan) {
  double v = 0.0;
  for (double x : plan.excitations) v += local_qubit_variance(plan.thermal, x);
  return v;
}

inline double local_fluct(const LocalPlan& plan) {
  double v = 0.0;
  for (double x : plan.excitations) v += local_qubit_fluct(plan.thermal, x);
  return v;
}

inline double local_max_delta(int n_qubits, const QubitThermal& q) { return n_qubits * q.span(); }

inline LocalPlan make_local_plan(int n_qubits, Beta beta, std::vector<double> excitations,
                                 double omega = 1.0) {
  if (n_qubits < 1) throw ValidationError("n_qubits must be >= 1");
  if (excitations.size() != static_cast<std::size_t>(n_qubits))
    throw ValidationError("one excitation per qubit required");
  LocalPlan plan{n_qubits, std::move(excitations), QubitThermal::at(beta, omega), beta.value()};
  for (double x : plan.excitations) detail::check_excitation(plan.thermal, x);
  return plan;
}

// Rotation angle taking p1 to x on one qubit.
inline double local_angle(const QubitThermal& q, double x) {
  if (q.span() <= 0.0) return 0.0;
  const double s2 = std::clamp((x - q.p1) / q.span(), 0.0, 1.0);
  return std::asin(std::sqrt(s2));
}

// Explicit N-qubit product trace. Bitstring b maps to (popcount level,
// lexicographic slot among equal popcounts).
inline TraceState local_product_trace(const LocalPlan& plan) {
  const int n = plan.n_qubits;
  auto spec = build_spectrum(2, n, plan.thermal.omega);
  const std::size_t dim = spec->dim();
  std::vector<std::size_t> flat(dim);
  std::vector<std::size_t> next_slot(static_cast<std::size_t>(n) + 1, 0);
  for (std::size_t b = 0; b < dim; ++b) {
    const int pc = __builtin_popcountll(b);
    flat[b] = spec->level_start(pc) + next_slot[static_cast<std::size_t>(pc)]++;
  }
  TraceState t(thermal_distribution(spec, Beta::from_value(plan.beta)));
  for (int i = 0; i < n; ++i) {
    const double th = local_angle(plan.thermal, plan.excitations[static_cast<std::size_t>(i)]);
    const std::size_t bit = std::size_t{1} << i;
    for (std::size_t b = 0; b < dim; ++b)
      if (!(b & bit)) t.apply_givens(flat[b], flat[b | bit], th);
  }
  return t;
}

inline double slcp_fluct_formula(int n_qubits, Beta beta, double p1_tilde, double omega = 1.0) {
  const auto q = QubitThermal::at(beta, omega);
  detail::check_excitation(q, p1_tilde);
  return n_qubits * local_qubit_fluct(q, p1_tilde);
}

// Two qubits moved by +delta and -delta around the symmetric point.
inline double perturbed_slcp_variance(int n_qubits, Beta beta, double p1_tilde, double delta,
                                      double omega = 1.0) {
  if (n_qubits < 2) throw ValidationError("perturbation needs at least two qubits");
  std::vector<double> x(static_cast<std::size_t>(n_qubits), p1_tilde);
  x[0] += delta;
  x[1] -= delta;
  return local_variance(make_local_plan(n_qubits, beta, std::move(x), omega));
}

namespace detail {

inline ChargeReport local_report(const std::string& tag, const LocalPlan& plan, Beta beta,
                                 double delta_eps) {
  ChargeReport r;
  r.protocol = tag;
  r.d = 2;
  r.n_subsystems = plan.n_qubits;
  r.temperature = beta.temperature();
  r.delta_eps = delta_eps;
  r.eps0 = plan.n_qubits * plan.thermal.p1;
  r.variance = local_variance(plan);
  r.fluct_sq = local_fluct(plan);
  double e = 0.0;
  for (double x : plan.excitations) e += x;
  r.mean_work = e - r.eps0;
  r.n_steps = static_cast<std::int64_t>(plan.n_qubits) << (plan.n_qubits - 1);
  return r;
}

inline double checked_local_delta(int n_qubits, const QubitThermal& q, double delta_eps) {
  if (n_qubits < 1) throw ValidationError("n_qubits must be >= 1");
  return checked_delta_eps(delta_eps, local_max_delta(n_qubits, q));
}

}  // namespace detail

inline ChargeReport slcp_charge(int n_qubits, Beta beta, double delta_eps, double omega = 1.0) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto q = QubitThermal::at(beta, omega);
  delta_eps = detail::checked_local_delta(n_qubits, q, delta_eps);
  const double x = std::min(q.p1 + delta_eps / n_qubits, q.p0);
  const auto plan = make_local_plan(n_qubits, beta, std::vector<double>(static_cast<std::size_t>(n_qubits), x), omega);
  auto r = detail::local_report("slcp", plan, beta, delta_eps);
  r.elapsed_ms = detail::elapsed_ms(t0);
  return r;
}

struct LocalSample {
  std::vector<double> excitations;
  double variance = 0.0;
  double fluct_sq = 0.0;
};

namespace detail {

// Uniform point of {y in [0,1]^n : sum y = c}.
inline std::vector<double> sample_box_slice(std::size_t n, double c, std::mt19937_64& rng) {
  const bool flip = c > 0.5 * static_cast<double>(n);
  const double cc = flip ? static_cast<double>(n) - c : c;
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> y(n);
  for (int attempt = 0; attempt < 1000000; ++attempt) {
    double tot = 0.0;
    for (auto& v : y) {
      v = expo(rng);
      tot += v;
    }
    bool ok = true;
    for (auto& v : y) {
      v = cc * v / tot;
      if (v > 1.0) ok = false;
    }
    if (!ok) continue;
    if (flip)
      for (auto& v : y) v = 1.0 - v;
    return y;
  }
  throw RuntimeFailure("rejection sampling failed");
}

}  // namespace detail

inline std::vector<LocalSample> random_local_sample(int n_qubits, Beta beta, double delta_eps,
                                                    std::size_t count, std::uint64_t seed,
                                                    double omega = 1.0) {
  if (count < 1) throw ValidationError("count must be >= 1");
  const auto q = QubitThermal::at(beta, omega);
  if (n_qubits < 1) throw ValidationError("n_qubits must be >= 1");
  if (!(delta_eps >= -overshoot_clamp && delta_eps <= local_max_delta(n_qubits, q) + overshoot_clamp))
    throw RangeError("no local allocation reaches delta_eps " + format_double(delta_eps));
  delta_eps = std::clamp(delta_eps, 0.0, local_max_delta(n_qubits, q));
  std::mt19937_64 rng(seed);
  std::vector<LocalSample> out;
  out.reserve(count);
  const auto n = static_cast<std::size_t>(n_qubits);
  for (std::size_t k = 0; k < count; ++k) {
    std::vector<double> x(n, q.p1);
    if (q.span() > 0.0) {
      const auto y = detail::sample_box_slice(n, delta_eps / q.span(), rng);
      for (std::size_t i = 0; i < n; ++i) x[i] = q.p1 + q.span() * y[i];
    }
    const auto plan = make_local_plan(n_qubits, beta, x, omega);
    out.push_back({std::move(x), local_variance(plan), local_fluct(plan)});
  }
  return out;
}

enum class LocalObjective { variance, fluct };

namespace detail {

inline double local_objective(const QubitThermal& q, LocalObjective obj, double x) {
  return obj == LocalObjective::variance ? local_qubit_variance(q, x) : local_qubit_fluct(q, x);
}

// Pairwise moves at fixed sum; the per-qubit objective is concave, so each
// pair optimum sits at an end of its feasible segment.
inline std::vector<double> pairwise_descent(const QubitThermal& q, LocalObjective obj,
                                            std::vector<double> x, int max_iter, double tol,
                                            bool& converged) {
  const std::size_t n = x.size();
  converged = false;
  auto total = [&] {
    double s = 0.0;
    for (double v : x) s += local_objective(q, obj, v);
    return s;
  };
  double cur = total();
  for (int it = 0; it < max_iter; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double s = x[i] + x[j];
        const double lo = std::max(q.p1, s - q.p0);
        const double hi = std::min(q.p0, s - q.p1);
        const double base = local_objective(q, obj, x[i]) + local_objective(q, obj, x[j]);
        const double f_lo = local_objective(q, obj, lo) + local_objective(q, obj, s - lo);
        const double f_hi = local_objective(q, obj, hi) + local_objective(q, obj, s - hi);
        if (f_lo <= f_hi && f_lo < base) {
          x[i] = lo;
          x[j] = s - lo;
        } else if (f_hi < base) {
          x[i] = hi;
          x[j] = s - hi;
        }
      }
    }
    const double next = total();
    if (cur - next <= tol) {
      converged = true;
      return x;
    }
    cur = next;
  }
  return x;
}

}  // namespace detail

struct LocalSearchOptions {
  std::uint64_t seed = 0;
  int restarts = 64;
  int max_iter = 500;
  double tol = 1e-10;
};

// Best local allocation for one objective.
inline ChargeReport optimal_local_search(int n_qubits, Beta beta, double delta_eps,
                                         LocalObjective obj, const LocalSearchOptions& opt = {},
                                         double omega = 1.0) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto q = QubitThermal::at(beta, omega);
  delta_eps = detail::checked_local_delta(n_qubits, q, delta_eps);
  const auto starts =
      random_local_sample(n_qubits, beta, delta_eps, static_cast<std::size_t>(std::max(opt.restarts, 1)),
                          opt.seed, omega);
  std::vector<double> best;
  double best_f = 0.0;
  int converged = 0;
  for (const auto& st : starts) {
    bool ok = false;
    auto x = detail::pairwise_descent(q, obj, st.excitations, opt.max_iter, opt.tol, ok);
    converged += ok ? 1 : 0;
    double f = 0.0;
    for (double v : x) f += detail::local_objective(q, obj, v);
    if (best.empty() || f < best_f) {
      best = std::move(x);
      best_f = f;
    }
  }
  const auto plan = make_local_plan(n_qubits, beta, best, omega);
  auto r = detail::local_report(obj == LocalObjective::variance ? "local-opt-v" : "local-opt-w", plan,
                                beta, delta_eps);
  r.seed = opt.seed;
  r.extra.emplace_back("restarts", static_cast<double>(starts.size()));
  r.extra.emplace_back("converged_restarts", static_cast<double>(converged));
  r.elapsed_ms = detail::elapsed_ms(t0);
  return r;
}

}  // namespace qbatt
