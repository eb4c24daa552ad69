#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "optim.hpp"
#include "precision.hpp"
#include "report.hpp"
#include "states.hpp"
#include "trace.hpp"

namespace qbatt {

inline constexpr double bisection_tol = 1e-10;
inline constexpr int bisection_max_iter = 200;

// Shift every population up by m slots; the top m land on the bottom m
// slots in increasing order. map[src] = dst, 0-based.
inline std::vector<std::size_t> phase1_permutation(std::size_t dim, std::size_t m) {
  if (dim == 0 || m >= dim)
    throw ValidationError("shift " + std::to_string(m) + " out of range for dimension " +
                          std::to_string(dim));
  std::vector<std::size_t> map(dim);
  for (std::size_t dst = 0; dst < dim; ++dst) {
    const std::size_t src = dst >= m ? dst - m : dim - 1 - dst;
    map[src] = dst;
  }
  return map;
}

inline double energy_after_shift(const Distribution& initial, std::size_t m) {
  const auto map = phase1_permutation(initial.size(), m);
  const auto& lv = initial.spectrum().level_table();
  double e = 0.0;
  for (std::size_t src = 0; src < map.size(); ++src) e += initial[src] * lv[map[src]];
  return e;
}

struct ShiftPlan {
  std::size_t m_tilde = 0;
  double eps_after_shift = 0.0;
  double residual = 0.0;
  double theta = 0.0;
};

// Largest shift whose energy does not exceed the target.
inline ShiftPlan select_m_tilde(const Distribution& initial, double delta_eps) {
  const std::size_t dim = initial.size();
  const double eps0 = mean_energy(initial);
  const double target = eps0 + delta_eps;
  if (!(delta_eps >= -overshoot_clamp)) throw RangeError("delta_eps must be >= 0");
  std::vector<double> e(dim);
  for (std::size_t m = 0; m < dim; ++m) {
    e[m] = energy_after_shift(initial, m);
    if (m > 0 && e[m] < e[m - 1] - 1e-12)
      throw InternalError("shift energies are not monotone at m = " + std::to_string(m));
  }
  if (target > e[dim - 1] + overshoot_clamp)
    throw RangeError("delta_eps " + format_double(delta_eps) + " exceeds the shift range " +
                     format_double(e[dim - 1] - eps0));
  std::size_t mt = 0;
  for (std::size_t m = 0; m < dim; ++m)
    if (e[m] <= target + energy_match_tol) mt = m;
  ShiftPlan plan;
  plan.m_tilde = mt;
  plan.eps_after_shift = e[mt];
  plan.residual = std::max(0.0, target - e[mt]);
  if (mt + 1 < dim) {
    const double gap = e[mt + 1] - e[mt];
    const double s2 = gap > 0.0 ? std::clamp(plan.residual / gap, 0.0, 1.0) : 0.0;
    plan.theta = std::asin(std::sqrt(s2));
  }
  return plan;
}

// Exact evaluator for phase one plus the descending adjacent chain.
// Rotation i acts on flat slots (D-2-i, D-1-i); only the block from
// m_tilde upward is touched.
class ChainModel {
 public:
  ChainModel(const Distribution& initial, std::size_t m_tilde)
      : spec_(initial.spectrum_ptr()), mt_(m_tilde), dim_(initial.size()), lv_(spec_->level_table()) {
    const auto map = phase1_permutation(dim_, m_tilde);
    r_.resize(dim_);
    src_lv_.resize(dim_);
    for (std::size_t src = 0; src < dim_; ++src) {
      r_[map[src]] = initial[src];
      src_lv_[map[src]] = lv_[src];
    }
    len_ = dim_ - mt_;
  }

  std::size_t m_tilde() const { return mt_; }
  std::size_t rotations() const { return len_ - 1; }

  struct Eval {
    double energy = 0.0;      // final mean energy, units of omega
    double mean_work = 0.0;
    double fluct_sq = 0.0;    // units of omega^2 with omega = 1
    double variance = 0.0;
  };

  Eval evaluate(const std::vector<double>& angles) const {
    thread_local std::vector<double> c;
    block(angles, c);
    double e1 = 0.0, e2 = 0.0, w1 = 0.0, w2 = 0.0;
    for (std::size_t s = 0; s < mt_; ++s) {
      const double p = r_[s];
      const double w = lv_[s] - src_lv_[s];
      e1 += p * lv_[s];
      e2 += p * lv_[s] * lv_[s];
      w1 += p * w;
      w2 += p * w * w;
    }
    for (std::size_t n = 0; n < len_; ++n) {
      const double en = lv_[mt_ + n];
      double qn = 0.0;
      for (std::size_t j = 0; j < len_; ++j) {
        const double x = c[n * len_ + j];
        const double t = x * x * r_[mt_ + j];
        if (t == 0.0) continue;
        const double w = en - src_lv_[mt_ + j];
        qn += t;
        w1 += t * w;
        w2 += t * w * w;
      }
      e1 += qn * en;
      e2 += qn * en * en;
    }
    return {e1, w1, w2 - w1 * w1, e2 - e1 * e1};
  }

  // Phase-two weights after the chain.
  std::vector<double> final_weights(const std::vector<double>& angles) const {
    std::vector<double> c;
    block(angles, c);
    std::vector<double> q(r_.begin(), r_.end());
    for (std::size_t n = 0; n < len_; ++n) {
      double qn = 0.0;
      for (std::size_t j = 0; j < len_; ++j) qn += c[n * len_ + j] * c[n * len_ + j] * r_[mt_ + j];
      q[mt_ + n] = qn;
    }
    return q;
  }

 private:
  void block(const std::vector<double>& angles, std::vector<double>& c) const {
    if (angles.size() != rotations()) throw ValidationError("chain angle count mismatch");
    c.assign(len_ * len_, 0.0);
    for (std::size_t i = 0; i < len_; ++i) c[i * len_ + i] = 1.0;
    for (std::size_t i = 0; i < angles.size(); ++i) {
      const std::size_t a = len_ - 2 - i;
      const std::size_t b = a + 1;
      const double cs = std::cos(angles[i]);
      const double sn = std::sin(angles[i]);
      // Rows a, b; only columns >= a are nonzero at this point.
      for (std::size_t k = a; k < len_; ++k) {
        const double x = c[a * len_ + k];
        const double y = c[b * len_ + k];
        c[a * len_ + k] = cs * x - sn * y;
        c[b * len_ + k] = sn * x + cs * y;
      }
    }
  }

  SpectrumPtr spec_;
  std::size_t mt_;
  std::size_t dim_;
  std::size_t len_ = 1;
  const std::vector<int>& lv_;
  std::vector<double> r_;
  std::vector<int> src_lv_;
};

// Applies G(D-1, D, a_0), G(D-2, D-1, a_1), ... down to G(m+1, m+2) in
// 1-based labels.
inline TraceState& phase2_chain(TraceState& t, std::size_t m_tilde, const std::vector<double>& angles) {
  if (m_tilde >= t.dim()) throw ValidationError("m_tilde out of range");
  if (angles.size() != t.dim() - 1 - m_tilde) throw ValidationError("chain angle count mismatch");
  for (std::size_t i = 0; i < angles.size(); ++i) {
    const std::size_t a = t.dim() - 2 - i;
    t.apply_givens(a, a + 1, angles[i]);
  }
  return t;
}

inline TraceState& phase2_chain(TraceState& t, std::size_t m_tilde, double theta) {
  if (m_tilde >= t.dim()) throw ValidationError("m_tilde out of range");
  return phase2_chain(t, m_tilde, std::vector<double>(t.dim() - 1 - m_tilde, theta));
}

// Common chain angle hitting eps_target, by bisection on the realized energy.
inline double solve_theta(const Distribution& initial, std::size_t m_tilde, double eps_target) {
  if (m_tilde + 1 >= initial.size()) {
    if (std::abs(energy_after_shift(initial, m_tilde) - eps_target) <= bisection_tol) return 0.0;
    throw InternalError("no chain above the top shift");
  }
  const ChainModel model(initial, m_tilde);
  const std::size_t n = model.rotations();
  auto energy = [&](double th) { return model.evaluate(std::vector<double>(n, th)).energy; };
  double lo = 0.0, hi = std::numbers::pi / 2;
  double flo = energy(lo) - eps_target;
  double fhi = energy(hi) - eps_target;
  if (std::abs(flo) <= bisection_tol * 1e-3) return lo;
  if (std::abs(fhi) <= bisection_tol * 1e-3) return hi;
  if (flo > bisection_tol || fhi < -bisection_tol)
    throw InternalError("chain energy does not bracket the target");
  if (flo > 0.0) return lo;
  if (fhi < 0.0) return hi;
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < bisection_max_iter; ++it) {
    mid = 0.5 * (lo + hi);
    const double fm = energy(mid) - eps_target;
    if (fm == 0.0 || hi - lo < 1e-16) break;
    if (fm < 0.0) lo = mid;
    else hi = mid;
  }
  return mid;
}

// Three-group closed form with the idealized transitions p_n -> n+m
// (cos^2) and n+m+1 (sin^2), top block reversed. Flat 1-based labels.
inline double closed_form_fluct(const Distribution& initial, std::size_t m_tilde, double theta,
                                double delta_eps) {
  const std::size_t d = initial.size();
  if (m_tilde >= d) throw ValidationError("m_tilde out of range");
  const auto& lv = initial.spectrum().level_table();
  auto e = [&](std::size_t n) { return static_cast<double>(lv[n - 1]); };
  auto p = [&](std::size_t n) { return initial[n - 1]; };
  const double s2 = std::pow(std::sin(theta), 2);
  const double c2 = 1.0 - s2;
  const std::size_t m = m_tilde;
  auto sq = [](double x) { return x * x; };
  double tot = 0.0;
  for (std::size_t n = 1; n + m + 1 <= d; ++n)
    tot += p(n) * (c2 * sq(e(n + m) - e(n) - delta_eps) + s2 * sq(e(n + m + 1) - e(n) - delta_eps));
  {
    const std::size_t n = d - m;
    tot += p(n) * (c2 * sq(e(d) - e(n) - delta_eps) + s2 * sq(e(m + 1) - e(n) - delta_eps));
  }
  for (std::size_t n = d - m + 1; n <= d; ++n) tot += p(n) * sq(e(d - n + 1) - e(n) - delta_eps);
  const double w = initial.spectrum().omega();
  return w * w * tot;
}

// Diagonal of the idealized single-shot map.
inline std::vector<double> ideal_phase2_weights(const Distribution& initial, std::size_t m_tilde,
                                                double theta) {
  const std::size_t d = initial.size();
  if (m_tilde >= d) throw ValidationError("m_tilde out of range");
  const double s2 = std::pow(std::sin(theta), 2);
  const double c2 = 1.0 - s2;
  const std::size_t m = m_tilde;
  std::vector<double> q(d, 0.0);
  for (std::size_t n = 1; n + m + 1 <= d; ++n) {
    q[n + m - 1] += initial[n - 1] * c2;
    q[n + m] += initial[n - 1] * s2;
  }
  q[d - 1] += initial[d - m - 1] * c2;
  q[m] += initial[d - m - 1] * s2;
  for (std::size_t n = d - m + 1; n <= d; ++n) q[d - n] += initial[n - 1];
  return q;
}

struct FluctOptions {
  std::uint64_t seed = 0;
  int random_starts = 6;
  // Chains longer than this keep the common angle.
  std::size_t max_optimized_angles = 64;
  int max_evals = 20000;
};

namespace detail {

inline constexpr double half_pi = std::numbers::pi / 2;

// Moves one chain angle to hit the energy exactly.
inline bool polish_chain_energy(const ChainModel& model, std::vector<double>& angles, double target) {
  const std::size_t n = angles.size();
  std::vector<std::pair<double, std::size_t>> amp(n);
  std::vector<std::array<double, 3>> samples(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto trial = angles;
    for (int k = 0; k < 3; ++k) {
      trial[i] = k * half_pi / 2;
      samples[i][static_cast<std::size_t>(k)] = model.evaluate(trial).energy;
    }
    amp[i] = {-std::abs(samples[i][0] - samples[i][2]) - std::abs(samples[i][1]), i};
  }
  std::sort(amp.begin(), amp.end());
  for (const auto& [score, i] : amp) {
    auto th = solve_sinusoid(samples[i][0], samples[i][1], samples[i][2], target, angles[i], true);
    if (!th) continue;
    auto trial = angles;
    trial[i] = *th;
    if (std::abs(model.evaluate(trial).energy - target) <= 1e-12) {
      angles = std::move(trial);
      return true;
    }
  }
  return false;
}

// Top rotations fully swapped, one partial angle.
inline std::vector<double> saturated_chain(const ChainModel& model, double target) {
  std::vector<double> angles(model.rotations(), 0.0);
  for (std::size_t i = 0; i < angles.size(); ++i) {
    angles[i] = half_pi;
    if (model.evaluate(angles).energy >= target) {
      angles[i] = 0.0;
      const double e0 = model.evaluate(angles).energy;
      angles[i] = half_pi / 2;
      const double eq = model.evaluate(angles).energy;
      angles[i] = half_pi;
      const double eh = model.evaluate(angles).energy;
      if (auto th = solve_sinusoid(e0, eq, eh, target, 0.0, true)) angles[i] = *th;
      break;
    }
  }
  return angles;
}

inline double to_angle(double u) { return half_pi * std::pow(std::sin(u), 2); }
inline double from_angle(double th) { return std::asin(std::sqrt(std::clamp(th / half_pi, 0.0, 1.0))); }

}  // namespace detail

struct ChainSolution {
  std::vector<double> angles;
  ChainModel::Eval eval;
  double common_theta = 0.0;
  ChainModel::Eval common_eval;
  int candidates = 0;
};

// Per-rotation chain angles minimizing the exact fluctuation at fixed energy.
inline ChainSolution optimize_chain(const Distribution& initial, std::size_t m_tilde, double target,
                                    const FluctOptions& opt = {}) {
  const ChainModel model(initial, m_tilde);
  const std::size_t n = model.rotations();
  ChainSolution sol;
  sol.common_theta = solve_theta(initial, m_tilde, target);
  std::vector<double> common(n, sol.common_theta);
  sol.common_eval = model.evaluate(common);

  std::vector<std::vector<double>> feasible{common};
  if (n > 0) {
    auto sat = detail::saturated_chain(model, target);
    if (std::abs(model.evaluate(sat).energy - target) <= 1e-12) feasible.push_back(sat);
  }

  if (n > 1 && n <= opt.max_optimized_angles) {
    std::vector<std::vector<double>> seeds = feasible;
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> uni(0.0, detail::half_pi);
    for (int r = 0; r < opt.random_starts; ++r) {
      std::vector<double> a(n);
      for (auto& x : a) x = uni(rng);
      seeds.push_back(std::move(a));
    }
    for (const auto& seed : seeds) {
      std::vector<double> u(n);
      for (std::size_t i = 0; i < n; ++i) u[i] = detail::from_angle(seed[i]);
      std::vector<double> th(n);
      for (double mu : {1e3, 1e6}) {
        auto obj = [&](const std::vector<double>& x) {
          for (std::size_t i = 0; i < n; ++i) th[i] = detail::to_angle(x[i]);
          const auto ev = model.evaluate(th);
          const double g = ev.energy - target;
          return ev.fluct_sq + mu * g * g;
        };
        NelderMeadOptions no;
        no.max_evals = opt.max_evals;
        no.initial_step = mu < 1e4 ? 0.3 : 0.02;
        u = nelder_mead_restarted(obj, u, no, 3).x;
      }
      std::vector<double> angles(n);
      for (std::size_t i = 0; i < n; ++i) angles[i] = detail::to_angle(u[i]);
      if (detail::polish_chain_energy(model, angles, target)) feasible.push_back(std::move(angles));
    }
  }

  sol.candidates = static_cast<int>(feasible.size());
  std::optional<std::size_t> best;
  double best_w = 0.0;
  for (std::size_t c = 0; c < feasible.size(); ++c) {
    const auto ev = model.evaluate(feasible[c]);
    if (!best || ev.fluct_sq < best_w) {
      best = c;
      best_w = ev.fluct_sq;
    }
  }
  sol.angles = feasible[*best];
  sol.eval = model.evaluate(sol.angles);
  return sol;
}

inline ProtocolRun charge_min_fluct(const SpectrumPtr& spec, Beta beta, double delta_eps,
                                    const FluctOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  Distribution initial = thermal_distribution(spec, beta);
  const double eps0 = mean_energy(initial);
  delta_eps = checked_delta_eps(delta_eps, spec->max_level() - 2.0 * eps0);

  TraceState t(initial);
  ChargeReport r = detail::base_report("fluctuation", *spec, beta, delta_eps, eps0);
  r.seed = opt.seed;
  const ShiftPlan plan = select_m_tilde(initial, delta_eps);
  r.extra.emplace_back("m_tilde", static_cast<double>(plan.m_tilde));
  r.extra.emplace_back("theta_closed_form", plan.theta);
  r.fluct_sq_eq32 = closed_form_fluct(initial, plan.m_tilde, plan.theta, delta_eps);
  r.extra.emplace_back("variance_ideal",
                       variance(Distribution(spec, ideal_phase2_weights(initial, plan.m_tilde, plan.theta))));
  if (delta_eps > 0.0) {
    if (plan.m_tilde > 0) t.apply_permutation(phase1_permutation(t.dim(), plan.m_tilde));
    if (plan.m_tilde + 1 < t.dim()) {
      const auto sol = optimize_chain(initial, plan.m_tilde, eps0 + delta_eps, opt);
      phase2_chain(t, plan.m_tilde, sol.angles);
      const double w2 = spec->omega() * spec->omega();
      r.extra.emplace_back("theta_common", sol.common_theta);
      r.extra.emplace_back("fluct_sq_common_theta", w2 * sol.common_eval.fluct_sq);
      r.extra.emplace_back("variance_common_theta", w2 * sol.common_eval.variance);
    }
  }
  detail::fill_from_trace(r, initial, t);
  r.elapsed_ms = detail::elapsed_ms(t0);
  return {std::move(t), std::move(r)};
}

// Idealized evaluation: diagonal of the displayed single-shot map and the
// closed-form fluctuation.
inline ChargeReport charge_min_fluct_ideal(const SpectrumPtr& spec, Beta beta, double delta_eps) {
  const auto t0 = std::chrono::steady_clock::now();
  Distribution initial = thermal_distribution(spec, beta);
  const double eps0 = mean_energy(initial);
  delta_eps = checked_delta_eps(delta_eps, spec->max_level() - 2.0 * eps0);
  const ShiftPlan plan = select_m_tilde(initial, delta_eps);
  Distribution q(spec, ideal_phase2_weights(initial, plan.m_tilde, plan.theta));
  ChargeReport r = detail::base_report("fluctuation-ideal", *spec, beta, delta_eps, eps0);
  r.variance = variance(q);
  r.fluct_sq = closed_form_fluct(initial, plan.m_tilde, plan.theta, delta_eps);
  r.fluct_sq_eq32 = r.fluct_sq;
  r.mean_work = mean_energy(q) - eps0;
  r.extra.emplace_back("m_tilde", static_cast<double>(plan.m_tilde));
  r.extra.emplace_back("theta_closed_form", plan.theta);
  r.elapsed_ms = detail::elapsed_ms(t0);
  return r;
}

}  // namespace qbatt
