#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "report.hpp"
#include "states.hpp"
#include "trace.hpp"

namespace qbatt {

inline constexpr double energy_match_tol = 1e-12;
inline constexpr double overshoot_clamp = 1e-9;

struct TargetSpec {
  double eps_target = 0.0;
  int k = 0;
};

// Nearest level; ties go up.
inline int nearest_level_k(double eps) {
  if (!(eps >= 0.0)) throw RangeError("target energy must be >= 0");
  const double lo = std::floor(eps);
  const double hi = std::ceil(eps);
  return static_cast<int>(eps - lo >= hi - eps ? hi : lo);
}

inline TargetSpec make_target(double eps) { return {eps, nearest_level_k(eps)}; }

// Validates delta_eps against [0, max]; clamps tiny overshoot.
inline double checked_delta_eps(double delta_eps, double max_delta) {
  if (std::isnan(delta_eps)) throw RangeError("delta_eps is NaN");
  if (delta_eps < -overshoot_clamp)
    throw RangeError("delta_eps " + format_double(delta_eps) + " is negative");
  if (delta_eps > max_delta + overshoot_clamp)
    throw RangeError("delta_eps " + format_double(delta_eps) + " exceeds maximum " +
                     format_double(max_delta));
  return std::clamp(delta_eps, 0.0, std::max(max_delta, 0.0));
}

namespace detail {

// Slot indices sorted by weight, stable on index.
inline std::vector<std::size_t> slots_by_weight(const std::vector<double>& w, std::size_t begin,
                                                std::size_t end, bool descending) {
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return descending ? w[a] > w[b] : w[a] < w[b];
  });
  return idx;
}

// Lowest and highest energy reachable on the unitary orbit of p.
inline std::pair<double, double> orbit_energy_range(const Distribution& p) {
  std::vector<double> w = p.weights();
  std::sort(w.begin(), w.end(), std::greater<>());
  const auto& lv = p.spectrum().level_table();
  double lo = 0.0, hi = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    lo += w[i] * lv[i];
    hi += w[i] * lv[w.size() - 1 - i];
  }
  return {lo, hi};
}

}  // namespace detail

struct Step1Result {
  std::vector<std::size_t> perm;  // map[src] = dst
  Distribution dist;
};

// Largest weights onto slots closest to eps.
inline Step1Result step1_reorder(const Distribution& initial, double eps) {
  const double top_level = initial.spectrum().max_level();
  if (!(eps >= 0.0 && eps <= top_level))
    throw RangeError("target energy " + format_double(eps) + " outside level range [0, " +
                     format_double(top_level) + "]");
  const auto& w = initial.weights();
  const std::size_t dim = w.size();

  std::vector<std::size_t> src = detail::slots_by_weight(w, 0, dim, true);

  // Levels by distance, ties toward the higher level.
  const int top = initial.spectrum().max_level();
  std::vector<int> order(static_cast<std::size_t>(top) + 1);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [eps](int a, int b) {
    const double da = std::abs(a - eps);
    const double db = std::abs(b - eps);
    if (da != db) return da < db;
    return a > b;
  });

  std::vector<std::size_t> perm(dim);
  std::vector<double> out(dim);
  std::size_t r = 0;
  for (int m : order) {
    const std::size_t s0 = initial.spectrum().level_start(m);
    const std::size_t g = initial.spectrum().degeneracy(m);
    for (std::size_t i = 0; i < g; ++i, ++r) {
      perm[src[r]] = s0 + i;
      out[s0 + i] = w[src[r]];
    }
  }
  return {std::move(perm), Distribution(initial.spectrum_ptr(), std::move(out))};
}

// Two-level rotations ranked by j = m + n - 2k until the energy hits the
// target. All level pairs m < n are admissible.
inline TraceState& step2_schedule(TraceState& t, const TargetSpec& target) {
  const Spectrum& sp = t.spectrum();
  const int top = sp.max_level();
  const std::size_t max_iter = t.dim() * t.dim() + 16;
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    const double gap = target.eps_target - t.mean_eps();
    if (std::abs(gap) <= energy_match_tol) return t;
    const bool up = gap > 0.0;
    const auto& w = t.weights();

    // Going up: x-th largest below with x-th smallest above. Going down: mirrored.
    std::vector<std::vector<std::size_t>> lower_order, upper_order;
    for (const auto& lv : sp.levels()) {
      const std::size_t s0 = sp.level_start(lv.m);
      lower_order.push_back(detail::slots_by_weight(w, s0, s0 + lv.g, up));
      upper_order.push_back(detail::slots_by_weight(w, s0, s0 + lv.g, !up));
    }

    std::optional<int> best_j;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (int m = 0; m <= top; ++m) {
      for (int n = m + 1; n <= top; ++n) {
        const int j = m + n - 2 * target.k;
        if (best_j && (up ? j > *best_j : j < *best_j)) continue;
        const auto& lo_slots = lower_order[static_cast<std::size_t>(m)];
        const auto& hi_slots = upper_order[static_cast<std::size_t>(n)];
        std::vector<std::pair<std::size_t, std::size_t>> found;
        const std::size_t x_max = std::min(lo_slots.size(), hi_slots.size());
        for (std::size_t x = 0; x < x_max; ++x) {
          const std::size_t a = lo_slots[x];
          const std::size_t b = hi_slots[x];
          if (up ? w[a] > w[b] : w[a] < w[b]) found.emplace_back(a, b);
        }
        if (found.empty()) continue;
        if (!best_j || *best_j != j) {
          best_j = j;
          pairs.clear();
        }
        pairs.insert(pairs.end(), found.begin(), found.end());
      }
    }
    if (!best_j) {
      if (std::abs(gap) <= 1e-10) return t;
      throw ProtocolStuck("no admissible rotation left with energy gap " + format_double(gap));
    }

    double rate = 0.0;
    for (const auto& [a, b] : pairs) rate += (w[a] - w[b]) * (sp.level_of(b) - sp.level_of(a));
    const double s2 = gap / rate;
    const bool last = s2 < 1.0;
    const double theta = last ? std::asin(std::sqrt(std::max(s2, 0.0))) : std::numbers::pi / 2;
    for (const auto& [a, b] : pairs) t.apply_givens(a, b, theta);
  }
  throw ProtocolStuck("rotation schedule did not terminate");
}

// Sorts weights non-increasing within each degenerate level. Leaves energy,
// variance and work statistics unchanged.
inline TraceState& canonical_level_order(TraceState& t) {
  const Spectrum& sp = t.spectrum();
  std::vector<std::size_t> map(t.dim());
  std::iota(map.begin(), map.end(), 0);
  for (const auto& lv : sp.levels()) {
    const std::size_t s0 = sp.level_start(lv.m);
    const auto idx = detail::slots_by_weight(t.weights(), s0, s0 + lv.g, true);
    for (std::size_t i = 0; i < idx.size(); ++i) map[idx[i]] = s0 + i;
  }
  if (!detail::is_identity(map)) t.apply_permutation(map);
  return t;
}

struct ProtocolRun {
  TraceState trace;
  ChargeReport report;
};

namespace detail {

inline double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

inline ChargeReport base_report(const std::string& tag, const Spectrum& sp, Beta beta,
                                double delta_eps, double eps0) {
  ChargeReport r;
  r.protocol = tag;
  r.d = sp.d();
  r.n_subsystems = sp.n_subsystems();
  r.temperature = beta.temperature();
  r.delta_eps = delta_eps;
  r.eps0 = eps0;
  return r;
}

inline void fill_from_trace(ChargeReport& r, const Distribution& initial, const TraceState& t) {
  const auto st = tpm_moments(initial, t);
  r.variance = variance(t.dist());
  r.fluct_sq = st.fluct_sq;
  r.mean_work = st.mean_work;
  r.n_steps = static_cast<std::int64_t>(t.steps().size());
}

}  // namespace detail

inline ProtocolRun charge_min_variance(const SpectrumPtr& spec, Beta beta, double delta_eps) {
  const auto t0 = std::chrono::steady_clock::now();
  Distribution initial = thermal_distribution(spec, beta);
  const double eps0 = mean_energy(initial);
  delta_eps = checked_delta_eps(delta_eps, spec->max_level() - 2.0 * eps0);

  TraceState t(initial);
  if (delta_eps > 0.0) {
    const TargetSpec target = make_target(eps0 + delta_eps);
    auto s1 = step1_reorder(initial, target.eps_target);
    if (!detail::is_identity(s1.perm)) t.apply_permutation(s1.perm);
    step2_schedule(t, target);
    canonical_level_order(t);
  }
  ChargeReport r = detail::base_report("precision", *spec, beta, delta_eps, eps0);
  detail::fill_from_trace(r, initial, t);
  r.elapsed_ms = detail::elapsed_ms(t0);
  return {std::move(t), std::move(r)};
}

}  // namespace qbatt
