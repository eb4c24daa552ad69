#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <optional>
#include <vector>

namespace qbatt {

struct NelderMeadOptions {
  int max_evals = 20000;
  double f_tol = 1e-14;
  double x_tol = 1e-10;
  double initial_step = 0.25;
};

struct NelderMeadResult {
  std::vector<double> x;
  double f = 0.0;
  int evals = 0;
  bool converged = false;
};

// Downhill simplex with dimension-adaptive coefficients (Gao & Han).
template <class F>
NelderMeadResult nelder_mead(F&& f, std::vector<double> x0, const NelderMeadOptions& opt = {}) {
  const std::size_t n = x0.size();
  NelderMeadResult res;
  if (n == 0) {
    res.x = std::move(x0);
    res.f = f(res.x);
    res.evals = 1;
    res.converged = true;
    return res;
  }
  const double dn = static_cast<double>(n);
  const double alpha = 1.0;
  const double gamma = 1.0 + 2.0 / dn;
  const double rho = 0.75 - 1.0 / (2.0 * dn);
  const double sigma = 1.0 - 1.0 / dn;

  std::vector<std::vector<double>> simplex(n + 1, x0);
  for (std::size_t i = 0; i < n; ++i) {
    const double h = x0[i] != 0.0 ? opt.initial_step * std::max(1.0, std::abs(x0[i])) : opt.initial_step;
    simplex[i + 1][i] += h;
  }
  std::vector<double> fv(n + 1);
  int evals = 0;
  auto eval = [&](const std::vector<double>& x) {
    ++evals;
    return f(x);
  };
  for (std::size_t i = 0; i <= n; ++i) fv[i] = eval(simplex[i]);

  std::vector<std::size_t> order(n + 1);
  std::vector<double> centroid(n), xr(n), xe(n), xc(n);
  bool converged = false;
  while (evals < opt.max_evals) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    {
      std::vector<std::vector<double>> s2(n + 1);
      std::vector<double> f2(n + 1);
      for (std::size_t i = 0; i <= n; ++i) {
        s2[i] = std::move(simplex[order[i]]);
        f2[i] = fv[order[i]];
      }
      simplex.swap(s2);
      fv.swap(f2);
    }

    double fspread = 0.0, xspread = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
      fspread = std::max(fspread, std::abs(fv[i] - fv[0]));
      for (std::size_t k = 0; k < n; ++k)
        xspread = std::max(xspread, std::abs(simplex[i][k] - simplex[0][k]));
    }
    if (fspread <= opt.f_tol && xspread <= opt.x_tol) {
      converged = true;
      break;
    }

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k) centroid[k] += simplex[i][k] / dn;
    const auto& worst = simplex[n];
    for (std::size_t k = 0; k < n; ++k) xr[k] = centroid[k] + alpha * (centroid[k] - worst[k]);
    const double fr = eval(xr);
    if (fr < fv[0]) {
      for (std::size_t k = 0; k < n; ++k) xe[k] = centroid[k] + gamma * (xr[k] - centroid[k]);
      const double fe = eval(xe);
      if (fe < fr) {
        simplex[n] = xe;
        fv[n] = fe;
      } else {
        simplex[n] = xr;
        fv[n] = fr;
      }
      continue;
    }
    if (fr < fv[n - 1]) {
      simplex[n] = xr;
      fv[n] = fr;
      continue;
    }
    const bool outside = fr < fv[n];
    for (std::size_t k = 0; k < n; ++k)
      xc[k] = outside ? centroid[k] + rho * (xr[k] - centroid[k])
                      : centroid[k] + rho * (worst[k] - centroid[k]);
    const double fc = eval(xc);
    if (fc < (outside ? fr : fv[n])) {
      simplex[n] = xc;
      fv[n] = fc;
      continue;
    }
    for (std::size_t i = 1; i <= n; ++i) {
      for (std::size_t k = 0; k < n; ++k)
        simplex[i][k] = simplex[0][k] + sigma * (simplex[i][k] - simplex[0][k]);
      fv[i] = eval(simplex[i]);
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());
  res.x = simplex[best];
  res.f = fv[best];
  res.evals = evals;
  res.converged = converged;
  return res;
}

// Reruns from the best point with a fresh simplex until it stops improving.
template <class F>
NelderMeadResult nelder_mead_restarted(F&& f, std::vector<double> x0, const NelderMeadOptions& opt,
                                       int rounds) {
  NelderMeadResult best = nelder_mead(f, std::move(x0), opt);
  int total = best.evals;
  for (int r = 1; r < rounds; ++r) {
    NelderMeadOptions o = opt;
    o.initial_step = opt.initial_step / (1 << r);
    auto next = nelder_mead(f, best.x, o);
    total += next.evals;
    const bool improved = next.f < best.f - opt.f_tol;
    if (next.f < best.f) best = std::move(next);
    if (!improved) break;
  }
  best.evals = total;
  return best;
}

// theta solving a + b cos 2theta + c sin 2theta = target, nearest to hint.
// With bounded set, only solutions in [0, pi/2] are accepted.
inline std::optional<double> solve_sinusoid(double e0, double e_quarter, double e_half, double target,
                                            double hint, bool bounded) {
  const double a = 0.5 * (e0 + e_half);
  const double b = 0.5 * (e0 - e_half);
  const double c = e_quarter - a;
  const double amp = std::hypot(b, c);
  const double rhs = target - a;
  if (amp == 0.0) return std::nullopt;
  double ratio = rhs / amp;
  if (std::abs(ratio) > 1.0) {
    if (std::abs(ratio) > 1.0 + 1e-12) return std::nullopt;
    ratio = std::clamp(ratio, -1.0, 1.0);
  }
  const double phi = std::atan2(c, b);
  const double delta = std::acos(ratio);
  std::optional<double> best;
  double best_dist = 0.0;
  const double pi = std::numbers::pi;
  for (double base : {phi + delta, phi - delta}) {
    // theta = base/2 + k*pi; scan nearby branches.
    const double k0 = std::round((hint - base / 2.0) / pi);
    for (double k = k0 - 1.0; k <= k0 + 1.0; k += 1.0) {
      double th = base / 2.0 + k * pi;
      if (bounded) {
        if (th < -1e-13 || th > pi / 2 + 1e-13) continue;
        th = std::clamp(th, 0.0, pi / 2);
      }
      const double dist = std::abs(th - hint);
      if (!best || dist < best_dist) {
        best = th;
        best_dist = dist;
      }
    }
  }
  return best;
}

}  // namespace qbatt
