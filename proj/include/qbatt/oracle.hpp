#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "optim.hpp"
#include "precision.hpp"
#include "report.hpp"
#include "states.hpp"
#include "trace.hpp"

namespace qbatt {

inline constexpr std::size_t oracle_dim_cap = 16;
inline constexpr std::size_t brute_dim_cap = 8;

struct BruteAsd {
  double value = 0.0;
  std::vector<std::size_t> perm;  // map[src] = dst
};

// Exhaustive minimum of the ASD over all D! reassignments of the weights.
inline BruteAsd brute_min_asd(const Distribution& initial, double eps_target) {
  const std::size_t dim = initial.size();
  if (dim > brute_dim_cap)
    throw SizeError("exhaustive search limited to D <= " + std::to_string(brute_dim_cap));
  const auto& lv = initial.spectrum().level_table();
  const double w2 = initial.spectrum().omega() * initial.spectrum().omega();
  std::vector<std::size_t> perm(dim);
  std::iota(perm.begin(), perm.end(), 0);
  BruteAsd best{0.0, perm};
  bool have = false;
  do {
    double v = 0.0;
    for (std::size_t s = 0; s < dim; ++s) {
      const double x = lv[perm[s]] - eps_target;
      v += initial[s] * x * x;
    }
    v *= w2;
    if (!have || v < best.value) {
      best = {v, perm};
      have = true;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

struct OracleConfig {
  int restarts = 64;
  int max_iters = 20000;  // objective evaluations per simplex run
  double penalty_weight = 1e6;
  std::uint64_t seed = 0;
  int jobs = 1;
};

enum class OracleObjective { variance, fluct };

namespace detail {

// U = G_last ... G_first over pairs (a < b) in lexicographic order.
class GivensModel {
 public:
  explicit GivensModel(const Distribution& initial)
      : dim_(initial.size()), p_(initial.weights()), lv_(initial.spectrum().level_table()) {
    for (std::size_t a = 0; a < dim_; ++a)
      for (std::size_t b = a + 1; b < dim_; ++b) pairs_.emplace_back(a, b);
  }

  std::size_t angle_count() const { return pairs_.size(); }
  const std::vector<std::pair<std::size_t, std::size_t>>& pairs() const { return pairs_; }

  Matrix matrix(const std::vector<double>& x) const {
    Matrix u = Matrix::Identity(static_cast<Eigen::Index>(dim_), static_cast<Eigen::Index>(dim_));
    for (std::size_t k = 0; k < pairs_.size(); ++k)
      rotate_rows(u, pairs_[k].first, pairs_[k].second, std::cos(x[k]), std::sin(x[k]));
    return u;
  }

  struct Eval {
    double energy = 0.0;
    double variance = 0.0;
    double fluct_sq = 0.0;
  };

  Eval evaluate(const std::vector<double>& x) const {
    thread_local Matrix u;
    u = Matrix::Identity(static_cast<Eigen::Index>(dim_), static_cast<Eigen::Index>(dim_));
    for (std::size_t k = 0; k < pairs_.size(); ++k)
      rotate_rows(u, pairs_[k].first, pairs_[k].second, std::cos(x[k]), std::sin(x[k]));
    double e1 = 0.0, e2 = 0.0;
    for (std::size_t n = 0; n < dim_; ++n) {
      double q = 0.0;
      for (std::size_t m = 0; m < dim_; ++m) {
        const double v = u(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
        q += v * v * p_[m];
      }
      e1 += q * lv_[n];
      e2 += q * lv_[n] * lv_[n];
    }
    const auto mo = tpm_moments(u, p_, lv_);
    return {e1, e2 - e1 * e1, mo.fluct_sq};
  }

 private:
  std::size_t dim_;
  std::vector<double> p_;
  std::vector<int> lv_;
  std::vector<std::pair<std::size_t, std::size_t>> pairs_;
};

inline double pick(const GivensModel::Eval& ev, OracleObjective obj) {
  return obj == OracleObjective::variance ? ev.variance : ev.fluct_sq;
}

// Solves one angle so the energy matches exactly.
inline bool polish_energy(const GivensModel& model, std::vector<double>& x, double target) {
  const std::size_t n = x.size();
  std::vector<std::pair<double, std::size_t>> amp(n);
  std::vector<std::array<double, 3>> samples(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto trial = x;
    for (int k = 0; k < 3; ++k) {
      trial[i] = k * std::numbers::pi / 4;
      samples[i][static_cast<std::size_t>(k)] = model.evaluate(trial).energy;
    }
    const double a = 0.5 * (samples[i][0] + samples[i][2]);
    amp[i] = {-std::hypot(0.5 * (samples[i][0] - samples[i][2]), samples[i][1] - a), i};
  }
  std::sort(amp.begin(), amp.end());
  for (const auto& [score, i] : amp) {
    auto th = solve_sinusoid(samples[i][0], samples[i][1], samples[i][2], target, x[i], false);
    if (!th) continue;
    auto trial = x;
    trial[i] = *th;
    if (std::abs(model.evaluate(trial).energy - target) <= 1e-10) {
      x = std::move(trial);
      return true;
    }
  }
  return false;
}

struct RestartOutcome {
  std::vector<double> x;
  double pre_polish = 0.0;   // penalized objective at the simplex optimum
  double objective = 0.0;    // after the energy polish
  double energy_error = 0.0;
  bool polished = false;
  bool converged = false;
};

inline RestartOutcome oracle_restart(const GivensModel& model, OracleObjective obj, double target,
                                     const OracleConfig& cfg, int index) {
  std::seed_seq seq{static_cast<std::uint64_t>(cfg.seed), static_cast<std::uint64_t>(index)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> uni(-std::numbers::pi, std::numbers::pi);
  std::vector<double> x(model.angle_count(), 0.0);
  // Restart 0 starts from the identity.
  if (index > 0)
    for (auto& v : x) v = uni(rng);

  RestartOutcome out;
  const double final_mu = std::max(cfg.penalty_weight, 1e3);
  std::vector<double> schedule{1e3};
  if (final_mu > 1e3) schedule.push_back(final_mu);
  NelderMeadResult nm;
  for (double mu : schedule) {
    auto f = [&](const std::vector<double>& y) {
      const auto ev = model.evaluate(y);
      const double g = ev.energy - target;
      return pick(ev, obj) + mu * g * g;
    };
    NelderMeadOptions no;
    no.max_evals = cfg.max_iters;
    no.initial_step = mu <= 1e3 ? 0.5 : 0.05;
    nm = nelder_mead_restarted(f, x, no, 3);
    x = nm.x;
  }
  out.pre_polish = nm.f;
  out.converged = nm.converged;
  out.polished = polish_energy(model, x, target);
  const auto ev = model.evaluate(x);
  out.objective = pick(ev, obj);
  out.energy_error = ev.energy - target;
  out.x = std::move(x);
  return out;
}

}  // namespace detail

struct OracleResult {
  ChargeReport report;
  std::vector<double> angles;
  Matrix matrix;
  double pre_polish_objective = 0.0;
  double energy_error = 0.0;
  int polished_restarts = 0;
  int converged_restarts = 0;
};

inline OracleResult oracle_search(const SpectrumPtr& spec, Beta beta, double delta_eps,
                                  OracleObjective obj, const OracleConfig& cfg = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  if (spec->dim() > oracle_dim_cap)
    throw SizeError("oracle limited to D <= " + std::to_string(oracle_dim_cap));
  if (cfg.restarts < 1) throw ValidationError("restarts must be >= 1");
  Distribution initial = thermal_distribution(spec, beta);
  const double eps0 = mean_energy(initial);
  delta_eps = checked_delta_eps(delta_eps, spec->max_level() - 2.0 * eps0);
  const double target = eps0 + delta_eps;
  const detail::GivensModel model(initial);

  std::vector<detail::RestartOutcome> outcomes(static_cast<std::size_t>(cfg.restarts));
  const int jobs = std::clamp(cfg.jobs, 1, cfg.restarts);
  auto worker = [&](int w) {
    for (int r = w; r < cfg.restarts; r += jobs)
      outcomes[static_cast<std::size_t>(r)] = detail::oracle_restart(model, obj, target, cfg, r);
  };
  if (jobs == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < jobs; ++w) pool.emplace_back(worker, w);
    for (auto& th : pool) th.join();
  }

  // Lowest polished objective; ties by restart index.
  std::size_t best = 0;
  bool have = false;
  int polished = 0, converged = 0;
  for (std::size_t r = 0; r < outcomes.size(); ++r) {
    polished += outcomes[r].polished ? 1 : 0;
    converged += outcomes[r].converged ? 1 : 0;
    if (!outcomes[r].polished) continue;
    if (!have || outcomes[r].objective < outcomes[best].objective) {
      best = r;
      have = true;
    }
  }
  if (!have) {
    for (std::size_t r = 1; r < outcomes.size(); ++r)
      if (std::abs(outcomes[r].energy_error) < std::abs(outcomes[best].energy_error)) best = r;
  }
  const auto& b = outcomes[best];

  OracleResult res;
  res.angles = b.x;
  res.matrix = model.matrix(b.x);
  res.pre_polish_objective = b.pre_polish;
  res.energy_error = b.energy_error;
  res.polished_restarts = polished;
  res.converged_restarts = converged;

  const auto ev = model.evaluate(b.x);
  const double w2 = spec->omega() * spec->omega();
  ChargeReport& r = res.report;
  r = detail::base_report(obj == OracleObjective::variance ? "oracle-v" : "oracle-w", *spec, beta,
                          delta_eps, eps0);
  r.variance = w2 * ev.variance;
  r.fluct_sq = w2 * ev.fluct_sq;
  r.mean_work = ev.energy - eps0;
  r.n_steps = static_cast<std::int64_t>(model.angle_count());
  r.seed = cfg.seed;
  r.extra.emplace_back("pre_polish_objective", w2 * b.pre_polish);
  r.extra.emplace_back("post_polish_objective", w2 * b.objective);
  r.extra.emplace_back("energy_error", b.energy_error);
  r.extra.emplace_back("restarts", cfg.restarts);
  r.extra.emplace_back("polished_restarts", polished);
  r.extra.emplace_back("converged_restarts", converged);
  r.elapsed_ms = detail::elapsed_ms(t0);
  return res;
}

inline OracleResult oracle_min_variance(const SpectrumPtr& spec, Beta beta, double delta_eps,
                                        const OracleConfig& cfg = {}) {
  return oracle_search(spec, beta, delta_eps, OracleObjective::variance, cfg);
}

inline OracleResult oracle_min_fluct(const SpectrumPtr& spec, Beta beta, double delta_eps,
                                     const OracleConfig& cfg = {}) {
  return oracle_search(spec, beta, delta_eps, OracleObjective::fluct, cfg);
}

}  // namespace qbatt
