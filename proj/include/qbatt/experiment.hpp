#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "fluctuation.hpp"
#include "local.hpp"
#include "oracle.hpp"
#include "precision.hpp"
#include "report.hpp"
#include "spectrum.hpp"
#include "states.hpp"

namespace qbatt {

inline constexpr double grid_slack = 1e-9;

// Inclusive min:max:step, a single value, or a comma-separated mix.
inline std::vector<double> parse_grid(const std::string& text) {
  auto number = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ValidationError("bad number '" + s + "' in grid '" + text + "'");
    }
  };
  std::vector<double> out;
  std::stringstream all(text);
  std::string item;
  while (std::getline(all, item, ',')) {
    if (item.empty()) throw ValidationError("empty grid entry in '" + text + "'");
    std::vector<std::string> parts;
    std::stringstream ss(item);
    std::string p;
    while (std::getline(ss, p, ':')) parts.push_back(p);
    if (parts.size() == 1) {
      out.push_back(number(parts[0]));
      continue;
    }
    if (parts.size() != 3) throw ValidationError("grid must be min:max:step, got '" + item + "'");
    const double lo = number(parts[0]);
    const double hi = number(parts[1]);
    const double step = number(parts[2]);
    if (hi < lo) throw ValidationError("grid max below min in '" + item + "'");
    if (!(step > 0.0)) throw ValidationError("grid step must be positive in '" + item + "'");
    const double span = (hi - lo) / step;
    if (span > 1e7) throw ValidationError("grid '" + item + "' has too many points");
    const auto count = static_cast<long>(std::floor(span + grid_slack / step)) + 1;
    for (long i = 0; i < count; ++i) {
      double v = lo + static_cast<double>(i) * step;
      v = std::round(v * 1e12) / 1e12;
      if (std::abs(v - hi) <= grid_slack) v = hi;
      out.push_back(v);
    }
  }
  if (out.empty()) throw ValidationError("empty grid");
  return out;
}

inline const std::vector<std::string>& protocol_tags() {
  static const std::vector<std::string> tags{
      "precision", "fluctuation", "fluctuation-ideal", "slcp", "local-opt-v",
      "local-opt-w", "local-rand", "oracle-v",          "oracle-w"};
  return tags;
}

inline bool is_local_protocol(const std::string& tag) {
  return tag == "slcp" || tag == "local-opt-v" || tag == "local-opt-w" || tag == "local-rand";
}

struct SweepConfig {
  int d = 2;
  int n_subsystems = 1;
  double omega = 1.0;
  std::vector<double> temperatures{1.0};
  // Empty means 0..delta_eps_max at default_step per temperature.
  std::vector<double> delta_eps;
  double default_step = 0.05;
  std::vector<std::string> protocols{"precision"};
  std::uint64_t seed = 0;
  int restarts = 64;
  int samples = 100;
  int jobs = 1;
  bool timing = true;
};

struct SweepResult {
  std::vector<ChargeReport> rows;
  std::vector<std::string> warnings;
};

namespace detail {

inline void validate(const SweepConfig& cfg) {
  if (cfg.temperatures.empty()) throw ValidationError("no temperatures given");
  for (double t : cfg.temperatures)
    if (!(t >= 0.0) || !std::isfinite(t)) throw ValidationError("temperatures must be finite and >= 0");
  if (cfg.protocols.empty()) throw ValidationError("no protocols given");
  for (const auto& p : cfg.protocols) {
    const auto& tags = protocol_tags();
    if (std::find(tags.begin(), tags.end(), p) == tags.end())
      throw ValidationError("unknown protocol '" + p + "'");
    if (is_local_protocol(p) && cfg.d != 2)
      throw ValidationError("protocol '" + p + "' needs qubits (--d 2)");
  }
  if (cfg.jobs < 1) throw ValidationError("jobs must be >= 1");
  if (cfg.restarts < 1) throw ValidationError("restarts must be >= 1");
  if (cfg.samples < 1) throw ValidationError("samples must be >= 1");
  if (!(cfg.default_step > 0.0)) throw ValidationError("grid step must be positive");
}

inline std::vector<double> default_grid(double max_delta, double step) {
  std::vector<double> g;
  if (max_delta <= 0.0) return {0.0};
  for (long i = 0;; ++i) {
    double v = std::round(static_cast<double>(i) * step * 1e12) / 1e12;
    if (v > max_delta + grid_slack) break;
    g.push_back(std::min(v, max_delta));
  }
  if (max_delta - g.back() > grid_slack) g.push_back(max_delta);
  return g;
}

inline std::vector<ChargeReport> run_point(const SweepConfig& cfg, const SpectrumPtr& spec,
                                           const std::string& tag, double temperature,
                                           double delta_eps) {
  const Beta beta = Beta::from_temperature(temperature);
  if (tag == "precision") return {charge_min_variance(spec, beta, delta_eps).report};
  if (tag == "fluctuation") {
    FluctOptions fo;
    fo.seed = cfg.seed;
    return {charge_min_fluct(spec, beta, delta_eps, fo).report};
  }
  if (tag == "fluctuation-ideal") return {charge_min_fluct_ideal(spec, beta, delta_eps)};
  if (tag == "slcp") return {slcp_charge(cfg.n_subsystems, beta, delta_eps, cfg.omega)};
  if (tag == "local-opt-v" || tag == "local-opt-w") {
    LocalSearchOptions lo;
    lo.seed = cfg.seed;
    lo.restarts = cfg.restarts;
    return {optimal_local_search(cfg.n_subsystems, beta, delta_eps,
                                 tag == "local-opt-v" ? LocalObjective::variance : LocalObjective::fluct,
                                 lo, cfg.omega)};
  }
  if (tag == "local-rand") {
    const auto t0 = std::chrono::steady_clock::now();
    const auto samples = random_local_sample(cfg.n_subsystems, beta, delta_eps,
                                             static_cast<std::size_t>(cfg.samples), cfg.seed, cfg.omega);
    std::vector<ChargeReport> rows;
    for (std::size_t k = 0; k < samples.size(); ++k) {
      const auto plan = make_local_plan(cfg.n_subsystems, beta, samples[k].excitations, cfg.omega);
      auto r = local_report("local-rand", plan, beta, std::clamp(delta_eps, 0.0, local_max_delta(cfg.n_subsystems, plan.thermal)));
      r.seed = cfg.seed;
      r.extra.emplace_back("sample", static_cast<double>(k));
      rows.push_back(std::move(r));
    }
    const double ms = elapsed_ms(t0) / static_cast<double>(rows.size());
    for (auto& r : rows) r.elapsed_ms = ms;
    return rows;
  }
  OracleConfig oc;
  oc.seed = cfg.seed;
  oc.restarts = cfg.restarts;
  return {oracle_search(spec, beta, delta_eps,
                        tag == "oracle-v" ? OracleObjective::variance : OracleObjective::fluct, oc)
              .report};
}

// Runs tasks on up to `jobs` threads; results land in task order.
template <class Task>
void parallel_for(std::size_t count, int jobs, Task&& task) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, count); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          task(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

// Rows ordered by (protocol as listed, temperature, delta_eps).
inline SweepResult run_sweep(const SweepConfig& cfg) {
  detail::validate(cfg);
  auto spec = build_spectrum(cfg.d, cfg.n_subsystems, cfg.omega);
  const bool needs_trace = std::any_of(cfg.protocols.begin(), cfg.protocols.end(), [](const std::string& p) {
    return !is_local_protocol(p) && p != "fluctuation-ideal";
  });
  if (needs_trace && spec->dim() > default_trace_dim_cap)
    throw SizeError("dimension " + std::to_string(spec->dim()) + " exceeds the trace cap " +
                    std::to_string(default_trace_dim_cap));

  auto temps = cfg.temperatures;
  std::sort(temps.begin(), temps.end());
  temps.erase(std::unique(temps.begin(), temps.end()), temps.end());

  struct Task {
    std::string tag;
    double temperature;
    double delta_eps;
    double max_delta;
  };
  std::vector<Task> tasks;
  for (const auto& tag : cfg.protocols) {
    for (double t : temps) {
      const Beta beta = Beta::from_temperature(t);
      const double max_delta = is_local_protocol(tag)
                                   ? local_max_delta(cfg.n_subsystems, QubitThermal::at(beta, cfg.omega))
                                   : charge_range(spec, beta).hi;
      auto grid = cfg.delta_eps.empty() ? detail::default_grid(max_delta, cfg.default_step) : cfg.delta_eps;
      std::sort(grid.begin(), grid.end());
      for (double de : grid) tasks.push_back({tag, t, de, max_delta});
    }
  }

  std::vector<std::vector<ChargeReport>> out(tasks.size());
  std::vector<std::string> skipped(tasks.size());
  detail::parallel_for(tasks.size(), cfg.jobs, [&](std::size_t i) {
    const Task& tk = tasks[i];
    if (tk.delta_eps < -overshoot_clamp || tk.delta_eps > tk.max_delta + overshoot_clamp) {
      skipped[i] = "skipped " + tk.tag + " T=" + format_double(tk.temperature) +
                   " delta_eps=" + format_double(tk.delta_eps) + ": outside [0, " +
                   format_double(tk.max_delta) + "]";
      return;
    }
    out[i] = detail::run_point(cfg, spec, tk.tag, tk.temperature, tk.delta_eps);
  });

  SweepResult res;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!skipped[i].empty()) res.warnings.push_back(skipped[i]);
    for (auto& r : out[i]) {
      if (!cfg.timing) r.elapsed_ms.reset();
      res.rows.push_back(std::move(r));
    }
  }
  return res;
}

struct CompareSummary {
  int d = 2;
  int n_subsystems = 1;
  double temperature = 0.0;
  std::string evaluation;  // "ideal" or "realized"
  double d_max_v = 0.0;
  double d_max_w = 0.0;
  double area_v = 0.0;
  double area_w = 0.0;
  double ratio_d_max = 0.0;
  double ratio_area = 0.0;
  std::size_t points = 0;
};

inline constexpr const char* compare_csv_header =
    "d,n_qubits,temperature,evaluation,d_max_v,d_max_w,area_v,area_w,ratio_d_max,ratio_area,points";

struct Curve {
  std::vector<double> delta_eps;
  std::vector<double> variance;
  std::vector<double> fluct_sq;
};

namespace detail {

inline double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  double a = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) a += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return a;
}

}  // namespace detail

// `precise` minimizes V, `quiet` minimizes the fluctuation. d_max^V is the
// largest variance excess of `quiet`, d_max^W the largest fluctuation excess
// of `precise`; areas integrate the absolute gaps.
inline CompareSummary compare_curves(const Curve& precise, const Curve& quiet) {
  const std::size_t n = precise.delta_eps.size();
  if (n == 0 || quiet.delta_eps.size() != n || precise.variance.size() != n ||
      precise.fluct_sq.size() != n || quiet.variance.size() != n || quiet.fluct_sq.size() != n)
    throw ValidationError("compared curves must share one grid");
  for (std::size_t i = 0; i < n; ++i)
    if (std::abs(precise.delta_eps[i] - quiet.delta_eps[i]) > grid_slack)
      throw ValidationError("compared curves must share one grid");
  CompareSummary s;
  std::vector<double> gv(n), gw(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double dv = quiet.variance[i] - precise.variance[i];
    const double dw = precise.fluct_sq[i] - quiet.fluct_sq[i];
    s.d_max_v = i == 0 ? dv : std::max(s.d_max_v, dv);
    s.d_max_w = i == 0 ? dw : std::max(s.d_max_w, dw);
    gv[i] = std::abs(dv);
    gw[i] = std::abs(dw);
  }
  s.area_v = detail::trapezoid(precise.delta_eps, gv);
  s.area_w = detail::trapezoid(precise.delta_eps, gw);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  s.ratio_d_max = s.d_max_w != 0.0 ? s.d_max_v / s.d_max_w : nan;
  s.ratio_area = s.area_w != 0.0 ? s.area_v / s.area_w : nan;
  s.points = n;
  return s;
}

struct CompareConfig {
  int d = 5;
  int n_subsystems = 1;
  double omega = 1.0;
  std::vector<double> temperatures{1.0};
  double step = 0.01;
  std::vector<std::string> evaluations{"ideal", "realized"};
  std::uint64_t seed = 0;
  int jobs = 1;
};

// Precision protocol against the fluctuation protocol on 0..delta_eps_max.
inline std::vector<CompareSummary> compare(const CompareConfig& cfg) {
  if (cfg.temperatures.empty()) throw ValidationError("no temperatures given");
  if (!(cfg.step > 0.0)) throw ValidationError("grid step must be positive");
  for (const auto& e : cfg.evaluations)
    if (e != "ideal" && e != "realized") throw ValidationError("unknown evaluation '" + e + "'");
  auto spec = build_spectrum(cfg.d, cfg.n_subsystems, cfg.omega);
  std::vector<CompareSummary> out;
  for (double t : cfg.temperatures) {
    const Beta beta = Beta::from_temperature(t);
    const auto grid = detail::default_grid(charge_range(spec, beta).hi, cfg.step);
    const std::size_t n = grid.size();
    Curve prec{grid, std::vector<double>(n), std::vector<double>(n)};
    Curve ideal = prec, real = prec;
    const bool want_real =
        std::find(cfg.evaluations.begin(), cfg.evaluations.end(), "realized") != cfg.evaluations.end();
    detail::parallel_for(n, cfg.jobs, [&](std::size_t i) {
      const auto p = charge_min_variance(spec, beta, grid[i]).report;
      prec.variance[i] = p.variance;
      prec.fluct_sq[i] = *p.fluct_sq;
      const auto q = charge_min_fluct_ideal(spec, beta, grid[i]);
      ideal.variance[i] = q.variance;
      ideal.fluct_sq[i] = *q.fluct_sq;
      if (want_real) {
        FluctOptions fo;
        fo.seed = cfg.seed;
        const auto f = charge_min_fluct(spec, beta, grid[i], fo).report;
        real.variance[i] = f.variance;
        real.fluct_sq[i] = *f.fluct_sq;
      }
    });
    for (const auto& e : cfg.evaluations) {
      auto s = compare_curves(prec, e == "ideal" ? ideal : real);
      s.d = cfg.d;
      s.n_subsystems = cfg.n_subsystems;
      s.temperature = t;
      s.evaluation = e;
      out.push_back(s);
    }
  }
  return out;
}

inline std::string compare_csv_row(const CompareSummary& s) {
  return std::to_string(s.d) + ',' + std::to_string(s.n_subsystems) + ',' + format_double(s.temperature) +
         ',' + s.evaluation + ',' + format_double(s.d_max_v) + ',' + format_double(s.d_max_w) + ',' +
         format_double(s.area_v) + ',' + format_double(s.area_w) + ',' + format_double(s.ratio_d_max) +
         ',' + format_double(s.ratio_area) + ',' + std::to_string(s.points);
}

inline nlohmann::json to_json(const CompareSummary& s) {
  auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
  return {{"d", s.d},
          {"n_qubits", s.n_subsystems},
          {"temperature", s.temperature},
          {"evaluation", s.evaluation},
          {"d_max_v", num(s.d_max_v)},
          {"d_max_w", num(s.d_max_w)},
          {"area_v", num(s.area_v)},
          {"area_w", num(s.area_w)},
          {"ratio_d_max", num(s.ratio_d_max)},
          {"ratio_area", num(s.ratio_area)},
          {"points", s.points}};
}

struct InfoReport {
  int d = 2;
  int n_subsystems = 1;
  double omega = 1.0;
  std::size_t dim = 2;
  double temperature = 0.0;
  double eps0 = 0.0;
  double delta_eps_max = 0.0;
  std::vector<Level> levels;
};

inline InfoReport info(int d, int n_subsystems, double omega, double temperature) {
  auto spec = build_spectrum(d, n_subsystems, omega);
  const Beta beta = Beta::from_temperature(temperature);
  InfoReport r;
  r.d = d;
  r.n_subsystems = n_subsystems;
  r.omega = omega;
  r.dim = spec->dim();
  r.temperature = temperature;
  r.eps0 = mean_energy(thermal_distribution(spec, beta));
  r.delta_eps_max = spec->max_level() - 2.0 * r.eps0;
  r.levels = spec->levels();
  return r;
}

inline nlohmann::json to_json(const InfoReport& r) {
  auto deg = nlohmann::json::array();
  for (const auto& lv : r.levels) deg.push_back(lv.g);
  return {{"d", r.d},
          {"n_qubits", r.n_subsystems},
          {"omega", r.omega},
          {"dim", r.dim},
          {"temperature", r.temperature},
          {"eps0", r.eps0},
          {"delta_eps_max", r.delta_eps_max},
          {"degeneracies", deg}};
}

inline void write_info_text(std::ostream& os, const InfoReport& r) {
  os << "d = " << r.d << ", N = " << r.n_subsystems << ", omega = " << format_double(r.omega)
     << ", D = " << r.dim << '\n';
  os << "T = " << format_double(r.temperature) << '\n';
  os << "eps0 = " << format_double(r.eps0) << '\n';
  os << "delta_eps_max = " << format_double(r.delta_eps_max) << '\n';
  os << "level  energy  degeneracy\n";
  for (const auto& lv : r.levels)
    os << lv.m << "  " << format_double(lv.m * r.omega) << "  " << lv.g << '\n';
}

}  // namespace qbatt
