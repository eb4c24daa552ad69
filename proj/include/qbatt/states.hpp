#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "spectrum.hpp"

namespace qbatt {

inline constexpr double weight_tol = 1e-12;
// beta*omega above this is treated as zero temperature.
inline constexpr double zero_temperature_cutoff = 700.0;

// Inverse temperature; +inf marks T = 0.
class Beta {
 public:
  static Beta from_temperature(double temperature) {
    if (std::isnan(temperature) || temperature < 0.0)
      throw ValidationError("temperature must be >= 0");
    if (temperature == 0.0) return Beta(std::numeric_limits<double>::infinity());
    return Beta(1.0 / temperature);
  }
  static Beta from_value(double beta) {
    if (std::isnan(beta) || beta < 0.0) throw ValidationError("beta must be >= 0");
    return Beta(beta);
  }
  static Beta zero_temperature() { return Beta(std::numeric_limits<double>::infinity()); }

  double value() const { return beta_; }
  double temperature() const { return std::isinf(beta_) ? 0.0 : 1.0 / beta_; }
  bool is_zero_temperature(double omega = 1.0) const {
    return beta_ * omega > zero_temperature_cutoff;
  }

 private:
  explicit Beta(double b) : beta_(b) {}
  double beta_;
};

// Diagonal of a density operator in the flat energy basis.
class Distribution {
 public:
  Distribution(SpectrumPtr spec, std::vector<double> weights)
      : spec_(std::move(spec)), w_(std::move(weights)) {
    if (!spec_) throw ValidationError("distribution needs a spectrum");
    if (w_.size() != spec_->dim())
      throw ValidationError("weight vector length " + std::to_string(w_.size()) +
                            " does not match dimension " + std::to_string(spec_->dim()));
    double total = 0.0;
    for (double x : w_) {
      if (!(x >= -weight_tol)) throw ValidationError("negative or NaN weight");
      total += x;
    }
    if (std::abs(total - 1.0) > weight_tol)
      throw ValidationError("weights not normalized (sum - 1 = " + std::to_string(total - 1.0) +
                            ")");
  }

  const Spectrum& spectrum() const { return *spec_; }
  const SpectrumPtr& spectrum_ptr() const { return spec_; }
  const std::vector<double>& weights() const { return w_; }
  double operator[](std::size_t s0) const { return w_[s0]; }
  std::size_t size() const { return w_.size(); }

 private:
  SpectrumPtr spec_;
  std::vector<double> w_;
};

struct EnergyStats {
  double mean_eps = 0.0;
  double variance = 0.0;
  double asd = 0.0;
};

inline Distribution thermal_distribution(const SpectrumPtr& spec, Beta beta) {
  std::vector<double> w(spec->dim(), 0.0);
  if (beta.is_zero_temperature(spec->omega())) {
    w[0] = 1.0;
    return Distribution(spec, std::move(w));
  }
  const double bw = beta.value() * spec->omega();
  double z = 0.0;
  std::vector<double> boltz(spec->levels().size());
  for (const auto& lv : spec->levels()) {
    boltz[static_cast<std::size_t>(lv.m)] = std::exp(-bw * lv.m);
    z += static_cast<double>(lv.g) * boltz[static_cast<std::size_t>(lv.m)];
  }
  for (std::size_t s = 0; s < w.size(); ++s)
    w[s] = boltz[static_cast<std::size_t>(spec->level_of(s))] / z;
  return Distribution(spec, std::move(w));
}

// Dimensionless mean energy (units of omega).
inline double mean_energy(const Distribution& p) {
  const auto& lv = p.spectrum().level_table();
  double e = 0.0;
  for (std::size_t s = 0; s < p.size(); ++s) e += lv[s] * p[s];
  return e;
}

// Sum_s w(s) (m(s) - t)^2 times omega^2.
inline double asd(const Distribution& p, double eps_target) {
  const auto& lv = p.spectrum().level_table();
  double acc = 0.0;
  for (std::size_t s = 0; s < p.size(); ++s) {
    const double x = lv[s] - eps_target;
    acc += p[s] * x * x;
  }
  const double w = p.spectrum().omega();
  return w * w * acc;
}

inline double variance(const Distribution& p) { return asd(p, mean_energy(p)); }

inline EnergyStats energy_stats(const Distribution& p, double eps_target) {
  const double mu = mean_energy(p);
  return {mu, asd(p, mu), asd(p, eps_target)};
}

struct ChargeRange {
  double lo = 0.0;
  double hi = 0.0;
};

inline ChargeRange charge_range(const SpectrumPtr& spec, Beta beta) {
  const double e0 = mean_energy(thermal_distribution(spec, beta));
  return {0.0, spec->max_level() - 2.0 * e0};
}

inline double pure_state_variance_bound(double delta_eps, double omega = 1.0) {
  if (!(delta_eps >= 0.0)) throw RangeError("delta_eps must be >= 0");
  return omega * omega * (delta_eps - std::floor(delta_eps)) * (std::ceil(delta_eps) - delta_eps);
}

}  // namespace qbatt
