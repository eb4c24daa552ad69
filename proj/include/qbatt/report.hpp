#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace qbatt {

inline constexpr const char* csv_header =
    "protocol,d,n_qubits,temperature,delta_eps,eps0,variance,fluct_sq,fluct_sq_eq32,mean_work,"
    "n_steps,seed,elapsed_ms";

// One protocol run. variance and fluct_sq carry omega^2; eps values are in
// units of omega; temperature is absolute (k_B = 1).
struct ChargeReport {
  std::string protocol;
  int d = 2;
  int n_subsystems = 1;
  double temperature = 0.0;
  double delta_eps = 0.0;
  double eps0 = 0.0;
  double variance = 0.0;
  std::optional<double> fluct_sq;
  std::optional<double> fluct_sq_eq32;
  std::optional<double> mean_work;
  std::optional<std::int64_t> n_steps;
  std::optional<std::uint64_t> seed;
  std::optional<double> elapsed_ms;
  // JSON only.
  std::vector<std::pair<std::string, double>> extra;

  std::optional<double> find_extra(const std::string& key) const {
    for (const auto& [k, v] : extra)
      if (k == key) return v;
    return std::nullopt;
  }
};

inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline std::string csv_row(const ChargeReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  std::string s;
  s += r.protocol;
  s += ',' + std::to_string(r.d);
  s += ',' + std::to_string(r.n_subsystems);
  s += ',' + format_double(r.temperature);
  s += ',' + format_double(r.delta_eps);
  s += ',' + format_double(r.eps0);
  s += ',' + format_double(r.variance);
  s += ',' + opt(r.fluct_sq);
  s += ',' + opt(r.fluct_sq_eq32);
  s += ',' + opt(r.mean_work);
  s += ',' + (r.n_steps ? std::to_string(*r.n_steps) : std::string());
  s += ',' + (r.seed ? std::to_string(*r.seed) : std::string());
  s += ',' + opt(r.elapsed_ms);
  return s;
}

inline nlohmann::json to_json(const ChargeReport& r) {
  nlohmann::json j;
  j["protocol"] = r.protocol;
  j["d"] = r.d;
  j["n_qubits"] = r.n_subsystems;
  j["temperature"] = r.temperature;
  j["delta_eps"] = r.delta_eps;
  j["eps0"] = r.eps0;
  j["variance"] = r.variance;
  auto put = [&j](const char* k, const auto& v) {
    if (v) j[k] = *v;
    else j[k] = nullptr;
  };
  put("fluct_sq", r.fluct_sq);
  put("fluct_sq_eq32", r.fluct_sq_eq32);
  put("mean_work", r.mean_work);
  put("n_steps", r.n_steps);
  put("seed", r.seed);
  put("elapsed_ms", r.elapsed_ms);
  for (const auto& [k, v] : r.extra) j[k] = v;
  return j;
}

inline void write_csv(std::ostream& os, const std::vector<ChargeReport>& rows) {
  os << csv_header << '\n';
  for (const auto& r : rows) os << csv_row(r) << '\n';
}

inline void write_json(std::ostream& os, const std::vector<ChargeReport>& rows) {
  auto arr = nlohmann::json::array();
  for (const auto& r : rows) arr.push_back(to_json(r));
  os << arr.dump(2) << '\n';
}

}  // namespace qbatt
