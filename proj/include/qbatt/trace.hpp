#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <numbers>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "errors.hpp"
#include "states.hpp"

namespace qbatt {

inline constexpr std::size_t default_trace_dim_cap = 4096;
inline constexpr double angle_slack = 1e-12;

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// 0-based flat indices; theta in [0, pi/2].
struct GivensStep {
  std::size_t a = 0;
  std::size_t b = 1;
  double theta = 0.0;
};

// map[src] = dst, 0-based.
struct PermStep {
  std::vector<std::size_t> map;
};

using RotationStep = std::variant<GivensStep, PermStep>;

namespace detail {

inline void check_bijection(const std::vector<std::size_t>& map, std::size_t dim) {
  if (map.size() != dim)
    throw ValidationError("permutation length " + std::to_string(map.size()) +
                          " does not match dimension " + std::to_string(dim));
  std::vector<char> seen(dim, 0);
  for (std::size_t dst : map) {
    if (dst >= dim || seen[dst]) throw ValidationError("permutation is not a bijection");
    seen[dst] = 1;
  }
}

inline bool is_identity(const std::vector<std::size_t>& map) {
  for (std::size_t i = 0; i < map.size(); ++i)
    if (map[i] != i) return false;
  return true;
}

// Left-multiplies rows a and b of u by G(a,b,theta).
template <class Mat>
inline void rotate_rows(Mat& u, std::size_t a, std::size_t b, double c, double s) {
  const auto n = u.cols();
  for (Eigen::Index k = 0; k < n; ++k) {
    const double x = u(static_cast<Eigen::Index>(a), k);
    const double y = u(static_cast<Eigen::Index>(b), k);
    u(static_cast<Eigen::Index>(a), k) = c * x - s * y;
    u(static_cast<Eigen::Index>(b), k) = s * x + c * y;
  }
}

struct Moments {
  double mean_work = 0.0;  // units of omega
  double fluct_sq = 0.0;   // units of omega^2, not yet scaled
};

// Eq. (4)-(6) with transition(n|m) = u(n,m)^2, levels in units of omega.
template <class Mat>
inline Moments tpm_moments(const Mat& u, const std::vector<double>& p, const std::vector<int>& lv) {
  const auto dim = static_cast<Eigen::Index>(p.size());
  double first = 0.0;
  double second = 0.0;
  for (Eigen::Index n = 0; n < dim; ++n) {
    for (Eigen::Index m = 0; m < dim; ++m) {
      const double pm = p[static_cast<std::size_t>(m)];
      if (pm == 0.0) continue;
      const double t = u(n, m) * u(n, m) * pm;
      const double w = lv[static_cast<std::size_t>(n)] - lv[static_cast<std::size_t>(m)];
      first += t * w;
      second += t * w * w;
    }
  }
  return {first, second - first * first};
}

}  // namespace detail

// A distribution together with the composed orthogonal matrix of every
// elementary step applied to it.
class TraceState {
 public:
  explicit TraceState(Distribution initial, std::size_t dim_cap = default_trace_dim_cap)
      : initial_(std::move(initial)), cur_(initial_.weights()) {
    const auto dim = initial_.size();
    if (dim > dim_cap)
      throw SizeError("trace dimension " + std::to_string(dim) + " exceeds cap " +
                      std::to_string(dim_cap));
    u_ = Matrix::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  }

  const Distribution& initial() const { return initial_; }
  const Spectrum& spectrum() const { return initial_.spectrum(); }
  const std::vector<double>& weights() const { return cur_; }
  Distribution dist() const { return Distribution(initial_.spectrum_ptr(), cur_); }
  const Matrix& matrix() const { return u_; }
  const std::vector<RotationStep>& steps() const { return steps_; }
  std::size_t dim() const { return cur_.size(); }

  double mean_eps() const {
    const auto& lv = spectrum().level_table();
    double e = 0.0;
    for (std::size_t s = 0; s < cur_.size(); ++s) e += lv[s] * cur_[s];
    return e;
  }

  TraceState& apply_givens(std::size_t a, std::size_t b, double theta) {
    if (a == b) throw ValidationError("givens indices must differ");
    if (a >= dim() || b >= dim()) throw ValidationError("givens index out of range");
    if (!(theta >= -angle_slack && theta <= std::numbers::pi / 2 + angle_slack))
      throw RangeError("givens angle outside [0, pi/2]");
    theta = std::clamp(theta, 0.0, std::numbers::pi / 2);
    detail::rotate_rows(u_, a, b, std::cos(theta), std::sin(theta));
    cur_[a] = row_weight(a);
    cur_[b] = row_weight(b);
    steps_.push_back(GivensStep{a, b, theta});
    return *this;
  }

  TraceState& apply_permutation(const std::vector<std::size_t>& map) {
    detail::check_bijection(map, dim());
    Matrix next(u_.rows(), u_.cols());
    std::vector<double> w(cur_.size());
    for (std::size_t src = 0; src < map.size(); ++src) {
      next.row(static_cast<Eigen::Index>(map[src])) = u_.row(static_cast<Eigen::Index>(src));
      w[map[src]] = cur_[src];
    }
    u_.swap(next);
    cur_.swap(w);
    steps_.push_back(PermStep{map});
    return *this;
  }

  TraceState& apply(const RotationStep& step) {
    if (const auto* g = std::get_if<GivensStep>(&step)) return apply_givens(g->a, g->b, g->theta);
    return apply_permutation(std::get<PermStep>(step).map);
  }

 private:
  double row_weight(std::size_t r) const {
    const auto& p0 = initial_.weights();
    double acc = 0.0;
    for (std::size_t k = 0; k < p0.size(); ++k) {
      const double x = u_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
      acc += x * x * p0[k];
    }
    return acc;
  }

  Distribution initial_;
  std::vector<double> cur_;
  Matrix u_;
  std::vector<RotationStep> steps_;
};

struct TpmStats {
  double mean_work = 0.0;  // units of omega
  double fluct_sq = 0.0;   // units of omega^2
  Matrix transition;       // transition(n, m) = p(m -> n)
};

namespace detail {

inline void check_initial(const Distribution& initial, const TraceState& t) {
  const auto& a = initial.weights();
  const auto& b = t.initial().weights();
  if (a.size() != b.size() || initial.spectrum().d() != t.spectrum().d() ||
      initial.spectrum().n_subsystems() != t.spectrum().n_subsystems())
    throw ValidationError("initial distribution does not match trace");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::abs(a[i] - b[i]) > 1e-15) throw ValidationError("initial distribution does not match trace");
}

}  // namespace detail

// Mean work and fluctuation without materializing the transition matrix.
inline TpmStats tpm_moments(const Distribution& initial, const TraceState& t) {
  detail::check_initial(initial, t);
  const auto mo = detail::tpm_moments(t.matrix(), initial.weights(), initial.spectrum().level_table());
  const double w = initial.spectrum().omega();
  return {mo.mean_work, w * w * mo.fluct_sq, Matrix()};
}

inline TpmStats tpm_stats(const Distribution& initial, const TraceState& t) {
  auto out = tpm_moments(initial, t);
  out.transition = t.matrix().cwiseProduct(t.matrix());
  return out;
}

// (dW)^2 = V(rho) + V(tau) - 2 (Tr[H~ H tau] - E(tau) E(rho)), H~ = U^T H U.
inline double fluct_via_identity(const Distribution& initial, const TraceState& t) {
  detail::check_initial(initial, t);
  const auto& u = t.matrix();
  const auto& lv = initial.spectrum().level_table();
  const auto& p = initial.weights();
  const auto dim = static_cast<Eigen::Index>(p.size());
  Eigen::VectorXd h(dim);
  for (Eigen::Index i = 0; i < dim; ++i) h(i) = lv[static_cast<std::size_t>(i)];
  // Only the diagonal of H~ enters the trace against a diagonal tau.
  double cross = 0.0;
  for (Eigen::Index m = 0; m < dim; ++m) {
    const double pm = p[static_cast<std::size_t>(m)];
    if (pm == 0.0) continue;
    const double htilde_mm = u.col(m).cwiseProduct(u.col(m)).dot(h);
    cross += pm * h(m) * htilde_mm;
  }
  const Distribution fin = t.dist();
  const double e_tau = mean_energy(initial);
  const double e_rho = mean_energy(fin);
  const double w = initial.spectrum().omega();
  return variance(fin) + variance(initial) - 2.0 * w * w * (cross - e_tau * e_rho);
}

// JSON lines with 1-based indices.
inline void write_trace_jsonl(std::ostream& os, const std::vector<RotationStep>& steps) {
  for (const auto& st : steps) {
    nlohmann::json j;
    if (const auto* g = std::get_if<GivensStep>(&st)) {
      j["op"] = "givens";
      j["a"] = g->a + 1;
      j["b"] = g->b + 1;
      j["theta"] = g->theta;
    } else {
      j["op"] = "perm";
      auto m = nlohmann::json::array();
      for (std::size_t dst : std::get<PermStep>(st).map) m.push_back(dst + 1);
      j["map"] = std::move(m);
    }
    os << j.dump() << '\n';
  }
}

inline std::vector<RotationStep> read_trace_jsonl(std::istream& is) {
  std::vector<RotationStep> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      const std::string op = j.at("op").get<std::string>();
      if (op == "givens") {
        const auto a = j.at("a").get<std::size_t>();
        const auto b = j.at("b").get<std::size_t>();
        if (a < 1 || b < 1) throw ValidationError("trace indices are 1-based");
        out.push_back(GivensStep{a - 1, b - 1, j.at("theta").get<double>()});
      } else if (op == "perm") {
        PermStep p;
        for (const auto& x : j.at("map")) {
          const auto v = x.get<std::size_t>();
          if (v < 1) throw ValidationError("trace indices are 1-based");
          p.map.push_back(v - 1);
        }
        out.push_back(std::move(p));
      } else {
        throw ValidationError("unknown trace op '" + op + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("bad trace line: ") + e.what());
    }
  }
  return out;
}

}  // namespace qbatt
