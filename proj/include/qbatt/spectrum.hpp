#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "errors.hpp"

namespace qbatt {

inline constexpr std::size_t default_dim_cap = std::size_t{1} << 20;

// 1-based flat eigenstate label, as printed in reports.
struct FlatIndex {
  std::size_t s = 1;
  friend bool operator==(FlatIndex, FlatIndex) = default;
};

// Level m with a 1-based slot inside it.
struct LevelSlot {
  int m = 0;
  std::size_t slot = 1;
  friend bool operator==(LevelSlot, LevelSlot) = default;
};

struct Level {
  int m = 0;
  std::size_t g = 1;
};

// N identical qudits with equally spaced levels E = m*omega.
class Spectrum {
 public:
  Spectrum(int d, int n_subsystems, double omega = 1.0,
           std::size_t dim_cap = default_dim_cap)
      : d_(d), n_(n_subsystems), omega_(omega) {
    if (d < 2) throw ValidationError("d must be >= 2");
    if (n_subsystems < 1) throw ValidationError("n_subsystems must be >= 1");
    if (!(omega > 0.0)) throw ValidationError("omega must be positive");
    std::size_t dim = 1;
    for (int i = 0; i < n_subsystems; ++i) {
      if (dim > dim_cap / static_cast<std::size_t>(d))
        throw SizeError("dimension d^N exceeds cap " + std::to_string(dim_cap));
      dim *= static_cast<std::size_t>(d);
    }
    dim_ = dim;

    // N-fold convolution of a length-d ones vector.
    std::vector<std::size_t> g{1};
    for (int i = 0; i < n_subsystems; ++i) {
      std::vector<std::size_t> next(g.size() + static_cast<std::size_t>(d) - 1, 0);
      for (std::size_t a = 0; a < g.size(); ++a)
        for (int b = 0; b < d; ++b) next[a + static_cast<std::size_t>(b)] += g[a];
      g = std::move(next);
    }
    levels_.reserve(g.size());
    starts_.reserve(g.size() + 1);
    std::size_t acc = 0;
    for (std::size_t m = 0; m < g.size(); ++m) {
      levels_.push_back({static_cast<int>(m), g[m]});
      starts_.push_back(acc);
      acc += g[m];
    }
    starts_.push_back(acc);
    level_of_.resize(dim_);
    for (std::size_t m = 0; m < g.size(); ++m)
      for (std::size_t s = starts_[m]; s < starts_[m + 1]; ++s) level_of_[s] = static_cast<int>(m);
  }

  int d() const { return d_; }
  int n_subsystems() const { return n_; }
  double omega() const { return omega_; }
  std::size_t dim() const { return dim_; }
  int max_level() const { return n_ * (d_ - 1); }
  const std::vector<Level>& levels() const { return levels_; }

  std::size_t degeneracy(int m) const {
    check_level(m);
    return levels_[static_cast<std::size_t>(m)].g;
  }
  // First 0-based flat index of level m.
  std::size_t level_start(int m) const {
    check_level(m);
    return starts_[static_cast<std::size_t>(m)];
  }
  // Level of a 0-based flat index.
  int level_of(std::size_t s0) const { return level_of_[s0]; }
  double energy(std::size_t s0) const { return omega_ * level_of_[s0]; }
  const std::vector<int>& level_table() const { return level_of_; }

  FlatIndex flatten(int m, std::size_t slot) const {
    check_level(m);
    if (slot < 1 || slot > degeneracy(m))
      throw ValidationError("slot " + std::to_string(slot) + " out of range for level " +
                                    std::to_string(m));
    return {starts_[static_cast<std::size_t>(m)] + slot};
  }

  LevelSlot unflatten(FlatIndex s) const {
    if (s.s < 1 || s.s > dim_)
      throw ValidationError("flat index " + std::to_string(s.s) + " out of range");
    const int m = level_of_[s.s - 1];
    return {m, s.s - starts_[static_cast<std::size_t>(m)]};
  }

 private:
  void check_level(int m) const {
    if (m < 0 || m > max_level())
      throw ValidationError("level " + std::to_string(m) + " out of range");
  }

  int d_;
  int n_;
  double omega_;
  std::size_t dim_ = 1;
  std::vector<Level> levels_;
  std::vector<std::size_t> starts_;
  std::vector<int> level_of_;
};

using SpectrumPtr = std::shared_ptr<const Spectrum>;

inline SpectrumPtr build_spectrum(int d, int n_subsystems, double omega = 1.0,
                                  std::size_t dim_cap = default_dim_cap) {
  return std::make_shared<const Spectrum>(d, n_subsystems, omega, dim_cap);
}

}  // namespace qbatt
