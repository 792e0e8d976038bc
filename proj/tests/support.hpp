#pragma once

#include <algorithm>
#include <bit>
#include <ctime>
#include <span>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "seqrl/ops.hpp"
#include "seqrl/params.hpp"
#include "seqrl/rng.hpp"
#include "seqrl/tensor.hpp"
#include "seqrl/trajstore.hpp"

namespace seqrl::test {

inline std::vector<double> uniform_values(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = lo + (hi - lo) * rng.uniform();
  return v;
}

inline Tensor random_tensor(const Shape& shape, Rng& rng, bool requires_grad = true, double lo = -1.0,
                            double hi = 1.0) {
  return Tensor(shape, uniform_values(shape_numel(shape), rng, lo, hi), requires_grad);
}

/// Values bounded away from zero in magnitude, for ops with a kink at 0.
inline Tensor away_from_zero(const Shape& shape, Rng& rng, double margin = 0.1) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) {
    const double m = margin + (1.0 - margin) * rng.uniform();
    x = rng.uniform() < 0.5 ? -m : m;
  }
  return Tensor(shape, std::move(v), true);
}

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / denom;
}

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

/// Central differences with step h against one backward pass of `loss`.
/// At most `per_tensor` coordinates of each input are probed (0 = all).
inline GradCheckResult gradient_check(const std::function<Tensor()>& loss, std::vector<Tensor> inputs, Rng& rng,
                                      double h = 1e-5, std::size_t per_tensor = 0) {
  for (auto& t : inputs) t.zero_grad();
  loss().backward();
  GradCheckResult result;
  for (auto& t : inputs) {
    const std::vector<double> analytic =
        t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end()) : std::vector<double>(t.numel(), 0.0);
    std::vector<std::size_t> coords(t.numel());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (per_tensor != 0 && coords.size() > per_tensor) {
      for (std::size_t i = 0; i < per_tensor; ++i) std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
      coords.resize(per_tensor);
    }
    for (std::size_t i : coords) {
      const double original = t.data()[i];
      t.data_mut()[i] = original + h;
      double plus, minus;
      {
        NoGradGuard guard;
        plus = loss().item();
      }
      t.data_mut()[i] = original - h;
      {
        NoGradGuard guard;
        minus = loss().item();
      }
      t.data_mut()[i] = original;
      const double numeric = (plus - minus) / (2.0 * h);
      result.max_relative_error = std::max(result.max_relative_error, relative_error(analytic[i], numeric));
      ++result.checked;
    }
  }
  return result;
}

/// Weighted sum of all entries with fixed random weights, so every output
/// element carries a distinct gradient.
inline Tensor probe_loss(const Tensor& y, const std::vector<double>& weights) {
  return sum(mul(y, Tensor(y.shape(), weights)));
}

inline std::vector<double> probe_weights(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  return uniform_values(y.numel(), rng);
}

inline bool bit_identical(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](double x, double y) {
           return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
         });
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    Rng rng(std::hash<std::string>{}(tag) ^ static_cast<std::uint64_t>(std::time(nullptr)));
    path_ = std::filesystem::temp_directory_path() / ("seqrl-" + tag + "-" + std::to_string(rng() % 1000000007));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

/// Two-return toy: length-1 trajectories over random 1x2x2 binary frames;
/// action 1 earns 1, action 0 earns 0.
inline Dataset two_return_dataset(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.shape = {1, 2, 2};
  d.action_count = 2;
  d.env_tag = "toy";
  for (std::size_t i = 0; i < count; ++i) {
    Trajectory t;
    for (std::size_t j = 0; j < 4; ++j) t.observations.push_back(static_cast<double>(rng.below(2)));
    const std::size_t a = i % 2;
    t.actions.push_back(a);
    t.rewards.push_back(static_cast<double>(a));
    d.trajectories.push_back(std::move(t));
  }
  return d;
}

}  // namespace seqrl::test
