#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "core/autograd.hpp"
#include "core/tensor.hpp"
#include "datamodel.hpp"

namespace mduit::testing {

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.values()) v = u(rng);
  return t;
}

inline Image random_image(std::mt19937_64& rng, int h, int w) {
  return Image(random_tensor(rng, {3, h, w}));
}

inline std::vector<double> random_unit(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  double s = 0.0;
  for (double& x : v) {
    x = g(rng);
    s += x * x;
  }
  for (double& x : v) x /= std::sqrt(s);
  return v;
}

inline PoseAnnotation random_pose(std::mt19937_64& rng, double spread_m = 10.0) {
  const auto q = random_unit(rng, 4);
  std::uniform_real_distribution<double> u(-spread_m, spread_m);
  return PoseAnnotation::make({q[0], q[1], q[2], q[3]}, {u(rng), u(rng), u(rng)});
}

struct GradCheck {
  double rel_error = 0.0;
  double analytic_norm = 0.0;
};

// Compares backward() of f against central differences over every input
// element. Relative error = |g_a - g_n| / max(|g_a|, |g_n|, 1e-12), norms
// over all inputs together.
inline GradCheck check_gradients(
    const std::function<ag::Var(const std::vector<ag::Var>&)>& f,
    const std::vector<Tensor>& inputs, double eps = 1e-3) {
  std::vector<ag::Var> vars;
  for (const auto& t : inputs) vars.emplace_back(t, true);
  ag::backward(f(vars));
  std::vector<double> analytic, numeric;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      analytic.push_back(vars[k].has_grad() ? vars[k].grad()[i] : 0.0);
      auto eval = [&](double delta) {
        std::vector<ag::Var> shifted;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
          Tensor t = inputs[j];
          if (j == k) t[i] += delta;
          shifted.emplace_back(std::move(t), false);
        }
        ag::NoGradGuard guard;
        return f(shifted).item();
      };
      numeric.push_back((eval(eps) - eval(-eps)) / (2.0 * eps));
    }
  }
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  GradCheck r;
  r.analytic_norm = std::sqrt(na);
  r.rel_error = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
  return r;
}

// Weighted sum of all elements; turns any tensor output into a scalar with
// a non-trivial gradient.
inline ag::Var weighted_sum(const ag::Var& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Tensor w = random_tensor(rng, y.shape());
  return ag::make_op(
      Tensor::scalar([&] {
        double s = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * y.value()[i];
        return s;
      }()),
      {y}, [w](ag::Node& self) {
        ag::Node& p = *self.parents[0];
        for (std::size_t i = 0; i < w.size(); ++i)
          p.grad_buffer()[i] += self.grad[0] * w[i];
      });
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("mduit_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const {
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

}  // namespace mduit::testing
