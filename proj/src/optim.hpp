#pragma once

#include <map>
#include <string>

#include "core/tensor.hpp"
#include "networks.hpp"

namespace mduit {

// Adam with one moment pair per parameter and one step counter per
// parameter collection.
class Adam {
 public:
  Adam(double beta1, double beta2, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Applies the accumulated gradients of `params`. Parameters that received
  // no gradient are left untouched, moments included.
  void step(ParamCollection& params, double lr);

  int steps(const std::string& collection) const;
  std::map<std::string, int>& step_counts() { return steps_; }
  std::map<std::string, Tensor>& first_moments() { return m_; }
  std::map<std::string, Tensor>& second_moments() { return v_; }
  const std::map<std::string, int>& step_counts() const { return steps_; }
  const std::map<std::string, Tensor>& first_moments() const { return m_; }
  const std::map<std::string, Tensor>& second_moments() const { return v_; }

 private:
  double beta1_, beta2_, eps_;
  std::map<std::string, int> steps_;
  std::map<std::string, Tensor> m_, v_;
};

}  // namespace mduit
