#include "optim.hpp"

#include <cmath>

namespace mduit {

void Adam::step(ParamCollection& params, double lr) {
  const int t = ++steps_[params.name()];
  const double c1 = 1.0 - std::pow(beta1_, t);
  const double c2 = 1.0 - std::pow(beta2_, t);
  for (auto& p : params.entries()) {
    Tensor& value = p.var.mutable_value();
    auto [mit, m_new] = m_.try_emplace(p.name, value.shape());
    auto [vit, v_new] = v_.try_emplace(p.name, value.shape());
    if (!p.var.has_grad()) continue;
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    const Tensor& g = p.var.grad();
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

int Adam::steps(const std::string& collection) const {
  auto it = steps_.find(collection);
  return it == steps_.end() ? 0 : it->second;
}

}  // namespace mduit
