#include "chronoalign/ad/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "chronoalign/error.hpp"

namespace chronoalign::ad {

AdamState::AdamState(AdamConfig c) : config(c) {
  if (c.beta1 < 0.0 || c.beta1 >= 1.0 || c.beta2 < 0.0 || c.beta2 >= 1.0)
    throw ConfigError("Adam betas must lie in [0, 1)");
}

void adam_step(std::span<Parameter* const> params, AdamState& state) {
  if (state.m.empty()) {
    for (const Parameter* p : params) {
      state.m.emplace_back(p->value.rows(), p->value.cols());
      state.v.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: parameter list changed");

  ++state.step;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    if (!m.same_shape(p.value) || !p.grad.same_shape(p.value))
      throw std::invalid_argument("adam_step: shape mismatch for " + p.name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double gi = p.grad[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params)
    for (double g : p->grad.values()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (Parameter* p : params)
      for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] *= s;
  }
  return norm;
}

void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

}  // namespace chronoalign::ad
