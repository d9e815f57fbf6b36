#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "chronoalign/ad/graph.hpp"

namespace chronoalign::ad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moments are kept parallel to the parameter list handed to adam_step; the
/// list order must be stable across calls.
struct AdamState {
  explicit AdamState(AdamConfig c = {});

  AdamConfig config;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update from the gradients stored in each Parameter.
void adam_step(std::span<Parameter* const> params, AdamState& state);

/// Rescales all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<Parameter* const> params, double max_norm);

void zero_grads(std::span<Parameter* const> params);

}  // namespace chronoalign::ad
