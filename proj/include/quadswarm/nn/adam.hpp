#pragma once

#include <vector>

#include "quadswarm/nn/layers.hpp"

namespace quadswarm::nn {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-6;
  double grad_norm_clip = 5.0;  // <= 0 disables clipping
};

/// First and second moment estimates, one pair per parameter, in the order
/// of the parameter list they were created for.
struct AdamState {
  std::vector<MatX> first_moment;
  std::vector<MatX> second_moment;
  long step = 0;

  static AdamState for_parameters(const ParameterList& params);
};

struct AdamStepInfo {
  double grad_norm = 0.0;   // before clipping
  double clip_scale = 1.0;  // factor applied to every gradient
};

double global_grad_norm(const ParameterList& params);

/// Clips the global gradient norm, then applies a bias-corrected Adam update.
/// A non-finite gradient leaves parameters and state untouched and throws
/// NumericalError.
AdamStepInfo adam_step(const ParameterList& params, AdamState& state, const AdamConfig& config);

}  // namespace quadswarm::nn
