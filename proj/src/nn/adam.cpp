#include "quadswarm/nn/adam.hpp"

#include <cmath>

namespace quadswarm::nn {

AdamState AdamState::for_parameters(const ParameterList& params) {
  AdamState s;
  for (const auto* p : params) {
    s.first_moment.push_back(MatX::Zero(p->value.rows(), p->value.cols()));
    s.second_moment.push_back(MatX::Zero(p->value.rows(), p->value.cols()));
  }
  return s;
}

double global_grad_norm(const ParameterList& params) {
  double sq = 0.0;
  for (const auto* p : params) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

AdamStepInfo adam_step(const ParameterList& params, AdamState& state, const AdamConfig& config) {
  if (state.first_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state does not match parameter list");
  }
  AdamStepInfo info;
  info.grad_norm = global_grad_norm(params);
  if (!std::isfinite(info.grad_norm)) {
    throw NumericalError("adam_step: non-finite gradient, update skipped");
  }
  if (config.grad_norm_clip > 0.0 && info.grad_norm > config.grad_norm_clip) {
    info.clip_scale = config.grad_norm_clip / info.grad_norm;
  }

  ++state.step;
  const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    MatX& m = state.first_moment[i];
    MatX& v = state.second_moment[i];
    const MatX g = p.grad * info.clip_scale;
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseAbs2();
    p.value.array() -= config.learning_rate * (m.array() / correction1) /
                       ((v.array() / correction2).sqrt() + config.epsilon);
  }
  return info;
}

}  // namespace quadswarm::nn
