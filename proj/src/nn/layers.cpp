#include "quadswarm/nn/layers.hpp"

namespace quadswarm::nn {

void zero_grads(const ParameterList& params) {
  for (auto* p : params) p->zero_grad();
}

std::size_t parameter_count(const ParameterList& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += static_cast<std::size_t>(p->value.size());
  return n;
}

MatX xavier_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double a = xavier_bound(fan_in, fan_out);
  std::uniform_real_distribution<double> dist(-a, a);
  MatX w(fan_in, fan_out);
  // Fill in row-major order so the draw sequence does not depend on storage order.
  for (Eigen::Index r = 0; r < fan_in; ++r) {
    for (Eigen::Index c = 0; c < fan_out; ++c) w(r, c) = dist(rng);
  }
  return w;
}

Dense::Dense(const std::string& name, Eigen::Index in, Eigen::Index out, Activation act)
    : weight_(name + ".weight", in, out), bias_(name + ".bias", 1, out), act_(act) {}

MatX Dense::forward(const MatX& x) const {
  const RowVector<double> b = bias_.value.row(0);
  if (act_ == Activation::Tanh) return linear_tanh_forward<double>(x, weight_.value, b);
  return linear_forward<double>(x, weight_.value, b);
}

MatX Dense::backward(const MatX& dy, const MatX& x, const MatX& y, bool need_input_grad) {
  MatX dx;
  RowVector<double> db = RowVector<double>::Zero(bias_.value.cols());
  MatX* dx_ptr = need_input_grad ? &dx : nullptr;
  if (act_ == Activation::Tanh) {
    linear_tanh_backward<double>(dy, x, y, weight_.value, dx_ptr, weight_.grad, db);
  } else {
    linear_backward<double>(dy, x, weight_.value, dx_ptr, weight_.grad, db);
  }
  bias_.grad.row(0) += db;
  return dx;
}

void Dense::init(Rng& rng) {
  weight_.value = xavier_uniform(weight_.value.rows(), weight_.value.cols(), rng);
  bias_.value.setZero();
}

Mlp::Mlp(const std::string& name, const std::vector<Eigen::Index>& widths, bool linear_last) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp: need at least input and output widths");
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const bool last = l + 2 == widths.size();
    layers_.emplace_back(name + "." + std::to_string(l), widths[l], widths[l + 1],
                         last && linear_last ? Activation::Identity : Activation::Tanh);
  }
}

MatX Mlp::forward(const MatX& x, Cache* cache) const {
  if (cache != nullptr) {
    cache->activations.clear();
    cache->activations.reserve(layers_.size() + 1);
    cache->activations.push_back(x);
  }
  MatX h = x;
  for (const auto& layer : layers_) {
    h = layer.forward(h);
    if (cache != nullptr) cache->activations.push_back(h);
  }
  return h;
}

MatX Mlp::backward(const MatX& dy, const Cache& cache, bool need_input_grad) {
  MatX grad = dy;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const bool want_dx = l > 0 || need_input_grad;
    grad = layers_[l].backward(grad, cache.activations[l], cache.activations[l + 1], want_dx);
  }
  return grad;
}

void Mlp::init(Rng& rng) {
  for (auto& layer : layers_) layer.init(rng);
}

void Mlp::collect(ParameterList& out) {
  for (auto& layer : layers_) layer.collect(out);
}

}  // namespace quadswarm::nn
