#pragma once

#include <string>
#include <vector>

#include "quadswarm/common.hpp"
#include "quadswarm/nn/ops.hpp"

namespace quadswarm::nn {

/// A named trainable array with its gradient accumulator.
struct Parameter {
  std::string name;
  MatX value;
  MatX grad;

  Parameter() = default;
  Parameter(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(MatX::Zero(rows, cols)), grad(MatX::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
};

using ParameterList = std::vector<Parameter*>;

void zero_grads(const ParameterList& params);
std::size_t parameter_count(const ParameterList& params);

/// Xavier/Glorot uniform: U[-a, a], a = sqrt(6 / (fan_in + fan_out)).
MatX xavier_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng);
inline double xavier_bound(Eigen::Index fan_in, Eigen::Index fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

enum class Activation { Tanh, Identity };

class Dense {
 public:
  Dense() = default;
  Dense(const std::string& name, Eigen::Index in, Eigen::Index out, Activation act);

  MatX forward(const MatX& x) const;
  /// Accumulates parameter gradients. Returns dL/dx when `need_input_grad`.
  MatX backward(const MatX& dy, const MatX& x, const MatX& y, bool need_input_grad);

  void init(Rng& rng);
  void collect(ParameterList& out) { out.push_back(&weight_); out.push_back(&bias_); }

  Eigen::Index in_features() const { return weight_.value.rows(); }
  Eigen::Index out_features() const { return weight_.value.cols(); }
  Activation activation() const { return act_; }
  const Parameter& weight() const { return weight_; }
  const Parameter& bias() const { return bias_; }

 private:
  Parameter weight_;  // in x out
  Parameter bias_;    // 1 x out
  Activation act_ = Activation::Tanh;
};

/// Stack of dense layers. `cache` stores every layer's input plus the final output.
class Mlp {
 public:
  struct Cache {
    std::vector<MatX> activations;
  };

  Mlp() = default;
  /// widths = {in, h1, ..., out}; tanh after every layer unless `linear_last`.
  Mlp(const std::string& name, const std::vector<Eigen::Index>& widths, bool linear_last = false);

  MatX forward(const MatX& x, Cache* cache = nullptr) const;
  MatX backward(const MatX& dy, const Cache& cache, bool need_input_grad);

  void init(Rng& rng);
  void collect(ParameterList& out);

  Eigen::Index in_features() const { return layers_.front().in_features(); }
  Eigen::Index out_features() const { return layers_.back().out_features(); }
  const std::vector<Dense>& layers() const { return layers_; }

 private:
  std::vector<Dense> layers_;
};

}  // namespace quadswarm::nn
