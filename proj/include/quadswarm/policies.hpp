#pragma once

#include <span>
#include <string>
#include <vector>

#include "quadswarm/env.hpp"
#include "quadswarm/nn/checkpoint.hpp"
#include "quadswarm/nn/layers.hpp"

namespace quadswarm {

class KeyValueConfig;

enum class EncoderKind { Blind, ConcatMlp, DeepSets, Attention };

std::string to_string(EncoderKind kind);
EncoderKind parse_encoder_kind(const std::string& name);

struct PolicyConfig {
  EncoderKind encoder = EncoderKind::Attention;
  int self_hidden = 256;
  int neighbor_hidden = 256;
  bool deployment_variant = false;  // deep sets, 16 x 8
  bool obstacle_enabled = false;
  int num_neighbors = 6;            // K; fixes the concat-mlp input width
  double init_log_sigma = -0.6931471805599453;  // log(0.5)
  bool attention_empty_fallback = false;        // K = 0 yields a zero embedding

  /// Throws UsageError on inconsistent settings.
  void validate() const;

  static PolicyConfig deployment(int num_neighbors);
  /// Reads encoder settings; K and the obstacle flag come from the caller.
  static PolicyConfig from_config(KeyValueConfig& cfg, int num_neighbors, bool obstacle_enabled);
  void to_config(KeyValueConfig& cfg) const;
};

/// A batch of observations in network layout.
struct ObsBatch {
  MatX self;       // B x 18
  MatX neighbors;  // B*K x 6, K consecutive rows per sample
  MatX obstacle;   // B x 7, or B x 0 without an obstacle
  Eigen::Index neighbor_count = 0;

  Eigen::Index size() const { return self.rows(); }

  static ObsBatch from(std::span<const Observation> observations);
  /// Rows `indices` of this batch, in that order.
  ObsBatch select(std::span<const Eigen::Index> indices) const;
};

/// Self encoder, optional neighborhood and obstacle encoders, and a linear
/// head over the concatenated embeddings.
class EncoderNetwork {
 public:
  struct Cache {
    MatX self_in;
    nn::Mlp::Cache self_cache;
    MatX self_emb;
    // deep sets
    nn::Mlp::Cache set_cache;
    // attention
    MatX attn_in;
    nn::Mlp::Cache elem_cache;
    MatX elem;
    MatX score_in;
    nn::Mlp::Cache score_cache;
    MatX weights;
    nn::Mlp::Cache value_cache;
    MatX values;

    MatX neighbor_emb;
    nn::Mlp::Cache obstacle_cache;
    MatX obstacle_emb;
    MatX head_in;
    MatX out;
  };

  EncoderNetwork() = default;
  EncoderNetwork(const std::string& name, const PolicyConfig& config, int output_dim);

  MatX forward(const ObsBatch& obs, Cache* cache = nullptr) const;
  /// Accumulates parameter gradients for dL/d(out).
  void backward(const MatX& d_out, const ObsBatch& obs, const Cache& cache);

  /// Softmax weights (B*K x 1) of the attention encoder.
  MatX attention_weights(const ObsBatch& obs) const;

  void init(Rng& rng);
  void collect(nn::ParameterList& out);

  const PolicyConfig& config() const { return config_; }
  Eigen::Index head_input_width() const { return head_.in_features(); }

 private:
  void check_schema(const ObsBatch& obs) const;
  MatX self_input(const ObsBatch& obs) const;

  PolicyConfig config_;
  nn::Mlp self_enc_;
  nn::Mlp set_enc_;     // deep sets psi_eta
  nn::Mlp elem_enc_;    // attention psi_e
  nn::Mlp score_enc_;   // attention psi_alpha
  nn::Mlp value_enc_;   // attention psi_h
  nn::Mlp obstacle_enc_;
  nn::Dense head_;
};

/// Diagonal Gaussian over the 4 raw actions with one state-independent log sigma.
class GaussianPolicy {
 public:
  GaussianPolicy() = default;
  explicit GaussianPolicy(const PolicyConfig& config);

  MatX mean(const ObsBatch& obs, EncoderNetwork::Cache* cache = nullptr) const {
    return net_.forward(obs, cache);
  }
  double log_sigma() const { return log_sigma_.value(0, 0); }
  double sigma() const { return std::exp(log_sigma()); }

  /// d_mean: B x 4; d_log_sigma is added to the log sigma gradient.
  void backward(const MatX& d_mean, double d_log_sigma, const ObsBatch& obs,
                const EncoderNetwork::Cache& cache);

  void init(Rng& rng);
  void collect(nn::ParameterList& out);

  EncoderNetwork& network() { return net_; }
  const EncoderNetwork& network() const { return net_; }
  const PolicyConfig& config() const { return net_.config(); }

 private:
  EncoderNetwork net_;
  nn::Parameter log_sigma_;
};

/// Same architecture with a scalar head and its own parameters.
class ValueNetwork {
 public:
  ValueNetwork() = default;
  explicit ValueNetwork(const PolicyConfig& config);

  /// B x 1
  MatX value(const ObsBatch& obs, EncoderNetwork::Cache* cache = nullptr) const {
    return net_.forward(obs, cache);
  }
  void backward(const MatX& d_value, const ObsBatch& obs, const EncoderNetwork::Cache& cache) {
    net_.backward(d_value, obs, cache);
  }
  void init(Rng& rng) { net_.init(rng); }
  void collect(nn::ParameterList& out) { net_.collect(out); }

 private:
  EncoderNetwork net_;
};

Vec4 sample_action(const Vec4& mean, double sigma, Rng& rng);
double gaussian_log_prob(const Vec4& action, const Vec4& mean, double log_sigma);
double gaussian_entropy(double log_sigma, int dim = 4);

/// Policy plus critic; the unit that is checkpointed.
struct ActorCritic {
  PolicyConfig config;
  GaussianPolicy policy;
  ValueNetwork value;

  ActorCritic() = default;
  explicit ActorCritic(const PolicyConfig& cfg) : config(cfg), policy(cfg), value(cfg) {}

  void init(Rng& rng);
  nn::ParameterList parameters();

  void store(nn::Checkpoint& ck);
  /// Throws UsageError when an array is missing or has the wrong shape.
  void restore(const nn::Checkpoint& ck);
};

/// Flat text table of the policy weights: one `name rows cols v...` line per array.
std::string export_weights_table(GaussianPolicy& policy);

}  // namespace quadswarm
