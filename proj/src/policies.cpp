#include "quadswarm/policies.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "quadswarm/config.hpp"

namespace quadswarm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

using Widths = std::vector<Eigen::Index>;

}  // namespace

std::string to_string(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::Blind: return "blind";
    case EncoderKind::ConcatMlp: return "concat-mlp";
    case EncoderKind::DeepSets: return "deepsets";
    case EncoderKind::Attention: return "attention";
  }
  return "unknown";
}

EncoderKind parse_encoder_kind(const std::string& name) {
  for (auto k : {EncoderKind::Blind, EncoderKind::ConcatMlp, EncoderKind::DeepSets,
                 EncoderKind::Attention}) {
    if (to_string(k) == name) return k;
  }
  throw UsageError("unknown encoder '" + name + "' (blind, concat-mlp, deepsets, attention)");
}

void PolicyConfig::validate() const {
  if (self_hidden < 1 || neighbor_hidden < 1) throw UsageError("hidden widths must be positive");
  if (num_neighbors < 0) throw UsageError("num_neighbors must be non-negative");
  if (deployment_variant &&
      (encoder != EncoderKind::DeepSets || self_hidden != 16 || neighbor_hidden != 8)) {
    throw UsageError("deployment_variant requires the deepsets encoder with 16 x 8 hidden units");
  }
  if (encoder == EncoderKind::Attention && num_neighbors == 0 && !attention_empty_fallback) {
    throw UsageError("attention encoder needs at least one neighbor (or attention_empty_fallback)");
  }
  if (!std::isfinite(init_log_sigma)) throw UsageError("init_log_sigma must be finite");
}

PolicyConfig PolicyConfig::deployment(int num_neighbors) {
  PolicyConfig c;
  c.encoder = EncoderKind::DeepSets;
  c.self_hidden = 16;
  c.neighbor_hidden = 8;
  c.deployment_variant = true;
  c.num_neighbors = num_neighbors;
  return c;
}

PolicyConfig PolicyConfig::from_config(KeyValueConfig& cfg, int num_neighbors,
                                       bool obstacle_enabled) {
  PolicyConfig c;
  c.deployment_variant = cfg.get_bool("deployment_variant", false);
  if (c.deployment_variant) c = deployment(num_neighbors);
  c.encoder = parse_encoder_kind(cfg.get_string("encoder", to_string(c.encoder)));
  c.self_hidden = static_cast<int>(cfg.get_int("self_hidden_units", c.self_hidden));
  c.neighbor_hidden = static_cast<int>(cfg.get_int("neighbor_hidden_units", c.neighbor_hidden));
  c.init_log_sigma = cfg.get_double("init_log_sigma", c.init_log_sigma);
  c.attention_empty_fallback = cfg.get_bool("attention_empty_fallback", c.attention_empty_fallback);
  c.num_neighbors = num_neighbors;
  c.obstacle_enabled = obstacle_enabled;
  c.validate();
  return c;
}

void PolicyConfig::to_config(KeyValueConfig& cfg) const {
  cfg.put_bool("deployment_variant", deployment_variant);
  cfg.put_string("encoder", to_string(encoder));
  cfg.put_int("self_hidden_units", self_hidden);
  cfg.put_int("neighbor_hidden_units", neighbor_hidden);
  cfg.put_double("init_log_sigma", init_log_sigma);
  cfg.put_bool("attention_empty_fallback", attention_empty_fallback);
  cfg.put_int("num_neighbors", num_neighbors);
  cfg.put_bool("obstacles", obstacle_enabled);
}

ObsBatch ObsBatch::from(std::span<const Observation> observations) {
  ObsBatch b;
  const auto n = static_cast<Eigen::Index>(observations.size());
  if (n == 0) throw std::invalid_argument("ObsBatch: empty observation list");
  const Eigen::Index k = observations.front().neighbors.rows();
  const bool with_obstacle = observations.front().obstacle.has_value();
  b.neighbor_count = k;
  b.self.resize(n, kSelfObsDim);
  b.neighbors.resize(n * k, kNeighborObsDim);
  b.obstacle.resize(n, with_obstacle ? kObstacleObsDim : 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Observation& o = observations[i];
    if (o.neighbors.rows() != k || o.obstacle.has_value() != with_obstacle) {
      throw std::invalid_argument("ObsBatch: observations disagree on layout");
    }
    b.self.row(i) = o.self.transpose();
    if (k > 0) b.neighbors.middleRows(i * k, k) = o.neighbors;
    if (with_obstacle) b.obstacle.row(i) = o.obstacle->transpose();
  }
  return b;
}

ObsBatch ObsBatch::select(std::span<const Eigen::Index> indices) const {
  ObsBatch b;
  const auto n = static_cast<Eigen::Index>(indices.size());
  const Eigen::Index k = neighbor_count;
  b.neighbor_count = k;
  b.self.resize(n, self.cols());
  b.neighbors.resize(n * k, neighbors.cols());
  b.obstacle.resize(n, obstacle.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index src = indices[i];
    b.self.row(i) = self.row(src);
    if (k > 0) b.neighbors.middleRows(i * k, k) = neighbors.middleRows(src * k, k);
    if (obstacle.cols() > 0) b.obstacle.row(i) = obstacle.row(src);
  }
  return b;
}

EncoderNetwork::EncoderNetwork(const std::string& name, const PolicyConfig& config, int output_dim)
    : config_(config) {
  config_.validate();
  const Eigen::Index hs = config.self_hidden;
  const Eigen::Index hn = config.neighbor_hidden;
  const Eigen::Index k = config.num_neighbors;

  Eigen::Index self_in = kSelfObsDim;
  if (config.encoder == EncoderKind::ConcatMlp) self_in += kNeighborObsDim * k;
  self_enc_ = nn::Mlp(name + ".self", Widths{self_in, hs, hs});

  Eigen::Index head_in = hs;
  if (config.encoder == EncoderKind::DeepSets) {
    set_enc_ = nn::Mlp(name + ".set", Widths{kNeighborObsDim, hn, hn});
    head_in += hn;
  } else if (config.encoder == EncoderKind::Attention) {
    elem_enc_ = nn::Mlp(name + ".attn_embed", Widths{kSelfObsDim + kNeighborObsDim, hn, hn});
    score_enc_ = nn::Mlp(name + ".attn_score", Widths{2 * hn, hn, hn, 1}, true);
    value_enc_ = nn::Mlp(name + ".attn_value", Widths{hn, hn, hn});
    head_in += hn;
  }
  if (config.obstacle_enabled) {
    obstacle_enc_ = nn::Mlp(name + ".obstacle", Widths{kObstacleObsDim, hs, hs});
    head_in += hs;
  }
  head_ = nn::Dense(name + ".head", head_in, output_dim, nn::Activation::Identity);
}

void EncoderNetwork::check_schema(const ObsBatch& obs) const {
  if (obs.self.cols() != kSelfObsDim) throw std::invalid_argument("policy: self block must be 18 wide");
  if (obs.neighbors.rows() != obs.size() * obs.neighbor_count ||
      (obs.neighbor_count > 0 && obs.neighbors.cols() != kNeighborObsDim)) {
    throw std::invalid_argument("policy: neighbor block layout mismatch");
  }
  if (config_.encoder == EncoderKind::ConcatMlp && obs.neighbor_count != config_.num_neighbors) {
    throw std::invalid_argument("policy: concat-mlp needs exactly K neighbor rows");
  }
  if (config_.encoder == EncoderKind::Attention && obs.neighbor_count == 0 &&
      !config_.attention_empty_fallback) {
    throw std::invalid_argument("policy: attention over an empty neighborhood");
  }
  const Eigen::Index want_obstacle = config_.obstacle_enabled ? kObstacleObsDim : 0;
  if (obs.obstacle.cols() != want_obstacle || obs.obstacle.rows() != obs.size()) {
    throw std::invalid_argument("policy: obstacle block does not match configuration");
  }
}

MatX EncoderNetwork::self_input(const ObsBatch& obs) const {
  if (config_.encoder != EncoderKind::ConcatMlp) return obs.self;
  const Eigen::Index k = obs.neighbor_count;
  MatX in(obs.size(), kSelfObsDim + kNeighborObsDim * k);
  in.leftCols(kSelfObsDim) = obs.self;
  for (Eigen::Index b = 0; b < obs.size(); ++b) {
    for (Eigen::Index j = 0; j < k; ++j) {
      in.block(b, kSelfObsDim + kNeighborObsDim * j, 1, kNeighborObsDim) = obs.neighbors.row(b * k + j);
    }
  }
  return in;
}

MatX EncoderNetwork::forward(const ObsBatch& obs, Cache* cache) const {
  check_schema(obs);
  Cache local;
  Cache& c = cache != nullptr ? *cache : local;
  const Eigen::Index batch = obs.size();
  const Eigen::Index k = obs.neighbor_count;
  const Eigen::Index hn = config_.neighbor_hidden;

  c.self_in = self_input(obs);
  c.self_emb = self_enc_.forward(c.self_in, &c.self_cache);
  std::vector<const MatX*> parts{&c.self_emb};

  if (config_.encoder == EncoderKind::DeepSets) {
    if (k > 0) {
      const MatX e = set_enc_.forward(obs.neighbors, &c.set_cache);
      c.neighbor_emb = nn::mean_pool_forward<double>(e, batch, k, hn);
    } else {
      c.neighbor_emb = MatX::Zero(batch, hn);
    }
    parts.push_back(&c.neighbor_emb);
  } else if (config_.encoder == EncoderKind::Attention) {
    if (k > 0) {
      const MatX self_rep = nn::repeat_rows<double>(obs.self, k);
      c.attn_in = nn::concat_forward<double>({&self_rep, &obs.neighbors});
      c.elem = elem_enc_.forward(c.attn_in, &c.elem_cache);
      const MatX mean = nn::mean_pool_forward<double>(c.elem, batch, k, hn);
      const MatX mean_rep = nn::repeat_rows<double>(mean, k);
      c.score_in = nn::concat_forward<double>({&c.elem, &mean_rep});
      const MatX logits = score_enc_.forward(c.score_in, &c.score_cache);
      c.weights = nn::softmax_forward<double>(logits, k);
      c.values = value_enc_.forward(c.elem, &c.value_cache);
      c.neighbor_emb = nn::weighted_pool_forward<double>(c.values, c.weights, batch, k);
    } else {
      c.neighbor_emb = MatX::Zero(batch, hn);
    }
    parts.push_back(&c.neighbor_emb);
  }

  if (config_.obstacle_enabled) {
    c.obstacle_emb = obstacle_enc_.forward(obs.obstacle, &c.obstacle_cache);
    parts.push_back(&c.obstacle_emb);
  }
  c.head_in = parts.size() == 1 ? c.self_emb : nn::concat_forward<double>(parts);
  c.out = head_.forward(c.head_in);
  return c.out;
}

void EncoderNetwork::backward(const MatX& d_out, const ObsBatch& obs, const Cache& c) {
  const Eigen::Index k = obs.neighbor_count;
  const MatX d_head_in = head_.backward(d_out, c.head_in, c.out, true);

  std::vector<Eigen::Index> widths{c.self_emb.cols()};
  const bool has_set = config_.encoder == EncoderKind::DeepSets ||
                       config_.encoder == EncoderKind::Attention;
  if (has_set) widths.push_back(c.neighbor_emb.cols());
  if (config_.obstacle_enabled) widths.push_back(c.obstacle_emb.cols());
  const auto grads = nn::concat_backward<double>(d_head_in, widths);

  self_enc_.backward(grads[0], c.self_cache, false);
  if (has_set && k > 0) {
    const MatX& d_emb = grads[1];
    if (config_.encoder == EncoderKind::DeepSets) {
      set_enc_.backward(nn::mean_pool_backward<double>(d_emb, k), c.set_cache, false);
    } else {
      MatX d_values;
      MatX d_weights;
      nn::weighted_pool_backward<double>(d_emb, c.values, c.weights, k, d_values, d_weights);
      MatX d_elem = value_enc_.backward(d_values, c.value_cache, true);
      const MatX d_logits = nn::softmax_backward<double>(d_weights, c.weights, k);
      const MatX d_score_in = score_enc_.backward(d_logits, c.score_cache, true);
      const Eigen::Index hn = c.elem.cols();
      d_elem += d_score_in.leftCols(hn);
      const MatX d_mean = nn::repeat_rows_backward<double>(d_score_in.rightCols(hn), k);
      d_elem += nn::mean_pool_backward<double>(d_mean, k);
      elem_enc_.backward(d_elem, c.elem_cache, false);
    }
  }
  if (config_.obstacle_enabled) obstacle_enc_.backward(grads.back(), c.obstacle_cache, false);
}

MatX EncoderNetwork::attention_weights(const ObsBatch& obs) const {
  if (config_.encoder != EncoderKind::Attention) {
    throw UsageError("attention weights requested from a " + to_string(config_.encoder) + " policy");
  }
  Cache c;
  forward(obs, &c);
  return c.weights;
}

void EncoderNetwork::init(Rng& rng) {
  self_enc_.init(rng);
  if (config_.encoder == EncoderKind::DeepSets) set_enc_.init(rng);
  if (config_.encoder == EncoderKind::Attention) {
    elem_enc_.init(rng);
    score_enc_.init(rng);
    value_enc_.init(rng);
  }
  if (config_.obstacle_enabled) obstacle_enc_.init(rng);
  head_.init(rng);
}

void EncoderNetwork::collect(nn::ParameterList& out) {
  self_enc_.collect(out);
  if (config_.encoder == EncoderKind::DeepSets) set_enc_.collect(out);
  if (config_.encoder == EncoderKind::Attention) {
    elem_enc_.collect(out);
    score_enc_.collect(out);
    value_enc_.collect(out);
  }
  if (config_.obstacle_enabled) obstacle_enc_.collect(out);
  head_.collect(out);
}

GaussianPolicy::GaussianPolicy(const PolicyConfig& config)
    : net_("policy", config, 4), log_sigma_("policy.log_sigma", 1, 1) {
  log_sigma_.value(0, 0) = config.init_log_sigma;
}

void GaussianPolicy::backward(const MatX& d_mean, double d_log_sigma, const ObsBatch& obs,
                              const EncoderNetwork::Cache& cache) {
  net_.backward(d_mean, obs, cache);
  log_sigma_.grad(0, 0) += d_log_sigma;
}

void GaussianPolicy::init(Rng& rng) {
  net_.init(rng);
  log_sigma_.value(0, 0) = net_.config().init_log_sigma;
}

void GaussianPolicy::collect(nn::ParameterList& out) {
  net_.collect(out);
  out.push_back(&log_sigma_);
}

ValueNetwork::ValueNetwork(const PolicyConfig& config) : net_("value", config, 1) {}

Vec4 sample_action(const Vec4& mean, double sigma, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Vec4 a;
  for (int i = 0; i < 4; ++i) a[i] = mean[i] + sigma * n01(rng);
  return a;
}

double gaussian_log_prob(const Vec4& action, const Vec4& mean, double log_sigma) {
  const double inv_var = std::exp(-2.0 * log_sigma);
  return -0.5 * (action - mean).squaredNorm() * inv_var - 4.0 * log_sigma - 2.0 * kLog2Pi;
}

double gaussian_entropy(double log_sigma, int dim) {
  return dim * (0.5 * (1.0 + kLog2Pi) + log_sigma);
}

void ActorCritic::init(Rng& rng) {
  policy.init(rng);
  value.init(rng);
}

nn::ParameterList ActorCritic::parameters() {
  nn::ParameterList out;
  policy.collect(out);
  value.collect(out);
  return out;
}

void ActorCritic::store(nn::Checkpoint& ck) {
  for (const auto* p : parameters()) ck.put(p->name, p->value);
}

void ActorCritic::restore(const nn::Checkpoint& ck) {
  for (auto* p : parameters()) {
    if (!ck.has(p->name)) throw UsageError("checkpoint lacks parameter '" + p->name + "'");
    MatX v = ck.get(p->name);
    if (v.rows() != p->value.rows() || v.cols() != p->value.cols()) {
      throw UsageError("checkpoint parameter '" + p->name + "' has an incompatible shape");
    }
    p->value = std::move(v);
  }
}

std::string export_weights_table(GaussianPolicy& policy) {
  nn::ParameterList params;
  policy.collect(params);
  std::ostringstream out;
  out << "# name rows cols values (row-major)\n";
  for (const auto* p : params) {
    out << p->name << ' ' << p->value.rows() << ' ' << p->value.cols();
    for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) out << ' ' << format_double(p->value(r, c));
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace quadswarm
