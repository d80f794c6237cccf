#pragma once

// Dense forward/backward kernels. Batches are row-major in the sense of
// "one sample per row"; sets of K elements per sample are stored as K
// consecutive rows, so a batch of B sets occupies B * K rows.

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace quadswarm::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

namespace detail {
inline void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}
}  // namespace detail

/// y = x w + b
template <typename Scalar>
Matrix<Scalar> linear_forward(const Matrix<Scalar>& x, const Matrix<Scalar>& w,
                              const RowVector<Scalar>& b) {
  detail::require(x.cols() == w.rows(), "linear: input width does not match weight rows");
  detail::require(b.cols() == w.cols(), "linear: bias width does not match weight columns");
  Matrix<Scalar> y = x * w;
  y.rowwise() += b;
  return y;
}

/// Accumulates dw, db; writes dx when requested.
template <typename Scalar>
void linear_backward(const Matrix<Scalar>& dy, const Matrix<Scalar>& x, const Matrix<Scalar>& w,
                     Matrix<Scalar>* dx, Matrix<Scalar>& dw, RowVector<Scalar>& db) {
  detail::require(dy.rows() == x.rows() && dy.cols() == w.cols(), "linear: gradient shape mismatch");
  dw.noalias() += x.transpose() * dy;
  db += dy.colwise().sum();
  if (dx != nullptr) dx->noalias() = dy * w.transpose();
}

/// y = tanh(x w + b)
template <typename Scalar>
Matrix<Scalar> linear_tanh_forward(const Matrix<Scalar>& x, const Matrix<Scalar>& w,
                                   const RowVector<Scalar>& b) {
  return linear_forward(x, w, b).array().tanh().matrix();
}

/// Backward through tanh(x w + b) given the forward output y.
template <typename Scalar>
void linear_tanh_backward(const Matrix<Scalar>& dy, const Matrix<Scalar>& x,
                          const Matrix<Scalar>& y, const Matrix<Scalar>& w, Matrix<Scalar>* dx,
                          Matrix<Scalar>& dw, RowVector<Scalar>& db) {
  detail::require(dy.rows() == y.rows() && dy.cols() == y.cols(), "tanh: gradient shape mismatch");
  const Matrix<Scalar> dz = (dy.array() * (Scalar(1) - y.array().square())).matrix();
  linear_backward(dz, x, w, dx, dw, db);
}

/// Softmax over consecutive groups of `group` entries of a column vector.
template <typename Scalar>
Matrix<Scalar> softmax_forward(const Matrix<Scalar>& logits, Eigen::Index group) {
  detail::require(logits.cols() == 1, "softmax: expects a column of logits");
  detail::require(group > 0 && logits.rows() % group == 0, "softmax: rows not a multiple of group");
  Matrix<Scalar> out(logits.rows(), 1);
  for (Eigen::Index start = 0; start < logits.rows(); start += group) {
    const auto seg = logits.col(0).segment(start, group);
    const Scalar peak = seg.maxCoeff();
    auto e = (seg.array() - peak).exp();
    out.col(0).segment(start, group) = (e / e.sum()).matrix();
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> softmax_backward(const Matrix<Scalar>& dweights, const Matrix<Scalar>& weights,
                                Eigen::Index group) {
  detail::require(dweights.rows() == weights.rows() && dweights.cols() == 1 && weights.cols() == 1,
                  "softmax: gradient shape mismatch");
  Matrix<Scalar> out(weights.rows(), 1);
  for (Eigen::Index start = 0; start < weights.rows(); start += group) {
    const auto w = weights.col(0).segment(start, group);
    const auto g = dweights.col(0).segment(start, group);
    const Scalar inner = w.dot(g);
    out.col(0).segment(start, group) = (w.array() * (g.array() - inner)).matrix();
  }
  return out;
}

/// Mean over consecutive groups of `group` rows; group 0 yields zeros.
template <typename Scalar>
Matrix<Scalar> mean_pool_forward(const Matrix<Scalar>& x, Eigen::Index batch, Eigen::Index group,
                                 Eigen::Index width) {
  detail::require(x.rows() == batch * group, "mean_pool: rows != batch * group");
  Matrix<Scalar> out = Matrix<Scalar>::Zero(batch, width);
  if (group == 0) return out;
  detail::require(x.cols() == width, "mean_pool: width mismatch");
  for (Eigen::Index b = 0; b < batch; ++b) {
    out.row(b) = x.middleRows(b * group, group).colwise().sum() / Scalar(group);
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> mean_pool_backward(const Matrix<Scalar>& dy, Eigen::Index group) {
  Matrix<Scalar> dx(dy.rows() * group, dy.cols());
  for (Eigen::Index b = 0; b < dy.rows(); ++b) {
    for (Eigen::Index k = 0; k < group; ++k) dx.row(b * group + k) = dy.row(b) / Scalar(group);
  }
  return dx;
}

/// Weighted sum over groups: out_b = sum_k w_{b,k} x_{b,k}.
template <typename Scalar>
Matrix<Scalar> weighted_pool_forward(const Matrix<Scalar>& x, const Matrix<Scalar>& weights,
                                     Eigen::Index batch, Eigen::Index group) {
  detail::require(x.rows() == batch * group && weights.rows() == batch * group,
                  "weighted_pool: rows != batch * group");
  Matrix<Scalar> out = Matrix<Scalar>::Zero(batch, x.cols());
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index k = 0; k < group; ++k) out.row(b) += weights(b * group + k, 0) * x.row(b * group + k);
  }
  return out;
}

template <typename Scalar>
void weighted_pool_backward(const Matrix<Scalar>& dy, const Matrix<Scalar>& x,
                            const Matrix<Scalar>& weights, Eigen::Index group, Matrix<Scalar>& dx,
                            Matrix<Scalar>& dweights) {
  dx.resize(x.rows(), x.cols());
  dweights.resize(x.rows(), 1);
  for (Eigen::Index b = 0; b < dy.rows(); ++b) {
    for (Eigen::Index k = 0; k < group; ++k) {
      const Eigen::Index r = b * group + k;
      dx.row(r) = weights(r, 0) * dy.row(b);
      dweights(r, 0) = x.row(r).dot(dy.row(b));
    }
  }
}

/// Repeats each row `group` times (broadcast a per-sample row to its set members).
template <typename Scalar>
Matrix<Scalar> repeat_rows(const Matrix<Scalar>& x, Eigen::Index group) {
  Matrix<Scalar> out(x.rows() * group, x.cols());
  for (Eigen::Index b = 0; b < x.rows(); ++b) {
    for (Eigen::Index k = 0; k < group; ++k) out.row(b * group + k) = x.row(b);
  }
  return out;
}

/// Adjoint of repeat_rows: sums each group of `group` rows.
template <typename Scalar>
Matrix<Scalar> repeat_rows_backward(const Matrix<Scalar>& dy, Eigen::Index group) {
  detail::require(group > 0 && dy.rows() % group == 0, "repeat_rows: rows not a multiple of group");
  const Eigen::Index batch = dy.rows() / group;
  Matrix<Scalar> out(batch, dy.cols());
  for (Eigen::Index b = 0; b < batch; ++b) out.row(b) = dy.middleRows(b * group, group).colwise().sum();
  return out;
}

/// Column-wise concatenation.
template <typename Scalar>
Matrix<Scalar> concat_forward(const std::vector<const Matrix<Scalar>*>& parts) {
  detail::require(!parts.empty(), "concat: no inputs");
  const Eigen::Index rows = parts.front()->rows();
  Eigen::Index cols = 0;
  for (const auto* p : parts) {
    detail::require(p->rows() == rows, "concat: row count mismatch");
    cols += p->cols();
  }
  Matrix<Scalar> out(rows, cols);
  Eigen::Index at = 0;
  for (const auto* p : parts) {
    out.middleCols(at, p->cols()) = *p;
    at += p->cols();
  }
  return out;
}

template <typename Scalar>
std::vector<Matrix<Scalar>> concat_backward(const Matrix<Scalar>& dy,
                                            const std::vector<Eigen::Index>& widths) {
  Eigen::Index total = 0;
  for (auto w : widths) total += w;
  detail::require(total == dy.cols(), "concat: gradient width mismatch");
  std::vector<Matrix<Scalar>> out;
  Eigen::Index at = 0;
  for (auto w : widths) {
    out.push_back(dy.middleCols(at, w));
    at += w;
  }
  return out;
}

}  // namespace quadswarm::nn
