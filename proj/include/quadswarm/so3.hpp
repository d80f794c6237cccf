#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "quadswarm/common.hpp"

namespace quadswarm {

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> hat(const Eigen::Matrix<Scalar, 3, 1>& w) {
  Eigen::Matrix<Scalar, 3, 3> m;
  m << Scalar(0), -w.z(), w.y(),
       w.z(), Scalar(0), -w.x(),
       -w.y(), w.x(), Scalar(0);
  return m;
}

/// Rodrigues exponential map so(3) -> SO(3).
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> so3_exp(const Eigen::Matrix<Scalar, 3, 1>& w) {
  using std::cos;
  using std::sin;
  const Scalar theta2 = w.squaredNorm();
  const Scalar theta = std::sqrt(theta2);
  Scalar a, b;
  if (theta < Scalar(1e-6)) {
    // Taylor terms; truncation error is below double epsilon at this angle.
    a = Scalar(1) - theta2 / Scalar(6);
    b = Scalar(0.5) - theta2 / Scalar(24);
  } else {
    a = sin(theta) / theta;
    b = (Scalar(1) - cos(theta)) / theta2;
  }
  const Eigen::Matrix<Scalar, 3, 3> k = hat(w);
  return Eigen::Matrix<Scalar, 3, 3>::Identity() + a * k + b * k * k;
}

/// One Newton step of the polar iteration, R <- R (3I - R^T R) / 2.
/// Pulls a nearly orthonormal matrix back onto SO(3) with quadratic error decay.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> reorthonormalize(const Eigen::Matrix<Scalar, 3, 3>& r) {
  const Eigen::Matrix<Scalar, 3, 3> rtr = r.transpose() * r;
  return Scalar(0.5) * r * (Scalar(3) * Eigen::Matrix<Scalar, 3, 3>::Identity() - rtr);
}

template <typename Derived>
double orthonormality_error(const Eigen::MatrixBase<Derived>& r) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
}

/// Uniformly distributed rotation (Shoemake's subgroup algorithm).
Mat3 random_rotation(Rng& rng);

/// Vee of the skew part: vee((M - M^T) / 2).
inline Vec3 vee_skew(const Mat3& m) {
  return 0.5 * Vec3(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
}

}  // namespace quadswarm
