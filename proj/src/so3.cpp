#include "quadswarm/so3.hpp"

#include <cstdio>
#include <numbers>

namespace quadswarm {

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

Mat3 random_rotation(Rng& rng) {
  const double u1 = uniform(rng, 0.0, 1.0);
  const double u2 = uniform(rng, 0.0, 1.0);
  const double u3 = uniform(rng, 0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;
  const double a = std::sqrt(1.0 - u1);
  const double b = std::sqrt(u1);
  Eigen::Quaterniond q(a * std::sin(two_pi * u2), a * std::cos(two_pi * u2),
                       b * std::sin(two_pi * u3), b * std::cos(two_pi * u3));
  q.normalize();
  return reorthonormalize<double>(q.toRotationMatrix());
}

}  // namespace quadswarm
