#pragma once

// Point-dipole field, force and torque, and the equivalent moment that an
// inter-magnet force exerts about the far end of the connecting spring.

#include "magchain/errors.hpp"
#include "magchain/units.hpp"

#include <Eigen/Dense>

#include <numbers>

namespace magchain {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Dipole {
  Vec3 position = Vec3::Zero();  // [m]
  Vec3 moment = Vec3::Zero();    // [A*m^2]
};

// Which frame a vector quantity is expressed in. `magnet` is the 1-based index
// for Kind::magnet and unused for Kind::world.
struct Frame {
  enum class Kind { world, magnet };
  Kind kind = Kind::world;
  int magnet = 0;

  static Frame world() { return {}; }
  static Frame of_magnet(int n) { return {Kind::magnet, n}; }
  bool operator==(const Frame&) const = default;
};

struct WrenchPair {
  Vec3 force = Vec3::Zero();   // [N]
  Vec3 torque = Vec3::Zero();  // [N*m]
  Frame frame;

  // Re-expresses both vectors in `target` given the rotation target<-frame.
  WrenchPair rotated(const Mat3& rotation, Frame target) const {
    return {rotation * force, rotation * torque, target};
  }
};

namespace detail {
inline Vec3 displacement(const Vec3& from, const Vec3& to) {
  Vec3 r = to - from;
  if (!(r.norm() > 0.0)) throw SingularityError("dipole field evaluated at the source position");
  return r;
}
}  // namespace detail

// B = mu0 ||m|| / (4 pi r^3) (3 r^ r^T - I) m^
inline Vec3 dipole_field(const Dipole& source, const Vec3& at) {
  const Vec3 r = detail::displacement(source.position, at);
  const double dist = r.norm();
  const Vec3 rhat = r / dist;
  const double scale = kMu0 / (4.0 * std::numbers::pi * dist * dist * dist);
  return scale * (3.0 * rhat * rhat.dot(source.moment) - source.moment);
}

// Closed form of (m_target . grad) B_source at the target position.
inline Vec3 dipole_force_on(const Dipole& target, const Dipole& source) {
  const Vec3 r = detail::displacement(source.position, target.position);
  const double dist = r.norm();
  const Vec3 rhat = r / dist;
  const Vec3& ma = target.moment;
  const Vec3& mb = source.moment;
  const double a_r = ma.dot(rhat);
  const double b_r = mb.dot(rhat);
  const double scale = 3.0 * kMu0 / (4.0 * std::numbers::pi * dist * dist * dist * dist);
  return scale * (b_r * ma + a_r * mb + ma.dot(mb) * rhat - 5.0 * a_r * b_r * rhat);
}

inline Vec3 dipole_torque_on(const Dipole& target, const Vec3& field) { return target.moment.cross(field); }

// t_eq = f_in x (s_2n - p_n): moment of the inter-magnet force about the spring's far end.
inline Vec3 equivalent_torque(const Vec3& f_in, const Vec3& magnet_pos, const Vec3& spring_far_end) {
  return f_in.cross(spring_far_end - magnet_pos);
}

}  // namespace magchain
