#pragma once

// Constant-curvature segment transforms and planar chain poses.
//
// World frame: origin at the clamped magnet t+1, +z along the parent lumen,
// bending toward -y. Segment n maps frame n to frame n+1 by an x-rotation of
// alpha_n and the arc offset of magnet n.

#include "magchain/dipole.hpp"
#include "magchain/errors.hpp"
#include "magchain/units.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <vector>

namespace magchain {

using Transform = Eigen::Isometry3d;

// Below this arc angle the series form of l_s/alpha is used.
inline constexpr double kSeriesThreshold = 1e-6;

namespace detail {

inline void check_arc_angle(double alpha) {
  if (!(alpha >= 0.0)) throw DomainError("central angle must be non-negative");
  if (!(alpha < 2.0 * std::numbers::pi)) throw DomainError("central angle must be below 2 pi");
}

// r (1 - cos a) and r sin a with r = l_s / a.
inline double arc_sag(double alpha, double ls) {
  if (alpha < kSeriesThreshold) return ls * (alpha / 2.0 - alpha * alpha * alpha / 24.0);
  const double h = std::sin(alpha / 2.0);
  return ls / alpha * 2.0 * h * h;
}
inline double arc_rise(double alpha, double ls) {
  if (alpha < kSeriesThreshold) return ls * (1.0 - alpha * alpha / 6.0);
  return ls / alpha * std::sin(alpha);
}

}  // namespace detail

inline Mat3 x_rotation(double angle) { return Eigen::AngleAxisd(angle, Vec3::UnitX()).toRotationMatrix(); }

// Position of magnet n in frame n+1.
inline Vec3 magnet_offset(double alpha, double ls, double lm) {
  detail::check_arc_angle(alpha);
  return {0.0, -detail::arc_sag(alpha, ls) - lm / 2.0 * std::sin(alpha),
          lm / 2.0 * (1.0 + std::cos(alpha)) + detail::arc_rise(alpha, ls)};
}

// Spring end adjacent to magnet n (s_2n), in frame n+1.
inline Vec3 spring_far_end(double alpha, double ls, double lm) {
  detail::check_arc_angle(alpha);
  return {0.0, -detail::arc_sag(alpha, ls), lm / 2.0 + detail::arc_rise(alpha, ls)};
}

// ^{n+1}T_n
inline Transform segment_transform(double alpha, double ls, double lm) {
  Transform T = Transform::Identity();
  T.linear() = x_rotation(alpha);
  T.translation() = magnet_offset(alpha, ls, lm);
  return T;
}

struct SegmentPose {
  Mat3 rotation = Mat3::Identity();  // world <- magnet n
  Vec3 position = Vec3::Zero();      // p_n [m]

  Vec3 axis() const { return rotation.col(2); }  // z_n, moment direction
};

struct ChainConfiguration {
  int t = 0;                  // unsupported segments
  Eigen::VectorXd angles;     // alpha_1..alpha_t
  std::vector<SegmentPose> poses;  // magnets 1..t+1 at [0..t]
  double theta = 0.0;         // field direction that produced the shape

  const SegmentPose& pose(int n) const { return poses.at(n - 1); }
  const Vec3& position(int n) const { return pose(n).position; }
  Vec3 axis(int n) const { return pose(n).axis(); }
};

inline ChainConfiguration compose_world_poses(const Eigen::VectorXd& angles, const CatheterSpec& spec) {
  const int t = static_cast<int>(angles.size());
  if (t < 1) throw DomainError("at least one unsupported segment is required");
  if (t > spec.segments())
    throw DomainError("t = " + std::to_string(t) + " exceeds segment count " + std::to_string(spec.segments()));
  ChainConfiguration c;
  c.t = t;
  c.angles = angles;
  c.poses.resize(t + 1);
  Transform world = Transform::Identity();  // clamped magnet t+1
  c.poses[t] = {world.linear(), world.translation()};
  for (int n = t; n >= 1; --n) {
    world = world * segment_transform(angles[n - 1], spec.spring_length(), spec.magnet.length);
    c.poses[n - 1] = {world.linear(), world.translation()};
  }
  return c;
}

// Point d_p ahead of magnet 1 on the two-segment shape (alpha1, alpha2).
inline Vec3 lumen_center(double alpha1, double alpha2, double dp, const CatheterSpec& spec) {
  const Transform T = segment_transform(alpha2, spec.spring_length(), spec.magnet.length) *
                      segment_transform(alpha1, spec.spring_length(), spec.magnet.length);
  return T * Vec3(0.0, 0.0, dp);
}

inline Vec3 target_direction(const Vec3& p1, const Vec3& pt) {
  const Vec3 d = pt - p1;
  const double len = d.norm();
  if (!(len > 0.0)) throw DegenerateGeometryError("lumen center coincides with magnet 1");
  return d / len;
}

// Signed in-plane angle from `from` to `to`, positive about +x.
inline double signed_plane_angle(const Vec3& from, const Vec3& to) {
  return std::atan2(from.cross(to).x(), from.dot(to));
}

// Uniform field at direction theta, measured from +z toward -y.
inline Vec3 field_vector(double theta, double magnitude) {
  return magnitude * Vec3(0.0, -std::sin(theta), std::cos(theta));
}

// Cumulative bend of magnet n's axis relative to the parent-lumen axis.
inline double axis_angle(const ChainConfiguration& c, int n) {
  const Vec3 z = c.axis(n);
  return std::atan2(-z.y(), z.z());
}

}  // namespace magchain
