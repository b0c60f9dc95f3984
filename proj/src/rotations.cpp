#include "remap/rotations.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "remap/errors.hpp"

namespace remap {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kDegenerateTol = 1e-12;
}  // namespace

double orthonormality_defect(const Mat3& m) {
  return (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
}

bool is_rotation(const Mat3& m, double tol) {
  return orthonormality_defect(m) <= tol && std::abs(m.determinant() - 1.0) <= tol;
}

Vec6 rotmat_to_sixd(const Mat3& m) {
  if (!is_rotation(m, 1e-6)) {
    throw DomainError("rotmat_to_sixd: input is not a rotation matrix (defect > 1e-6)");
  }
  Vec6 v;
  v.head<3>() = m.col(0);
  v.tail<3>() = m.col(1);
  return v;
}

Mat3 sixd_to_rotmat(const Vec6& v) {
  const Vec3 a1 = v.head<3>();
  const Vec3 a2 = v.tail<3>();
  const double n1 = a1.norm();
  if (n1 <= kDegenerateTol) {
    throw DomainError("sixd_to_rotmat: first column has near-zero norm");
  }
  const Vec3 b1 = a1 / n1;
  const Vec3 u = a2 - b1.dot(a2) * b1;
  const double n2 = u.norm();
  if (n2 <= kDegenerateTol) {
    throw DomainError("sixd_to_rotmat: second column is parallel to the first");
  }
  const Vec3 b2 = u / n2;
  Mat3 m;
  m.col(0) = b1;
  m.col(1) = b2;
  m.col(2) = b1.cross(b2);
  return m;
}

Eigen::Matrix<double, 9, 6> sixd_to_rotmat_jacobian(const Vec6& v) {
  const Vec3 a1 = v.head<3>();
  const Vec3 a2 = v.tail<3>();
  const double n1 = a1.norm();
  if (n1 <= kDegenerateTol) {
    throw DomainError("sixd_to_rotmat_jacobian: first column has near-zero norm");
  }
  const Vec3 b1 = a1 / n1;
  const Vec3 u = a2 - b1.dot(a2) * b1;
  const double n2 = u.norm();
  if (n2 <= kDegenerateTol) {
    throw DomainError("sixd_to_rotmat_jacobian: second column is parallel to the first");
  }
  const Vec3 b2 = u / n2;

  const Mat3 db1_da1 = (Mat3::Identity() - b1 * b1.transpose()) / n1;
  const Mat3 du_da1 = -(b1.dot(a2) * Mat3::Identity() + b1 * a2.transpose()) * db1_da1;
  const Mat3 du_da2 = Mat3::Identity() - b1 * b1.transpose();
  const Mat3 db2_du = (Mat3::Identity() - b2 * b2.transpose()) / n2;
  const Mat3 db2_da1 = db2_du * du_da1;
  const Mat3 db2_da2 = db2_du * du_da2;

  Mat3 skew1, skew2;
  skew1 << 0, -b1.z(), b1.y(), b1.z(), 0, -b1.x(), -b1.y(), b1.x(), 0;
  skew2 << 0, -b2.z(), b2.y(), b2.z(), 0, -b2.x(), -b2.y(), b2.x(), 0;
  const Mat3 db3_da1 = skew1 * db2_da1 - skew2 * db1_da1;
  const Mat3 db3_da2 = skew1 * db2_da2;

  Eigen::Matrix<double, 9, 6> jac;
  jac.block<3, 3>(0, 0) = db1_da1;
  jac.block<3, 3>(0, 3).setZero();
  jac.block<3, 3>(3, 0) = db2_da1;
  jac.block<3, 3>(3, 3) = db2_da2;
  jac.block<3, 3>(6, 0) = db3_da1;
  jac.block<3, 3>(6, 3) = db3_da2;
  return jac;
}

Mat3 axis_angle_to_rotmat(const Vec3& aa) {
  const double angle = aa.norm();
  if (angle < 1e-14) {
    // First-order term only; below this scale sin/cos add nothing.
    Mat3 k;
    k << 0, -aa.z(), aa.y(), aa.z(), 0, -aa.x(), -aa.y(), aa.x(), 0;
    return Mat3::Identity() + k;
  }
  const Vec3 axis = aa / angle;
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Mat3 k;
  k << 0, -axis.z(), axis.y(), axis.z(), 0, -axis.x(), -axis.y(), axis.x(), 0;
  return Mat3::Identity() + s * k + (1.0 - c) * (k * k);
}

Vec3 rotmat_to_axis_angle(const Mat3& m) {
  // w = vee(R - R^T) = 2 sin(theta) * axis; atan2 keeps the angle well
  // conditioned at both ends of [0, pi].
  const Vec3 w(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
  const double angle = std::atan2(0.5 * w.norm(), 0.5 * (m.trace() - 1.0));

  if (angle < 1e-12) return Vec3::Zero();

  if (angle < 3.0) {
    return (angle / w.norm()) * w;
  }

  // Near pi the skew part vanishes; recover the axis from the symmetric part
  // R = 2 aa^T - I + O(pi - theta).
  const double c = std::cos(angle);
  Vec3 axis;
  for (int i = 0; i < 3; ++i) {
    axis[i] = std::sqrt(std::max(0.0, (m(i, i) - c) / (1.0 - c)));
  }
  // Off-diagonal sums fix relative signs: R_ij + R_ji = 2 a_i a_j (1 - c).
  int major = 0;
  for (int i = 1; i < 3; ++i) {
    if (axis[i] > axis[major]) major = i;
  }
  for (int i = 0; i < 3; ++i) {
    if (i == major) continue;
    const double pair = m(major, i) + m(i, major);
    if (pair < 0.0) axis[i] = -axis[i];
  }
  // Below pi the skew part still carries the global sign; at pi it is
  // noise, and the canonical choice is first nonzero component positive.
  if (w.norm() > 1e-8) {
    if (w.dot(axis) < 0.0) axis = -axis;
  } else {
    for (int i = 0; i < 3; ++i) {
      if (axis[i] != 0.0) {
        if (axis[i] < 0.0) axis = -axis;
        break;
      }
    }
  }
  return angle * axis.normalized();
}

double periodic_angle_diff(double a, double b) {
  double d = std::fmod(std::abs(a - b), kTwoPi);
  return std::min(d, kTwoPi - d);
}

}  // namespace remap
