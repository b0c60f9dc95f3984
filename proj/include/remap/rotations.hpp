#pragma once

#include <Eigen/Core>

namespace remap {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
// 6D orientation: the first two columns of a rotation matrix, stored as
// [a1; a2] (column 0 then column 1). This layout is fixed project-wide:
// every 6-vector orientation in datasets, checkpoints and network tensors
// uses it.
using Vec6 = Eigen::Matrix<double, 6, 1>;

// Max-norm deviation of M'M from identity.
double orthonormality_defect(const Mat3& m);

bool is_rotation(const Mat3& m, double tol = 1e-9);

// First two columns of m. Rejects matrices whose orthonormality defect or
// determinant error exceeds 1e-6 (a corrupted input, not a rotation).
Vec6 rotmat_to_sixd(const Mat3& m);

// Gram-Schmidt reconstruction: b1 = normalize(a1),
// b2 = normalize(a2 - (b1.a2) b1), b3 = b1 x b2. Accepts arbitrary
// (non-orthonormal) input; throws DomainError when a1 is near zero or a2 is
// near parallel to a1 (tolerance 1e-12 on the surviving norms).
Mat3 sixd_to_rotmat(const Vec6& v);

// Derivative of sixd_to_rotmat: row 3c+i holds d(R(i,c))/dv, matching the
// column-major layout of vec(R). Same domain and degeneracy contract as
// sixd_to_rotmat.
Eigen::Matrix<double, 9, 6> sixd_to_rotmat_jacobian(const Vec6& v);

// Rodrigues rotation. Direction of aa is the axis, magnitude the angle.
Mat3 axis_angle_to_rotmat(const Vec3& aa);

// Canonical inverse: magnitude in [0, pi]. The angle == pi branch picks the
// axis sign so that the first nonzero component is positive.
Vec3 rotmat_to_axis_angle(const Mat3& m);

// min(|a-b| mod 2pi, 2pi - |a-b| mod 2pi), in [0, pi].
double periodic_angle_diff(double a, double b);

}  // namespace remap
