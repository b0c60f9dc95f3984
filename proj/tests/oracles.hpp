#pragma once

// Independent oracles the unit and acceptance tests check library output
// against. Deliberately written with different machinery than the library:
// homogeneous 4x4 composition via Eigen::Isometry3d here vs. separate
// rotation/position bookkeeping there, Eigen::AngleAxisd vs. hand-rolled
// Rodrigues, recursion vs. an explicit stack.

#include <Eigen/Geometry>
#include <functional>
#include <vector>

#include "remap/body.hpp"
#include "remap/kinematics.hpp"

namespace oracle {

inline Eigen::Isometry3d joint_transform(const remap::JointSpec& js, double q) {
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.translate(js.origin_xyz);
  t.rotate(Eigen::AngleAxisd(js.origin_rpy.z(), Eigen::Vector3d::UnitZ()));
  t.rotate(Eigen::AngleAxisd(js.origin_rpy.y(), Eigen::Vector3d::UnitY()));
  t.rotate(Eigen::AngleAxisd(js.origin_rpy.x(), Eigen::Vector3d::UnitX()));
  if (js.type == remap::JointType::Revolute) {
    t.rotate(Eigen::AngleAxisd(q, js.axis));
  }
  return t;
}

// World transform of every link, by recursive descent over the tree.
inline std::vector<Eigen::Isometry3d> fk(const remap::KinematicChain& chain,
                                         const remap::JointVector& q) {
  std::vector<int> slot(chain.joints.size(), -1);
  for (size_t s = 0; s < chain.q_slot_joint.size(); ++s) slot[chain.q_slot_joint[s]] = (int)s;

  std::vector<Eigen::Isometry3d> world(chain.m(), Eigen::Isometry3d::Identity());
  std::function<void(int)> descend = [&](int link) {
    for (size_t j = 0; j < chain.joints.size(); ++j) {
      const auto& js = chain.joints[j];
      if (chain.link_index(js.parent_link) != link) continue;
      const int child = chain.link_index(js.child_link);
      const double qj = js.type == remap::JointType::Revolute ? q[slot[j]] : 0.0;
      world[child] = world[link] * joint_transform(js, qj);
      descend(child);
    }
  };
  descend(chain.root_link);
  return world;
}

// Reference-body joint positions by recursive homogeneous-transform
// composition, against the library's iterative rotation/position pair.
inline Eigen::Matrix3Xd human_fk(const remap::ReferenceBody& body, const remap::HumanPose& pose) {
  const int k = body.k();
  Eigen::Matrix3Xd out(3, k);
  std::function<void(int, const Eigen::Isometry3d&)> descend =
      [&](int parent, const Eigen::Isometry3d& frame) {
        for (int i = 0; i < k; ++i) {
          if (body.joints[i].parent != parent) continue;
          Eigen::Isometry3d t = frame;
          t.translate(body.joints[i].offset);
          out.col(i) = t.translation();
          t.rotate(remap::sixd_to_rotmat(pose.col(i)));
          descend(i, t);
        }
      };
  descend(-1, Eigen::Isometry3d::Identity());
  return out;
}

// Central-difference gradient of a scalar function. h=1e-6 balances
// truncation vs. cancellation for O(1) doubles; callers checking analytic
// gradients should expect ~1e-5 relative agreement.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (int i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

}  // namespace oracle
