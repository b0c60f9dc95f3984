#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "remap/rotations.hpp"
#include "remap/theta.hpp"

namespace remap {

enum class JointType { Revolute, Fixed };

struct JointSpec {
  std::string name;
  JointType type = JointType::Fixed;
  Vec3 axis = Vec3::UnitX();       // unit norm for revolute joints
  Vec3 origin_xyz = Vec3::Zero();  // meters
  Vec3 origin_rpy = Vec3::Zero();  // radians, URDF fixed-axis convention
  double limit_lower = 0.0;
  double limit_upper = 0.0;
  std::string parent_link, child_link;
};

// Tree of links connected by revolute/fixed joints, rooted at the unique
// link that is never a child. Link columns in poses follow URDF file order;
// joint-vector slots follow depth-first file order of the revolute joints.
// That slot order is the contract datasets and checkpoints store.
struct KinematicChain {
  std::string name;
  std::vector<std::string> links;  // file order
  std::vector<JointSpec> joints;   // file order
  int root_link = 0;

  // Derived on construction:
  std::vector<int> dfs_joints;             // joint indices, depth-first
  std::vector<int> q_slot_joint;           // joint index per q slot
  std::vector<int> parent_joint_of_link;   // -1 for root

  int n() const { return static_cast<int>(q_slot_joint.size()); }
  int m() const { return static_cast<int>(links.size()); }

  int link_index(const std::string& name) const;  // -1 if absent
  std::vector<std::string> q_joint_names() const;
  std::vector<std::pair<double, double>> joint_limits() const;  // per q slot

  // Validates the tree and fills the derived members. Throws UrdfError.
  void finalize();
};

// Parses the supported URDF subset: <robot>, <link name>, <joint
// name type> with <parent>, <child>, <origin xyz rpy>, <axis xyz>,
// <limit lower upper>. Meshes, inertials and collision geometry are
// ignored; joint types other than revolute/fixed are rejected.
KinematicChain parse_urdf(const std::string& xml_text);
KinematicChain load_urdf_file(const std::string& path);

// q in radians, one entry per revolute joint in q-slot order.
using JointVector = Eigen::VectorXd;

struct RobotPose {
  Eigen::Matrix<double, 6, Eigen::Dynamic> r;  // 6D orientation per link
  Eigen::Matrix3Xd p;                          // position per link, base frame
};

RobotPose forward_kinematics(const KinematicChain& chain, const JointVector& q);

// One IK correspondence: a robot link drives a reference-body joint.
struct MapEntry {
  std::string robot_link;
  int human_joint = 0;
  double weight = 1.0;
};

struct RobotProfile {
  KinematicChain chain;
  std::string urdf_path;
  std::vector<std::string> key_links;             // metric subset
  std::vector<MapEntry> human_joint_map;          // IK targets
  std::vector<std::pair<double, double>> sampling_ranges;  // per q slot
  ScaleTheta theta;
  ThetaRanges theta_ranges;
  uint64_t content_hash = 0;  // profile file + URDF bytes

  std::vector<int> key_link_indices() const;
};

// Reads the JSON profile, loads its URDF relative to the profile's
// directory, validates link names and sampling ranges against the chain.
RobotProfile load_profile(const std::string& path);

JointVector sample_joint_vector(const KinematicChain& chain, const RobotProfile& profile,
                                uint64_t seed);

bool within_limits(const KinematicChain& chain, const JointVector& q, double tol = 0.0);

JointVector clamp_to_limits(const std::vector<std::pair<double, double>>& limits,
                            const JointVector& q);

}  // namespace remap
