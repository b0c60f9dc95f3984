#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "remap/rotations.hpp"

namespace remap {

// A reference-body joint. Joints are stored in topological order (parent
// index < own index; -1 means the fixed root frame at the origin). The
// rotation box bounds the per-component rotation vector and is used only
// by the synthetic corpus generators.
struct BodyJoint {
  std::string name;
  int parent = -1;
  Vec3 offset = Vec3::Zero();  // from parent joint, rest pose, meters
  Vec3 box_lo = Vec3::Zero();  // radians
  Vec3 box_hi = Vec3::Zero();
};

struct ReferenceBody {
  std::string name;
  std::vector<BodyJoint> joints;
  uint64_t content_hash = 0;

  int k() const { return static_cast<int>(joints.size()); }
  int joint_index(const std::string& name) const;  // -1 if absent
};

ReferenceBody load_body(const std::string& path);

// Pose of a reference body: one 6D local rotation per joint, root-relative.
using HumanPose = Eigen::Matrix<double, 6, Eigen::Dynamic>;

// Concatenated per-joint rotation vectors (3k), the corpus generators'
// working space.
using AngleVector = Eigen::VectorXd;

HumanPose angles_to_pose(const AngleVector& angles);
AngleVector pose_to_angles(const HumanPose& pose);

// Column-major flattening (joint-0 column first). The layout every network
// tensor uses.
Eigen::VectorXd flatten_pose(const HumanPose& pose);
HumanPose unflatten_pose(const Eigen::VectorXd& flat, int k);

// Joint positions, root frame. A joint's own rotation moves its children,
// not itself.
Eigen::Matrix3Xd human_fk(const ReferenceBody& body, const HumanPose& pose);

// Natural-pose corpus: a seed-fixed low-rank factor model in angle space
// (orthonormal factors, decaying scales, isotropic noise), clipped to the
// rotation boxes. Deterministic per seed.
std::vector<HumanPose> generate_corpus(const ReferenceBody& body, int count, int rank,
                                       uint64_t seed, double noise_sigma = 0.05);

// Componentwise-uniform draws over the full rotation boxes; the "extreme"
// contrast distribution to the corpus.
std::vector<HumanPose> generate_uniform_rom(const ReferenceBody& body, int count, uint64_t seed);

// Line-delimited corpus file: a header line, then one pose (6k numbers)
// per line.
void write_corpus(const std::string& path, const std::vector<HumanPose>& corpus, int k);
std::vector<HumanPose> read_corpus(const std::string& path, int expect_k = -1);

}  // namespace remap
