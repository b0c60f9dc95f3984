#include <cmath>
#include <fstream>

#include "doctest.h"
#include "oracles.hpp"
#include "remap/errors.hpp"
#include "remap/kinematics.hpp"
#include "remap/rng.hpp"

using namespace remap;

namespace {

const char* kPlanarArm = R"(<?xml version="1.0"?>
<robot name="planar2">
  <link name="base"/>
  <link name="tip"/>
  <joint name="shoulder" type="revolute">
    <parent link="base"/>
    <child link="tip"/>
    <origin xyz="0.5 0 0"/>
    <axis xyz="0 0 1"/>
    <limit lower="-1.5707963267948966" upper="1.5707963267948966"/>
  </joint>
</robot>
)";

// L1 = 0.4 to the elbow, L2 = 0.3 to the tip, both rotations about Z.
const char* kPlanar2Dof = R"(<?xml version="1.0"?>
<robot name="planar2dof">
  <link name="base"/>
  <link name="upper"/>
  <link name="fore"/>
  <link name="tip"/>
  <joint name="shoulder" type="revolute">
    <parent link="base"/>
    <child link="upper"/>
    <axis xyz="0 0 1"/>
    <limit lower="-3.1" upper="3.1"/>
  </joint>
  <joint name="elbow" type="revolute">
    <parent link="upper"/>
    <child link="fore"/>
    <origin xyz="0.4 0 0"/>
    <axis xyz="0 0 1"/>
    <limit lower="-3.1" upper="3.1"/>
  </joint>
  <joint name="hand" type="fixed">
    <parent link="fore"/>
    <child link="tip"/>
    <origin xyz="0.3 0 0"/>
  </joint>
</robot>
)";

std::string asset(const char* name) { return std::string(REMAP_ASSETS "/") + name; }

}  // namespace

TEST_CASE("parse 2-link planar arm") {
  KinematicChain chain = parse_urdf(kPlanarArm);
  CHECK(chain.n() == 1);
  CHECK(chain.m() == 2);
  CHECK(chain.links[chain.root_link] == "base");
  CHECK(chain.q_joint_names() == std::vector<std::string>{"shoulder"});
  auto limits = chain.joint_limits();
  CHECK(limits[0].first == doctest::Approx(-1.5707963267948966));
}

TEST_CASE("parser rejects the unsupported and the malformed") {
  CHECK_THROWS_AS(parse_urdf("<robot><link name='a'/><link name='b'"), UrdfError);

  const char* prismatic = R"(<robot name="r">
    <link name="a"/><link name="b"/>
    <joint name="slide" type="prismatic">
      <parent link="a"/><child link="b"/>
      <axis xyz="0 0 1"/><limit lower="0" upper="1"/>
    </joint></robot>)";
  try {
    parse_urdf(prismatic);
    FAIL("expected UrdfError");
  } catch (const UrdfError& e) {
    CHECK(e.kind == UrdfError::Kind::UnsupportedJoint);
  }

  const char* no_limit = R"(<robot name="r">
    <link name="a"/><link name="b"/>
    <joint name="j" type="revolute">
      <parent link="a"/><child link="b"/><axis xyz="0 0 1"/>
    </joint></robot>)";
  try {
    parse_urdf(no_limit);
    FAIL("expected UrdfError");
  } catch (const UrdfError& e) {
    CHECK(e.kind == UrdfError::Kind::MissingLimit);
  }

  const char* dangling = R"(<robot name="r">
    <link name="a"/><link name="b"/>
    <joint name="j" type="fixed">
      <parent link="a"/><child link="ghost"/>
    </joint></robot>)";
  try {
    parse_urdf(dangling);
    FAIL("expected UrdfError");
  } catch (const UrdfError& e) {
    CHECK(e.kind == UrdfError::Kind::DanglingLink);
  }

  const char* cyclic = R"(<robot name="r">
    <link name="a"/><link name="b"/><link name="c"/>
    <joint name="j1" type="fixed"><parent link="a"/><child link="b"/></joint>
    <joint name="j2" type="fixed"><parent link="b"/><child link="c"/></joint>
    <joint name="j3" type="fixed"><parent link="c"/><child link="b"/></joint>
  </robot>)";
  CHECK_THROWS_AS(parse_urdf(cyclic), UrdfError);
}

TEST_CASE("7-DoF fixture: counts and joint order") {
  KinematicChain chain = load_urdf_file(asset("test_arm_7dof.urdf"));
  CHECK(chain.n() == 7);
  CHECK(chain.m() == 8);
  CHECK(chain.q_joint_names() ==
        std::vector<std::string>{"j1", "j2", "j3", "j4", "j5", "j6", "j7"});
  CHECK(chain.links[chain.root_link] == "base_link");
}

TEST_CASE("fk: zero pose accumulates fixed origins") {
  KinematicChain chain = load_urdf_file(asset("test_arm_7dof.urdf"));
  RobotPose pose = forward_kinematics(chain, JointVector::Zero(7));
  auto world = oracle::fk(chain, JointVector::Zero(7));
  for (int i = 0; i < chain.m(); ++i) {
    CHECK((pose.p.col(i) - world[i].translation()).norm() < 1e-12);
  }
  // first two links stack plain z-offsets before any rpy enters
  CHECK((pose.p.col(chain.link_index("link1")) - Vec3(0, 0, 0.10)).norm() < 1e-15);
  CHECK((pose.p.col(chain.link_index("link2")) - Vec3(0, 0, 0.18)).norm() < 1e-15);
}

TEST_CASE("fk: planar 2-dof closed form") {
  KinematicChain chain = parse_urdf(kPlanar2Dof);
  const double t1 = 0.6, t2 = -0.9, L1 = 0.4, L2 = 0.3;
  JointVector q(2);
  q << t1, t2;
  RobotPose pose = forward_kinematics(chain, q);
  Vec3 tip = pose.p.col(chain.link_index("tip"));
  CHECK(tip.x() == doctest::Approx(L1 * std::cos(t1) + L2 * std::cos(t1 + t2)).epsilon(1e-12));
  CHECK(tip.y() == doctest::Approx(L1 * std::sin(t1) + L2 * std::sin(t1 + t2)).epsilon(1e-12));
  CHECK(tip.z() == doctest::Approx(0.0));
}

TEST_CASE("fk matches the transform-composition oracle at random poses") {
  KinematicChain chain = load_urdf_file(asset("test_arm_7dof.urdf"));
  Rng rng(21);
  auto limits = chain.joint_limits();
  for (int trial = 0; trial < 50; ++trial) {
    JointVector q(chain.n());
    for (int i = 0; i < chain.n(); ++i) q[i] = rng.uniform(limits[i].first, limits[i].second);
    RobotPose pose = forward_kinematics(chain, q);
    auto world = oracle::fk(chain, q);
    for (int i = 0; i < chain.m(); ++i) {
      CHECK((pose.p.col(i) - world[i].translation()).norm() < 1e-9);
      CHECK((sixd_to_rotmat(pose.r.col(i)) - world[i].linear()).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("fk: rigid-body property and rotation validity") {
  KinematicChain chain = load_urdf_file(asset("test_arm_7dof.urdf"));
  Rng rng(22);
  auto limits = chain.joint_limits();
  for (int trial = 0; trial < 30; ++trial) {
    JointVector q(chain.n());
    for (int i = 0; i < chain.n(); ++i) q[i] = rng.uniform(limits[i].first, limits[i].second);
    RobotPose pose = forward_kinematics(chain, q);
    for (size_t j = 0; j < chain.joints.size(); ++j) {
      const auto& js = chain.joints[j];
      const Vec3 d = pose.p.col(chain.link_index(js.child_link)) -
                     pose.p.col(chain.link_index(js.parent_link));
      CHECK(d.norm() == doctest::Approx(js.origin_xyz.norm()).epsilon(1e-9));
    }
    for (int i = 0; i < chain.m(); ++i) {
      CHECK(is_rotation(sixd_to_rotmat(pose.r.col(i))));
    }
  }
}

TEST_CASE("fk rejects dimension mismatch") {
  KinematicChain chain = parse_urdf(kPlanarArm);
  CHECK_THROWS_AS(forward_kinematics(chain, JointVector::Zero(3)), DomainError);
}

TEST_CASE("sampling: degenerate range, determinism, statistics") {
  KinematicChain chain = parse_urdf(kPlanar2Dof);
  RobotProfile prof;
  prof.chain = chain;
  prof.sampling_ranges = {{0.7, 0.7}, {-1.0, 1.0}};

  JointVector a = sample_joint_vector(chain, prof, 99);
  JointVector b = sample_joint_vector(chain, prof, 99);
  CHECK(a == b);
  CHECK(a[0] == 0.7);

  double sum = 0.0, lo = 1e9, hi = -1e9;
  const int kN = 100000;
  for (int i = 0; i < kN; ++i) {
    JointVector q = sample_joint_vector(chain, prof, derive_seed(5, i));
    sum += q[1];
    lo = std::min(lo, q[1]);
    hi = std::max(hi, q[1]);
  }
  CHECK(std::abs(sum / kN) < 0.01);
  CHECK(lo >= -1.0);
  CHECK(hi <= 1.0);
  CHECK(within_limits(chain, a));
}

TEST_CASE("clamp to limits") {
  std::vector<std::pair<double, double>> limits = {{-1.0, 1.0}, {0.0, 0.5}};
  JointVector q(2);
  q << 3.0, -2.0;
  JointVector c = clamp_to_limits(limits, q);
  CHECK(c[0] == 1.0);
  CHECK(c[1] == 0.0);
}
