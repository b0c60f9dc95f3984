#include <Eigen/Geometry>
#include <algorithm>
#include <filesystem>
#include <nlohmann/json.hpp>

#include "remap/errors.hpp"
#include "remap/io.hpp"
#include "remap/kinematics.hpp"
#include "remap/rng.hpp"

namespace remap {

namespace {

using nlohmann::json;

Mat3 rpy_to_rotmat(const Vec3& rpy) {
  // URDF fixed-axis convention: R = Rz(yaw) Ry(pitch) Rx(roll).
  return (Eigen::AngleAxisd(rpy.z(), Vec3::UnitZ()) *
          Eigen::AngleAxisd(rpy.y(), Vec3::UnitY()) *
          Eigen::AngleAxisd(rpy.x(), Vec3::UnitX()))
      .toRotationMatrix();
}

Vec3 json_vec3(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) {
    throw ConfigError(what + " must be a 3-element array");
  }
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace

RobotPose forward_kinematics(const KinematicChain& chain, const JointVector& q) {
  if (q.size() != chain.n()) {
    throw DomainError("joint vector has " + std::to_string(q.size()) + " entries, chain expects " +
                      std::to_string(chain.n()));
  }
  std::vector<int> slot_of_joint(chain.joints.size(), -1);
  for (size_t s = 0; s < chain.q_slot_joint.size(); ++s) {
    slot_of_joint[chain.q_slot_joint[s]] = static_cast<int>(s);
  }

  std::vector<Mat3> rot(chain.m());
  std::vector<Vec3> pos(chain.m());
  rot[chain.root_link] = Mat3::Identity();
  pos[chain.root_link] = Vec3::Zero();

  for (int j : chain.dfs_joints) {
    const JointSpec& js = chain.joints[j];
    const int pi = chain.link_index(js.parent_link);
    const int ci = chain.link_index(js.child_link);
    Mat3 r = rot[pi] * rpy_to_rotmat(js.origin_rpy);
    const Vec3 p = pos[pi] + rot[pi] * js.origin_xyz;
    if (js.type == JointType::Revolute) {
      r = r * axis_angle_to_rotmat(js.axis * q[slot_of_joint[j]]);
    }
    rot[ci] = r;
    pos[ci] = p;
  }

  RobotPose pose;
  pose.r.resize(6, chain.m());
  pose.p.resize(3, chain.m());
  for (int i = 0; i < chain.m(); ++i) {
    pose.r.col(i) = rotmat_to_sixd(rot[i]);
    pose.p.col(i) = pos[i];
  }
  return pose;
}

std::vector<int> RobotProfile::key_link_indices() const {
  std::vector<int> out;
  out.reserve(key_links.size());
  for (const auto& name : key_links) out.push_back(chain.link_index(name));
  return out;
}

RobotProfile load_profile(const std::string& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("profile '" + path + "': " + e.what());
  }

  RobotProfile prof;
  if (!j.contains("urdf") || !j["urdf"].is_string()) {
    throw ConfigError("profile '" + path + "' has no \"urdf\" path");
  }
  const auto urdf_rel = std::filesystem::path(j["urdf"].get<std::string>());
  const auto urdf_path =
      urdf_rel.is_absolute() ? urdf_rel : std::filesystem::path(path).parent_path() / urdf_rel;
  prof.urdf_path = urdf_path.string();
  const std::string urdf_text = read_file(prof.urdf_path);
  prof.chain = parse_urdf(urdf_text);
  prof.content_hash = fnv1a64(text + urdf_text);

  for (const auto& name : j.value("key_links", json::array())) {
    prof.key_links.push_back(name.get<std::string>());
    if (prof.chain.link_index(prof.key_links.back()) < 0) {
      throw ConfigError("profile key link '" + prof.key_links.back() + "' is not in the URDF");
    }
  }

  for (const auto& entry : j.value("human_joint_map", json::array())) {
    MapEntry me;
    me.robot_link = entry.at("robot_link").get<std::string>();
    me.human_joint = entry.at("human_joint").get<int>();
    me.weight = entry.value("weight", 1.0);
    if (prof.chain.link_index(me.robot_link) < 0) {
      throw ConfigError("mapped link '" + me.robot_link + "' is not in the URDF");
    }
    if (me.human_joint < 0) throw ConfigError("negative reference-body joint index");
    if (!(me.weight > 0.0)) throw ConfigError("map weight for '" + me.robot_link + "' must be > 0");
    prof.human_joint_map.push_back(std::move(me));
  }

  prof.sampling_ranges = prof.chain.joint_limits();
  if (j.contains("sampling_ranges")) {
    const auto names = prof.chain.q_joint_names();
    for (const auto& [jname, range] : j["sampling_ranges"].items()) {
      auto it = std::find(names.begin(), names.end(), jname);
      if (it == names.end()) {
        throw ConfigError("sampling range for unknown joint '" + jname + "'");
      }
      const size_t slot = it - names.begin();
      if (!range.is_array() || range.size() != 2) {
        throw ConfigError("sampling range for '" + jname + "' must be [lo, hi]");
      }
      const double lo = range[0].get<double>();
      const double hi = range[1].get<double>();
      const auto [llo, lhi] = prof.sampling_ranges[slot];
      if (lo > hi || lo < llo - 1e-12 || hi > lhi + 1e-12) {
        throw ConfigError("sampling range for '" + jname + "' is outside the joint limits");
      }
      prof.sampling_ranges[slot] = {lo, hi};
    }
  }

  if (j.contains("theta")) {
    const auto& t = j["theta"];
    prof.theta.s = t.value("s", 1.0);
    if (t.contains("t")) prof.theta.t = json_vec3(t["t"], "theta.t");
    for (const auto& [lname, s] : t.value("per_link", json::object()).items()) {
      if (prof.chain.link_index(lname) < 0) {
        throw ConfigError("theta per-link scale for unknown link '" + lname + "'");
      }
      prof.theta.per_link[lname] = s.get<double>();
    }
  }
  if (j.contains("theta_ranges")) {
    const auto& t = j["theta_ranges"];
    if (t.contains("s")) {
      prof.theta_ranges.s_min = t["s"][0].get<double>();
      prof.theta_ranges.s_max = t["s"][1].get<double>();
    }
    if (t.contains("t")) {
      // Either one [lo, hi] for every component or three of them.
      const auto& range = t["t"];
      if (range.size() == 2 && range[0].is_number()) {
        prof.theta_ranges.t_min.setConstant(range[0].get<double>());
        prof.theta_ranges.t_max.setConstant(range[1].get<double>());
      } else if (range.size() == 3) {
        for (int c = 0; c < 3; ++c) {
          prof.theta_ranges.t_min[c] = range[c][0].get<double>();
          prof.theta_ranges.t_max[c] = range[c][1].get<double>();
        }
      } else {
        throw ConfigError("theta_ranges.t must be [lo, hi] or three [lo, hi] pairs");
      }
    }
    if (prof.theta_ranges.s_min > prof.theta_ranges.s_max ||
        (prof.theta_ranges.t_min.array() > prof.theta_ranges.t_max.array()).any()) {
      throw ConfigError("theta_ranges min > max");
    }
  }
  return prof;
}

JointVector sample_joint_vector(const KinematicChain& chain, const RobotProfile& profile,
                                uint64_t seed) {
  Rng rng(seed);
  JointVector q(chain.n());
  for (int i = 0; i < chain.n(); ++i) {
    const auto [lo, hi] = profile.sampling_ranges[i];
    q[i] = rng.uniform(lo, hi);
  }
  return q;
}

bool within_limits(const KinematicChain& chain, const JointVector& q, double tol) {
  const auto limits = chain.joint_limits();
  for (int i = 0; i < q.size(); ++i) {
    if (q[i] < limits[i].first - tol || q[i] > limits[i].second + tol) return false;
  }
  return true;
}

JointVector clamp_to_limits(const std::vector<std::pair<double, double>>& limits,
                            const JointVector& q) {
  JointVector out = q;
  for (int i = 0; i < out.size(); ++i) {
    out[i] = std::clamp(out[i], limits[i].first, limits[i].second);
  }
  return out;
}

}  // namespace remap
