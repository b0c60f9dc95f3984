#include "remap/body.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <nlohmann/json.hpp>
#include <sstream>

#include "remap/errors.hpp"
#include "remap/io.hpp"
#include "remap/rng.hpp"

namespace remap {

namespace {
using nlohmann::json;

Vec3 json_vec3(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(what + " must be a 3-element array");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}
}  // namespace

int ReferenceBody::joint_index(const std::string& name) const {
  for (size_t i = 0; i < joints.size(); ++i) {
    if (joints[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

ReferenceBody load_body(const std::string& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("body '" + path + "': " + e.what());
  }
  ReferenceBody body;
  body.name = j.value("name", "");
  body.content_hash = fnv1a64(text);
  if (!j.contains("joints") || !j["joints"].is_array() || j["joints"].empty()) {
    throw ConfigError("body '" + path + "' has no joints");
  }
  int idx = 0;
  for (const auto& node : j["joints"]) {
    BodyJoint joint;
    joint.name = node.at("name").get<std::string>();
    joint.parent = node.at("parent").get<int>();
    if (joint.parent < -1 || joint.parent >= idx) {
      throw ConfigError("body joint '" + joint.name +
                        "': parent must precede it (topological order)");
    }
    joint.offset = json_vec3(node.at("offset"), "offset of '" + joint.name + "'");
    joint.box_lo = json_vec3(node.at("box_lo"), "box_lo of '" + joint.name + "'");
    joint.box_hi = json_vec3(node.at("box_hi"), "box_hi of '" + joint.name + "'");
    for (int c = 0; c < 3; ++c) {
      if (joint.box_lo[c] > joint.box_hi[c]) {
        throw ConfigError("body joint '" + joint.name + "': box_lo > box_hi");
      }
    }
    body.joints.push_back(std::move(joint));
    ++idx;
  }
  for (size_t a = 0; a < body.joints.size(); ++a) {
    for (size_t b = a + 1; b < body.joints.size(); ++b) {
      if (body.joints[a].name == body.joints[b].name) {
        throw ConfigError("body has duplicate joint name '" + body.joints[a].name + "'");
      }
    }
  }
  return body;
}

HumanPose angles_to_pose(const AngleVector& angles) {
  if (angles.size() % 3 != 0) throw DomainError("angle vector length must be a multiple of 3");
  const int k = static_cast<int>(angles.size() / 3);
  HumanPose pose(6, k);
  for (int i = 0; i < k; ++i) {
    pose.col(i) = rotmat_to_sixd(axis_angle_to_rotmat(angles.segment<3>(3 * i)));
  }
  return pose;
}

AngleVector pose_to_angles(const HumanPose& pose) {
  AngleVector angles(3 * pose.cols());
  for (int i = 0; i < pose.cols(); ++i) {
    angles.segment<3>(3 * i) = rotmat_to_axis_angle(sixd_to_rotmat(pose.col(i)));
  }
  return angles;
}

Eigen::VectorXd flatten_pose(const HumanPose& pose) {
  return Eigen::Map<const Eigen::VectorXd>(pose.data(), pose.size());
}

HumanPose unflatten_pose(const Eigen::VectorXd& flat, int k) {
  if (flat.size() != 6 * k) {
    throw DomainError("flat pose has " + std::to_string(flat.size()) + " entries, expected " +
                      std::to_string(6 * k));
  }
  return Eigen::Map<const HumanPose>(flat.data(), 6, k);
}

Eigen::Matrix3Xd human_fk(const ReferenceBody& body, const HumanPose& pose) {
  const int k = body.k();
  if (pose.cols() != k) {
    throw DomainError("pose has " + std::to_string(pose.cols()) + " joints, body has " +
                      std::to_string(k));
  }
  Eigen::Matrix3Xd positions(3, k);
  std::vector<Mat3> world(k);
  for (int i = 0; i < k; ++i) {
    const BodyJoint& joint = body.joints[i];
    const Mat3 local = sixd_to_rotmat(pose.col(i));
    if (joint.parent < 0) {
      positions.col(i) = joint.offset;
      world[i] = local;
    } else {
      positions.col(i) = positions.col(joint.parent) + world[joint.parent] * joint.offset;
      world[i] = world[joint.parent] * local;
    }
  }
  return positions;
}

std::vector<HumanPose> generate_corpus(const ReferenceBody& body, int count, int rank,
                                       uint64_t seed, double noise_sigma) {
  const int ka = 3 * body.k();
  if (rank < 0 || rank >= ka) throw ConfigError("corpus rank must be in [0, 3k)");
  if (count < 0) throw ConfigError("corpus count must be non-negative");

  AngleVector mean(ka), lo(ka), hi(ka);
  for (int i = 0; i < body.k(); ++i) {
    for (int c = 0; c < 3; ++c) {
      lo[3 * i + c] = body.joints[i].box_lo[c];
      hi[3 * i + c] = body.joints[i].box_hi[c];
      mean[3 * i + c] = 0.5 * (lo[3 * i + c] + hi[3 * i + c]);
    }
  }

  // Orthonormal factor directions from the QR of a seeded Gaussian matrix;
  // scales decay so a PCA of the output concentrates in the leading
  // directions.
  Eigen::MatrixXd factors(ka, rank);
  if (rank > 0) {
    Rng frng(mix64(seed ^ 0x9d8f3b1ac5e24f6bULL));
    Eigen::MatrixXd gauss(ka, rank);
    for (int c = 0; c < rank; ++c) {
      for (int r = 0; r < ka; ++r) gauss(r, c) = frng.normal();
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
    factors = Eigen::MatrixXd(qr.householderQ()).leftCols(rank);
    for (int f = 0; f < rank; ++f) factors.col(f) *= 0.9 / std::sqrt(static_cast<double>(f + 1));
  }

  std::vector<HumanPose> corpus;
  corpus.reserve(count);
  for (int s = 0; s < count; ++s) {
    Rng rng(derive_seed(seed, static_cast<uint64_t>(s)));
    AngleVector a = mean;
    if (rank > 0) {
      Eigen::VectorXd coeff(rank);
      for (int f = 0; f < rank; ++f) coeff[f] = rng.normal();
      a += factors * coeff;
    }
    if (noise_sigma > 0.0) {
      for (int i = 0; i < ka; ++i) a[i] += noise_sigma * rng.normal();
    }
    for (int i = 0; i < ka; ++i) a[i] = std::clamp(a[i], lo[i], hi[i]);
    corpus.push_back(angles_to_pose(a));
  }
  return corpus;
}

std::vector<HumanPose> generate_uniform_rom(const ReferenceBody& body, int count, uint64_t seed) {
  const int ka = 3 * body.k();
  std::vector<HumanPose> poses;
  poses.reserve(count);
  for (int s = 0; s < count; ++s) {
    Rng rng(derive_seed(seed, static_cast<uint64_t>(s)));
    AngleVector a(ka);
    for (int i = 0; i < body.k(); ++i) {
      for (int c = 0; c < 3; ++c) {
        a[3 * i + c] = rng.uniform(body.joints[i].box_lo[c], body.joints[i].box_hi[c]);
      }
    }
    poses.push_back(angles_to_pose(a));
  }
  return poses;
}

void write_corpus(const std::string& path, const std::vector<HumanPose>& corpus, int k) {
  std::string out = "# corpus v1 k=" + std::to_string(k) +
                    " count=" + std::to_string(corpus.size()) + "\n";
  for (const auto& pose : corpus) {
    if (pose.cols() != k) throw DomainError("corpus pose with wrong joint count");
    for (int i = 0; i < pose.size(); ++i) {
      if (i) out += ' ';
      out += format_double(pose(i % 6, i / 6));
    }
    out += '\n';
  }
  write_file(path, out);
}

std::vector<HumanPose> read_corpus(const std::string& path, int expect_k) {
  const std::string text = read_file(path);
  std::istringstream ss(text);
  std::string header;
  if (!std::getline(ss, header) || header.rfind("# corpus v1 ", 0) != 0) {
    throw IoError("corpus '" + path + "': missing header");
  }
  int k = -1;
  size_t count = 0;
  {
    std::istringstream hs(header.substr(12));
    std::string tok;
    while (hs >> tok) {
      if (tok.rfind("k=", 0) == 0) k = static_cast<int>(parse_u64(tok.substr(2)));
      if (tok.rfind("count=", 0) == 0) count = parse_u64(tok.substr(6));
    }
  }
  if (k <= 0) throw IoError("corpus '" + path + "': bad k in header");
  if (expect_k > 0 && k != expect_k) {
    throw ConfigError("corpus '" + path + "' has k=" + std::to_string(k) + ", expected " +
                      std::to_string(expect_k));
  }
  std::vector<HumanPose> corpus;
  corpus.reserve(count);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const auto tokens = split_ws(line);
    if (static_cast<int>(tokens.size()) != 6 * k) {
      throw IoError("corpus '" + path + "': line with " + std::to_string(tokens.size()) +
                    " values, expected " + std::to_string(6 * k));
    }
    HumanPose pose(6, k);
    for (int i = 0; i < 6 * k; ++i) pose(i % 6, i / 6) = parse_double(tokens[i]);
    corpus.push_back(std::move(pose));
  }
  if (corpus.size() != count) {
    throw IoError("corpus '" + path + "': header count " + std::to_string(count) +
                  " != line count " + std::to_string(corpus.size()));
  }
  return corpus;
}

}  // namespace remap
