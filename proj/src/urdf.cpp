#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <map>
#include <set>
#include <sstream>

#include "remap/errors.hpp"
#include "remap/io.hpp"
#include "remap/kinematics.hpp"

namespace remap {

namespace {

namespace pt = boost::property_tree;

Vec3 parse_vec3_attr(const std::string& text, const std::string& what) {
  std::istringstream ss(text);
  Vec3 v;
  if (!(ss >> v.x() >> v.y() >> v.z())) {
    throw UrdfError(UrdfError::Kind::BadAttribute, "bad 3-vector in " + what + ": '" + text + "'");
  }
  std::string rest;
  if (ss >> rest) {
    throw UrdfError(UrdfError::Kind::BadAttribute, "trailing data in " + what + ": '" + text + "'");
  }
  return v;
}

double parse_double_attr(const std::string& text, const std::string& what) {
  try {
    size_t pos = 0;
    double v = std::stod(text, &pos);
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    if (pos != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw UrdfError(UrdfError::Kind::BadAttribute, "bad number in " + what + ": '" + text + "'");
  }
}

}  // namespace

int KinematicChain::link_index(const std::string& link_name) const {
  for (size_t i = 0; i < links.size(); ++i) {
    if (links[i] == link_name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<std::string> KinematicChain::q_joint_names() const {
  std::vector<std::string> out;
  out.reserve(q_slot_joint.size());
  for (int j : q_slot_joint) out.push_back(joints[j].name);
  return out;
}

std::vector<std::pair<double, double>> KinematicChain::joint_limits() const {
  std::vector<std::pair<double, double>> out;
  out.reserve(q_slot_joint.size());
  for (int j : q_slot_joint) out.emplace_back(joints[j].limit_lower, joints[j].limit_upper);
  return out;
}

void KinematicChain::finalize() {
  std::set<std::string> link_set(links.begin(), links.end());
  if (link_set.size() != links.size()) {
    throw UrdfError(UrdfError::Kind::BadAttribute, "duplicate link names");
  }

  parent_joint_of_link.assign(links.size(), -1);
  std::set<std::string> children;
  for (size_t j = 0; j < joints.size(); ++j) {
    const JointSpec& js = joints[j];
    const int pi = link_index(js.parent_link);
    const int ci = link_index(js.child_link);
    if (pi < 0 || ci < 0) {
      throw UrdfError(UrdfError::Kind::DanglingLink,
                      "joint '" + js.name + "' references undeclared link '" +
                          (pi < 0 ? js.parent_link : js.child_link) + "'");
    }
    if (parent_joint_of_link[ci] != -1) {
      throw UrdfError(UrdfError::Kind::CyclicGraph,
                      "link '" + js.child_link + "' has more than one parent joint");
    }
    parent_joint_of_link[ci] = static_cast<int>(j);
    children.insert(js.child_link);
  }

  root_link = -1;
  for (size_t i = 0; i < links.size(); ++i) {
    if (children.count(links[i]) == 0) {
      if (root_link != -1) {
        throw UrdfError(UrdfError::Kind::NoRoot, "multiple root links: '" + links[root_link] +
                                                     "' and '" + links[i] + "'");
      }
      root_link = static_cast<int>(i);
    }
  }
  if (root_link == -1) {
    throw UrdfError(UrdfError::Kind::CyclicGraph, "no root link; the joint graph has a cycle");
  }

  // Depth-first traversal from the root; sibling joints in file order.
  std::vector<std::vector<int>> child_joints_of_link(links.size());
  for (size_t j = 0; j < joints.size(); ++j) {
    child_joints_of_link[link_index(joints[j].parent_link)].push_back(static_cast<int>(j));
  }
  dfs_joints.clear();
  q_slot_joint.clear();
  std::vector<char> visited(links.size(), 0);
  std::vector<int> stack = {root_link};
  visited[root_link] = 1;
  while (!stack.empty()) {
    const int link = stack.back();
    stack.pop_back();
    if (link != root_link) dfs_joints.push_back(parent_joint_of_link[link]);
    const auto& cj = child_joints_of_link[link];
    for (auto it = cj.rbegin(); it != cj.rend(); ++it) {
      const int child = link_index(joints[*it].child_link);
      if (visited[child]) {
        throw UrdfError(UrdfError::Kind::CyclicGraph, "cycle through link '" + links[child] + "'");
      }
      visited[child] = 1;
      stack.push_back(child);
    }
  }
  for (size_t i = 0; i < links.size(); ++i) {
    if (!visited[i]) {
      throw UrdfError(UrdfError::Kind::CyclicGraph,
                      "link '" + links[i] + "' is unreachable from the root (cycle)");
    }
  }

  for (int j : dfs_joints) {
    if (joints[j].type == JointType::Revolute) q_slot_joint.push_back(j);
  }
}

KinematicChain parse_urdf(const std::string& xml_text) {
  pt::ptree tree;
  try {
    std::istringstream ss(xml_text);
    pt::read_xml(ss, tree, pt::xml_parser::no_comments);
  } catch (const pt::xml_parser_error& e) {
    throw UrdfError(UrdfError::Kind::MalformedXml, std::string("malformed XML: ") + e.what());
  }

  auto robot = tree.get_child_optional("robot");
  if (!robot) {
    throw UrdfError(UrdfError::Kind::MalformedXml, "no <robot> root element");
  }

  KinematicChain chain;
  chain.name = robot->get<std::string>("<xmlattr>.name", "");

  for (const auto& [key, node] : *robot) {
    if (key == "link") {
      auto name = node.get_optional<std::string>("<xmlattr>.name");
      if (!name) throw UrdfError(UrdfError::Kind::BadAttribute, "<link> without a name");
      chain.links.push_back(*name);
    } else if (key == "joint") {
      JointSpec js;
      auto name = node.get_optional<std::string>("<xmlattr>.name");
      if (!name) throw UrdfError(UrdfError::Kind::BadAttribute, "<joint> without a name");
      js.name = *name;

      const std::string type = node.get<std::string>("<xmlattr>.type", "");
      if (type == "revolute") {
        js.type = JointType::Revolute;
      } else if (type == "fixed") {
        js.type = JointType::Fixed;
      } else {
        throw UrdfError(UrdfError::Kind::UnsupportedJoint,
                        "joint '" + js.name + "' has unsupported type '" + type + "'");
      }

      auto parent = node.get_optional<std::string>("parent.<xmlattr>.link");
      auto child = node.get_optional<std::string>("child.<xmlattr>.link");
      if (!parent || !child) {
        throw UrdfError(UrdfError::Kind::DanglingLink,
                        "joint '" + js.name + "' missing <parent>/<child>");
      }
      js.parent_link = *parent;
      js.child_link = *child;

      if (auto xyz = node.get_optional<std::string>("origin.<xmlattr>.xyz")) {
        js.origin_xyz = parse_vec3_attr(*xyz, "joint '" + js.name + "' origin xyz");
      }
      if (auto rpy = node.get_optional<std::string>("origin.<xmlattr>.rpy")) {
        js.origin_rpy = parse_vec3_attr(*rpy, "joint '" + js.name + "' origin rpy");
      }

      if (js.type == JointType::Revolute) {
        if (auto axis = node.get_optional<std::string>("axis.<xmlattr>.xyz")) {
          js.axis = parse_vec3_attr(*axis, "joint '" + js.name + "' axis");
        }
        const double norm = js.axis.norm();
        if (norm < 1e-9) {
          throw UrdfError(UrdfError::Kind::BadAttribute, "joint '" + js.name + "' axis is zero");
        }
        js.axis /= norm;

        auto lower = node.get_optional<std::string>("limit.<xmlattr>.lower");
        auto upper = node.get_optional<std::string>("limit.<xmlattr>.upper");
        if (!lower || !upper) {
          throw UrdfError(UrdfError::Kind::MissingLimit,
                          "revolute joint '" + js.name + "' has no <limit lower upper>");
        }
        js.limit_lower = parse_double_attr(*lower, "joint '" + js.name + "' limit lower");
        js.limit_upper = parse_double_attr(*upper, "joint '" + js.name + "' limit upper");
        if (js.limit_lower > js.limit_upper) {
          throw UrdfError(UrdfError::Kind::BadAttribute,
                          "joint '" + js.name + "' has lower > upper");
        }
      }
      chain.joints.push_back(std::move(js));
    }
    // other elements (material, gazebo, ...) are ignored
  }

  chain.finalize();
  return chain;
}

KinematicChain load_urdf_file(const std::string& path) { return parse_urdf(read_file(path)); }

}  // namespace remap
