#pragma once

#include <map>
#include <string>

#include "remap/rotations.hpp"

namespace remap {

// Scale-and-offset hyperparameters mapping robot link positions into the
// reference body's coordinate scale before IK targeting. Owned by the
// pairing stage; stored in robot profiles and dataset provenance.
struct ScaleTheta {
  double s = 1.0;
  Vec3 t = Vec3::Zero();
  // Per-link override of s (the offset t always applies).
  std::map<std::string, double> per_link;
};

// Uniform search box for search_theta; t bounds are per component.
struct ThetaRanges {
  double s_min = 0.5, s_max = 4.0;
  Vec3 t_min = Vec3::Constant(-0.5);
  Vec3 t_max = Vec3::Constant(0.5);
};

}  // namespace remap
