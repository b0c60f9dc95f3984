#pragma once

// Shared, lazily built test fixtures. The small body and its prior are
// expensive enough to build once per test binary, cheap enough to keep the
// whole suite fast.

#include <string>
#include <vector>

#include "remap/body.hpp"
#include "remap/kinematics.hpp"
#include "remap/pairing.hpp"
#include "remap/prior.hpp"

namespace fixtures {

inline std::string asset(const char* name) { return std::string(REMAP_ASSETS "/") + name; }

inline const remap::ReferenceBody& small_body() {
  static const remap::ReferenceBody body = remap::load_body(asset("test_body_5.json"));
  return body;
}

inline const std::vector<remap::HumanPose>& small_corpus() {
  static const std::vector<remap::HumanPose> corpus =
      remap::generate_corpus(small_body(), 800, 4, 2024);
  return corpus;
}

inline remap::PriorTrainConfig small_prior_config() {
  remap::PriorTrainConfig cfg;
  cfg.latent_dim = 8;
  cfg.hidden = 64;
  cfg.epochs = 60;
  cfg.batch = 128;
  cfg.lr = 1e-3;
  cfg.seed = 7;
  return cfg;
}

inline const remap::PriorModel& small_prior() {
  static const remap::PriorModel prior =
      remap::train_prior(small_corpus(), small_prior_config());
  return prior;
}

inline const remap::ReferenceBody& full_body() {
  static const remap::ReferenceBody body = remap::load_body(asset("reference_body.json"));
  return body;
}

inline remap::PriorTrainConfig full_prior_config() {
  remap::PriorTrainConfig cfg;
  cfg.latent_dim = 16;
  cfg.hidden = 128;
  cfg.epochs = 30;
  cfg.batch = 256;
  cfg.lr = 1e-3;
  cfg.seed = 21;
  return cfg;
}

// Trained on a rank-12 corpus over the full reference body; shared by the
// pairing, retargeting and evaluation suites.
inline const remap::PriorModel& full_prior() {
  static const remap::PriorModel prior = remap::train_prior(
      remap::generate_corpus(full_body(), 2500, 12, 4242), full_prior_config());
  return prior;
}

inline const remap::RobotProfile& reachy_profile() {
  static const remap::RobotProfile profile =
      remap::load_profile(asset("reachy_like_profile.json"));
  return profile;
}

// One mid-size raw dataset over the bundled robot, shared wherever a few
// hundred real pairs are enough.
inline const remap::PairedDataset& paired_small() {
  static const remap::PairedDataset dataset = remap::generate_pairs(
      reachy_profile(), full_prior(), full_body(), reachy_profile().theta, 300, 99);
  return dataset;
}

}  // namespace fixtures
