#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "remap/kinematics.hpp"
#include "remap/prior.hpp"
#include "remap/rng.hpp"
#include "remap/theta.hpp"

namespace remap {

// Scale robot link positions into the reference body's frame and attach
// them to the mapped human joints: target = s * P_link + t, with any
// per-link scale override replacing s (t always applies).
std::vector<IkTarget> map_targets(const Eigen::Matrix3Xd& positions, const RobotProfile& profile,
                                  const ScaleTheta& theta);

struct PairedSample {
  JointVector q;
  Eigen::Matrix<double, 6, Eigen::Dynamic> r;  // per-link orientations, FK of q
  HumanPose h;
  double phi = 0.0;          // reconstruction error of h under the prior
  double ik_residual = 0.0;  // meters, mean over targets
  uint64_t seed = 0;
};

struct DatasetProvenance {
  std::string tool_version;
  uint64_t profile_hash = 0;
  uint64_t prior_hash = 0;
  ScaleTheta theta;
  uint64_t base_seed = 0;
  int requested = 0;
  std::string ik_route;
  int ik_max_iters = 0;
  int n = 0;  // joint count
  int m = 0;  // link count
  int k = 0;  // reference-body joint count
  // Set by filter_extreme; tau < 0 marks a raw dataset.
  double tau = -1.0;
  double residual_cap = 0.0;
  double removed_fraction = 0.0;
};

struct PairedDataset {
  DatasetProvenance provenance;
  std::vector<PairedSample> samples;

  Eigen::VectorXd phis() const;
};

struct PairingConfig {
  IkConfig ik;
  int workers = 0;  // 0: library default thread count
};

// One dataset row: sample q within the profile's ranges, run FK, scale the
// key-link positions into the body frame, solve latent IK, reconstruct, and
// score. Deterministic per seed.
PairedSample generate_one(const RobotProfile& profile, const PriorModel& prior,
                          const ReferenceBody& body, const ScaleTheta& theta, uint64_t seed,
                          const IkConfig& ik);

// The generation loop over derive_seed(base_seed, i), parallel across
// sample indices. Output is identical at any worker count because every
// sample is a pure function of its own seed.
PairedDataset generate_pairs(const RobotProfile& profile, const PriorModel& prior,
                             const ReferenceBody& body, const ScaleTheta& theta, int count,
                             uint64_t base_seed, const PairingConfig& cfg = {});

// Plain serial loop, no threading constructs. The reference the parallel
// path is tested and benchmarked against.
PairedDataset generate_pairs_serial(const RobotProfile& profile, const PriorModel& prior,
                                    const ReferenceBody& body, const ScaleTheta& theta, int count,
                                    uint64_t base_seed, const IkConfig& ik = {});

struct FilterResult {
  PairedDataset kept;
  double tau = 0.0;
  double removed_fraction = 0.0;  // share with phi > tau
  int removed_by_phi = 0;
  int removed_by_residual = 0;  // phi <= tau but ik_residual above the cap
};

// tau = mean(phi) + population std(phi); keeps exactly the samples with
// phi <= tau, minus any whose IK residual exceeds residual_cap (a guard
// against well-reconstructed poses that never reached their targets).
FilterResult filter_extreme(const PairedDataset& dataset, const Eigen::VectorXd& phi,
                            double residual_cap = 0.10);

// Linear, decreasing, 1 at phi_min and 0.5 at tau. Degenerate spread
// (tau <= phi_min) resolves to 1.
double resample_probability(double phi, double phi_min, double tau);

// Batch draws for training: uniform index proposals accepted with
// resample_probability, unique within a batch, repeatable per seed.
class BatchSampler {
 public:
  // weighted = false degrades to plain uniform sampling (the ablation's
  // no-filter arm and datasets with no spread).
  BatchSampler(const PairedDataset& dataset, uint64_t seed, bool weighted = true);

  std::vector<int> next_batch(int batch_size);

  int size() const { return static_cast<int>(accept_.size()); }
  // Bernoulli proposals accepted / made, over the sampler's lifetime.
  double acceptance_rate() const;
  double mean_acceptance_probability() const;

 private:
  std::vector<double> accept_;
  std::vector<char> used_;
  Rng rng_;
  bool weighted_ = true;
  uint64_t proposed_ = 0;
  uint64_t accepted_ = 0;
};

struct CalibrationPair {
  JointVector q;
  HumanPose h;
};

struct ThetaSearchResult {
  ScaleTheta theta;
  double error = 0.0;  // meters, mean over pairs and body joints
  int best_trial = -1;
};

// Uniform random search: per trial draw s and t from the ranges, run the
// pairing map on each calibration q, and score against the calibration
// pose by mean joint-position distance. Returns the argmin (first trial on
// exact ties).
ThetaSearchResult search_theta(const std::vector<CalibrationPair>& calibration,
                               const RobotProfile& profile, const PriorModel& prior,
                               const ReferenceBody& body, const ThetaRanges& ranges, int trials,
                               uint64_t seed, const IkConfig& ik = {});

// Line-delimited dataset file: '#' header lines carrying the provenance,
// then one sample per line in the order q, R, H, phi, ik_residual, seed.
void write_dataset(const std::string& path, const PairedDataset& dataset);
PairedDataset read_dataset(const std::string& path);

// Self-consistency: the profile hash matches, seeds are unique, and FK of
// every stored q reproduces the stored orientations within 1e-9. Throws
// with the offending sample index.
void verify_dataset(const PairedDataset& dataset, const RobotProfile& profile);

// Calibration file: a header binding n and k, then one "q then flattened
// pose" line per pair.
void write_calibration(const std::string& path, const std::vector<CalibrationPair>& pairs);
std::vector<CalibrationPair> read_calibration(const std::string& path);

}  // namespace remap
