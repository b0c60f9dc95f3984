#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "remap/retarget.hpp"

namespace remap {

// Mean over joints of the absolute angle difference folded into [0, pi].
double joint_error(const JointVector& q_pred, const JointVector& q_true);

// FK both configurations and average the Euclidean distance over the
// profile's key links. Centimeters.
double link_error(const KinematicChain& chain, const RobotProfile& profile,
                  const JointVector& q_pred, const JointVector& q_true);

struct EvalReport {
  int samples = 0;
  double joint_rad = 0.0;  // mean joint_error
  double link_cm = 0.0;    // mean link_error
  // Spread of the per-sample link error; synthetic pairs carry no motion
  // grouping, so quantiles stand in for a per-motion breakdown.
  double link_cm_p50 = 0.0;
  double link_cm_p90 = 0.0;
  double link_cm_max = 0.0;
  uint64_t profile_hash = 0;
  uint64_t model_hash = 0;
  uint64_t dataset_prior_hash = 0;
};

// Metrics over a held-out dataset, computed on unclamped predictions.
EvalReport evaluate_model(const RetargetModel& model, const PairedDataset& held_out,
                          const RobotProfile& profile);

std::string report_json(const EvalReport& report);

struct AblationConfig {
  RetargetConfig train;
  std::vector<uint64_t> seeds = {1, 2, 3};
  double held_out_fraction = 0.1;
  double residual_cap = 0.10;
};

struct AblationRow {
  std::string variant;
  uint64_t seed = 0;
  double joint_rad = 0.0;
  double link_cm = 0.0;
  int iterations = 0;
};

struct AblationTable {
  std::vector<AblationRow> rows;  // variant-major, seeds inside
  int held_out = 0;
  double tau = 0.0;

  std::vector<double> link_cm_for(const std::string& variant) const;
  double median_link_cm(const std::string& variant) const;
};

// Trains and scores three variants on a raw (unfiltered) dataset against
// one common held-out split carved off before any filtering:
//   proposed:   filtered data, two-stage network
//   no_filter:  raw data, two-stage, iteration counts pinned to proposed's
//   one_stage:  filtered data, single 6k -> hidden -> n MLP (capacity
//               deliberately not matched to the two-stage pair)
AblationTable run_ablation(const PairedDataset& raw, const RobotProfile& profile,
                           const PriorModel& prior, const AblationConfig& cfg);

// Flat CSV: variant,seed,joint_rad,link_cm,iterations.
std::string ablation_csv(const AblationTable& table);

}  // namespace remap
