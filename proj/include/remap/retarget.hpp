#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "remap/mlp.hpp"
#include "remap/pairing.hpp"

namespace remap {

struct RetargetConfig {
  double lr = 1e-4;
  int batch = 2048;  // capped at the training-split size
  double weight_decay = 1e-6;
  int epochs = 30;
  int hidden = 512;
  double val_fraction = 0.1;
  uint64_t seed = 1;
  bool weighted_sampling = true;  // false: plain uniform batches
  // 0 derives ceil(train / batch); a positive value pins it, which is how
  // ablation arms with different dataset sizes get matching iteration
  // counts.
  int steps_per_epoch = 0;
};

// Two-stage supervised map from human poses to robot joint angles. The
// pre-network predicts per-link robot orientations, the post-network turns
// orientations into joint angles. The joint-order contract and limit table
// travel with the weights so a checkpoint stays executable on its own.
struct RetargetModel {
  Mlp f_pre;   // 6k -> hidden -> 6m
  Mlp f_post;  // 6m -> hidden -> n
  int k = 0;
  int m = 0;
  int n = 0;
  uint64_t profile_hash = 0;
  std::vector<std::string> joint_names;               // q-slot order
  std::vector<std::pair<double, double>> limits;      // per q slot
  bool trained = false;
  RetargetConfig config;
  double best_val_link_error = std::numeric_limits<double>::infinity();  // cm
};

RetargetModel make_retarget_model(const RobotProfile& profile, int k, const RetargetConfig& cfg,
                                  uint64_t seed);

struct RetargetPrediction {
  Eigen::Matrix<double, 6, Eigen::Dynamic> r;  // predicted link orientations
  JointVector q_raw;                           // network output
  JointVector q;                               // clamped to the limit table
};

RetargetPrediction predict(const RetargetModel& model, const HumanPose& h);

// Column-per-sample training batch.
struct RetargetBatch {
  Eigen::MatrixXd h;  // 6k x B, flattened human poses
  Eigen::MatrixXd r;  // 6m x B, ground-truth link orientations
  Eigen::MatrixXd q;  // n x B, ground-truth joint angles
};

struct RetargetLosses {
  double pre = 0.0;    // MSE(f_pre(H), R)
  double post = 0.0;   // teacher MSE(f_post(R), q) + student MSE(f_post(f_pre(H)), q)
  double total = 0.0;  // pre + post, no hidden weighting
};

struct RetargetGrads {
  MlpGrads pre, post;
};

// Losses, and when `grads` is given the exact parameter gradients of the
// total. The student term backpropagates through f_pre; the teacher term
// never touches it. No limit clamping anywhere in the losses.
RetargetLosses compute_losses(const RetargetModel& model, const RetargetBatch& batch,
                              RetargetGrads* grads = nullptr);

struct EpochLog {
  int epoch = 0;
  double l_pre = 0.0;
  double l_post = 0.0;
  double l_total = 0.0;
  double val_link_error = 0.0;  // cm, unclamped predictions
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  int best_epoch = -1;
  double best_val_link_error = std::numeric_limits<double>::infinity();
  int total_steps = 0;
  int train_count = 0;
  int val_count = 0;
  bool aborted = false;  // non-finite loss cut training short
};

// Adam on both networks against the summed loss. Batches come from the
// dataset's phi-weighted sampler; validation is a deterministic held-out
// split chosen by hashing sample seeds, and the returned weights are the
// best validation epoch's. A non-finite loss aborts with the last good
// weights instead of throwing.
RetargetModel train_retarget(const PairedDataset& dataset, const RobotProfile& profile,
                             const RetargetConfig& cfg, TrainLog* log = nullptr);

void save_retarget(const std::string& path, const RetargetModel& model);
RetargetModel load_retarget(const std::string& path);

// Content hash of the serialized model; equals the content_hash a
// save_retarget checkpoint records.
uint64_t retarget_weights_hash(const RetargetModel& model);

// Deterministic validation membership shared by every trainer here: marks
// the top fraction of samples ranked by hashed seed, at least one and
// never all. Order-independent, so permuting a dataset keeps the split.
std::vector<char> validation_mask(const PairedDataset& dataset, double fraction);

// Joint-angle frames bound to a joint-name header.
struct MotionFile {
  std::vector<std::string> joint_names;
  std::vector<JointVector> frames;
};

void write_motion(const std::string& path, const MotionFile& motion);
MotionFile read_motion(const std::string& path);

// Per-frame predict over a pose-stream file (the corpus format), clamped
// output. Frames are independent; order and count are preserved. Returns
// the frame count.
size_t retarget_stream(const RetargetModel& model, const std::string& poses_path,
                       const std::string& motion_path);

}  // namespace remap
