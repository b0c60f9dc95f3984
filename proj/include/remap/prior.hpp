#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "remap/adam.hpp"
#include "remap/body.hpp"
#include "remap/mlp.hpp"

namespace remap {

struct PriorTrainConfig {
  int latent_dim = 32;
  int hidden = 512;
  double beta = 0.005;  // KL weight; 0 disables the stochastic layer
  int epochs = 30;
  int batch = 256;
  double lr = 1e-3;
  double weight_decay = 0.0;
  double val_fraction = 0.1;
  uint64_t seed = 1;
  Activation activation = Activation::Gelu;
};

// Variational autoencoder over flattened poses. The encoder emits means in
// rows [0, d) and log-variances in rows [d, 2d).
struct PriorModel {
  Mlp encoder;  // 6k -> hidden -> 2d
  Mlp decoder;  // d -> hidden -> 6k
  int k = 0;
  int d = 0;
  double beta = 0.005;
  bool trained = false;
  PriorTrainConfig config;
  uint64_t corpus_hash = 0;
  double train_mse = 0.0;  // best epoch, reconstruction only
  double val_mse = 0.0;
};

PriorModel make_untrained_prior(int k, const PriorTrainConfig& cfg);

// Minimizes MSE reconstruction + beta * KL(q(z|H) || N(0, I)) with the
// reparameterization trick; returns the best-validation-epoch weights.
// Throws NumericError when a loss goes non-finite.
PriorModel train_prior(const std::vector<HumanPose>& corpus, const PriorTrainConfig& cfg);

Eigen::VectorXd encode_mean(const PriorModel& prior, const Eigen::VectorXd& flat_pose);
void encode(const PriorModel& prior, const Eigen::VectorXd& flat_pose, Eigen::VectorXd& mu,
            Eigen::VectorXd& logvar);
Eigen::VectorXd decode_flat(const PriorModel& prior, const Eigen::VectorXd& z);
HumanPose decode(const PriorModel& prior, const Eigen::VectorXd& z);

// Denoising pass: decode the encoder mean. Never samples, so it is
// deterministic and repeatable.
HumanPose reconstruct(const PriorModel& prior, const HumanPose& pose);

// Reconstruction error: mean over joints of the squared 6D column
// difference between a pose and its reconstruction.
double phi(const PriorModel& prior, const HumanPose& pose);

void save_prior(const std::string& path, const PriorModel& prior);
PriorModel load_prior(const std::string& path);

// Content hash of the serialized model; equals the content_hash a
// save_prior checkpoint records.
uint64_t prior_weights_hash(const PriorModel& prior);

struct IkTarget {
  int joint = 0;
  Vec3 position = Vec3::Zero();
  double weight = 1.0;
};

// Gradient of the weighted squared target error
//   E(flat) = sum_j w_j ||human_fk(unflatten(flat))_j - target_j||^2
// with respect to every pose coordinate, assembled from the per-joint
// rotation Jacobians. Coordinates of joints that cannot move any target
// come back exactly zero.
Eigen::VectorXd fk_error_gradient(const ReferenceBody& body, const std::vector<IkTarget>& targets,
                                  const Eigen::VectorXd& flat);

// How the IK gradient with respect to z is assembled.
//   Latent: central differences over z itself, 2d+1 objective evaluations
//     per step. The straightforward reference.
//   Pose: analytic backpropagation through the decoder combined with
//     central differences of the target error over the pose coordinates
//     that can actually move a target (ancestors of targeted joints).
//   Analytic: decoder backpropagation against fk_error_gradient; no finite
//     differences anywhere. Cheapest by a wide margin; the default.
// All three assemble the same quantity and are cross-checked in tests.
enum class IkGradRoute { Latent, Pose, Analytic };

struct IkConfig {
  int max_iters = 300;
  double lr = 0.05;
  double lambda = 0.01;  // latent regularizer weight
  double fd_step = 1e-4;
  double converge_residual = 0.03;  // meters, mean over targets
  int plateau_window = 25;          // stop when best stops improving
  double plateau_rtol = 1e-5;
  IkGradRoute route = IkGradRoute::Analytic;
};

const char* ik_route_name(IkGradRoute route);
IkGradRoute ik_route_from_name(const std::string& name);

struct IkResult {
  HumanPose pose;
  Eigen::VectorXd z;
  double objective = 0.0;
  double initial_objective = 0.0;
  double mean_residual = 0.0;        // meters
  std::vector<double> residuals;     // per target, meters
  int iters = 0;
  bool converged = false;
};

// Adam on z from z0 = 0 against
//   sum_j w_j ||human_fk(decode(z))_j - target_j||^2 + lambda ||z||^2.
// Non-convergence comes back flagged in the result, never as an exception.
IkResult ik_solve(const PriorModel& prior, const ReferenceBody& body,
                  const std::vector<IkTarget>& targets, const IkConfig& cfg);

}  // namespace remap
