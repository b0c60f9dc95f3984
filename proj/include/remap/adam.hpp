#pragma once

#include <Eigen/Core>
#include <cmath>

#include "remap/mlp.hpp"

namespace remap {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Classic L2-coupled decay: added to the gradient as wd * param before
  // the moment updates (not the decoupled variant).
  double weight_decay = 0.0;
};

// Adam for one tensor (matrix or vector). Moments are zero until first use.
class TensorAdam {
 public:
  template <typename T>
  void step(const AdamConfig& cfg, long t, T& param, const T& grad) {
    if (!init_) {
      m_ = Eigen::MatrixXd::Zero(param.rows(), param.cols());
      v_ = Eigen::MatrixXd::Zero(param.rows(), param.cols());
      init_ = true;
    }
    Eigen::MatrixXd g = grad;
    if (cfg.weight_decay != 0.0) g += cfg.weight_decay * param;
    m_ = cfg.beta1 * m_ + (1.0 - cfg.beta1) * g;
    v_ = cfg.beta2 * v_ + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    param.array() -= cfg.lr * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + cfg.eps);
  }

 private:
  Eigen::MatrixXd m_, v_;
  bool init_ = false;
};

class MlpAdam {
 public:
  explicit MlpAdam(AdamConfig cfg) : cfg_(cfg) {}

  void step(Mlp& net, const MlpGrads& grads) {
    ++t_;
    w1_.step(cfg_, t_, net.w1, grads.w1);
    b1_.step(cfg_, t_, net.b1, grads.b1);
    w2_.step(cfg_, t_, net.w2, grads.w2);
    b2_.step(cfg_, t_, net.b2, grads.b2);
  }

  long steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  TensorAdam w1_, b1_, w2_, b2_;
};

// Adam over a single vector (the latent iterate in IK).
class VecAdam {
 public:
  explicit VecAdam(AdamConfig cfg) : cfg_(cfg) {}

  void step(Eigen::VectorXd& x, const Eigen::VectorXd& grad) {
    ++t_;
    state_.step(cfg_, t_, x, grad);
  }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  TensorAdam state_;
};

}  // namespace remap
