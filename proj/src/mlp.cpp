#include "remap/mlp.hpp"

#include <cmath>

#include "remap/errors.hpp"
#include "remap/rng.hpp"

namespace remap {

namespace {
constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kA = 0.044715;
}  // namespace

double gelu(double z) {
  const double u = kC * (z + kA * z * z * z);
  return 0.5 * z * (1.0 + std::tanh(u));
}

double gelu_derivative(double z) {
  const double u = kC * (z + kA * z * z * z);
  const double t = std::tanh(u);
  const double du = kC * (1.0 + 3.0 * kA * z * z);
  return 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * du;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  Trace trace;
  return forward(x, trace);
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Trace& trace) const {
  if (x.rows() != input_dim) {
    throw DomainError("forward: input has " + std::to_string(x.rows()) + " rows, net expects " +
                      std::to_string(input_dim));
  }
  trace.x = x;
  trace.z1 = (w1 * x).colwise() + b1;
  if (act == Activation::Gelu) {
    trace.h = trace.z1.unaryExpr([](double z) { return gelu(z); });
  } else {
    trace.h = trace.z1;
  }
  return (w2 * trace.h).colwise() + b2;
}

Eigen::MatrixXd Mlp::backward(const Trace& trace, const Eigen::MatrixXd& grad_y,
                              MlpGrads& grads) const {
  grads.w2 += grad_y * trace.h.transpose();
  grads.b2 += grad_y.rowwise().sum();
  Eigen::MatrixXd grad_h = w2.transpose() * grad_y;
  Eigen::MatrixXd grad_z1;
  if (act == Activation::Gelu) {
    grad_z1 = grad_h.cwiseProduct(trace.z1.unaryExpr([](double z) { return gelu_derivative(z); }));
  } else {
    grad_z1 = std::move(grad_h);
  }
  grads.w1 += grad_z1 * trace.x.transpose();
  grads.b1 += grad_z1.rowwise().sum();
  return w1.transpose() * grad_z1;
}

MlpGrads Mlp::zero_grads() const {
  MlpGrads g;
  g.w1 = Eigen::MatrixXd::Zero(hidden_dim, input_dim);
  g.b1 = Eigen::VectorXd::Zero(hidden_dim);
  g.w2 = Eigen::MatrixXd::Zero(output_dim, hidden_dim);
  g.b2 = Eigen::VectorXd::Zero(output_dim);
  return g;
}

Mlp make_mlp(int input_dim, int hidden_dim, int output_dim, Activation act, uint64_t seed) {
  if (input_dim <= 0 || hidden_dim <= 0 || output_dim <= 0) {
    throw DomainError("make_mlp: dimensions must be positive");
  }
  Mlp net;
  net.input_dim = input_dim;
  net.hidden_dim = hidden_dim;
  net.output_dim = output_dim;
  net.act = act;
  Rng rng(seed);
  const auto he_uniform = [&rng](Eigen::MatrixXd& w, int fan_in) {
    const double limit = std::sqrt(6.0 / fan_in);
    for (int c = 0; c < w.cols(); ++c) {
      for (int r = 0; r < w.rows(); ++r) w(r, c) = rng.uniform(-limit, limit);
    }
  };
  net.w1.resize(hidden_dim, input_dim);
  net.w2.resize(output_dim, hidden_dim);
  he_uniform(net.w1, input_dim);
  he_uniform(net.w2, hidden_dim);
  net.b1 = Eigen::VectorXd::Zero(hidden_dim);
  net.b2 = Eigen::VectorXd::Zero(output_dim);
  return net;
}

double mse(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DomainError("mse: shape mismatch");
  }
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

Eigen::MatrixXd mse_gradient(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (2.0 / static_cast<double>(a.size())) * (a - b);
}

}  // namespace remap
