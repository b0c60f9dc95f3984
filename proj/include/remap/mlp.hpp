#pragma once

#include <Eigen/Core>
#include <cstdint>

namespace remap {

enum class Activation { Identity, Gelu };

// GELU, tanh approximation:
//   g(z) = 0.5 z (1 + tanh(c (z + a z^3))),  c = sqrt(2/pi), a = 0.044715.
// The constants are fixed so checkpoints trained here always reload to the
// same function.
double gelu(double z);
double gelu_derivative(double z);

struct MlpGrads {
  Eigen::MatrixXd w1, w2;
  Eigen::VectorXd b1, b2;
};

// One-hidden-layer perceptron, y = W2 act(W1 x + b1) + b2. Batches are
// matrices with one sample per column.
struct Mlp {
  int input_dim = 0, hidden_dim = 0, output_dim = 0;
  Eigen::MatrixXd w1;  // hidden x input
  Eigen::VectorXd b1;  // hidden
  Eigen::MatrixXd w2;  // output x hidden
  Eigen::VectorXd b2;  // output
  Activation act = Activation::Gelu;

  // Cached pre-activations for the batch that produced an output; backward
  // consumes it.
  struct Trace {
    Eigen::MatrixXd x;   // input x batch
    Eigen::MatrixXd z1;  // hidden x batch, before activation
    Eigen::MatrixXd h;   // hidden x batch, after activation
  };

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Trace& trace) const;

  // Exact gradients of the forward map. grad_y is output x batch; fills
  // grads (accumulating onto zero-initialized buffers) and returns grad_x.
  Eigen::MatrixXd backward(const Trace& trace, const Eigen::MatrixXd& grad_y,
                           MlpGrads& grads) const;

  MlpGrads zero_grads() const;
};

// He-uniform initialization, weights on [-sqrt(6/fan_in), +sqrt(6/fan_in)],
// biases zero. Deterministic per seed.
Mlp make_mlp(int input_dim, int hidden_dim, int output_dim, Activation act, uint64_t seed);

// Mean squared error over all entries, and its gradient wrt `a`.
double mse(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
Eigen::MatrixXd mse_gradient(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

}  // namespace remap
