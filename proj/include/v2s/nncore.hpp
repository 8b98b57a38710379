#pragma once

#include <Eigen/Dense>
#include <vector>

#include "v2s/error.hpp"

namespace v2s {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { identity, relu, sigmoid, softmax };

const char* activation_name(Activation a);

// One fully connected layer. `weight` is out_dim x in_dim; a frame batch
// X (T x in) maps to X * weight^T + bias^T before the activation.
struct DenseLayer {
  Matrix weight;
  Vector bias;
  Activation activation = Activation::identity;

  int in_dim() const { return static_cast<int>(weight.cols()); }
  int out_dim() const { return static_cast<int>(weight.rows()); }
};

// A stack of dense layers. Construction validates the layer chain:
// adjacent dimensions must agree, softmax may only terminate the stack,
// and every parameter must be finite.
class Network {
 public:
  Network(std::vector<DenseLayer> layers, bool trainable);

  const std::vector<DenseLayer>& layers() const { return layers_; }
  DenseLayer& layer(std::size_t i) { return layers_[i]; }
  const DenseLayer& layer(std::size_t i) const { return layers_[i]; }
  std::size_t depth() const { return layers_.size(); }

  bool trainable() const { return trainable_; }
  void set_trainable(bool t) { trainable_ = t; }

  int input_dim() const { return layers_.front().in_dim(); }
  int output_dim() const { return layers_.back().out_dim(); }
  Activation output_activation() const { return layers_.back().activation; }

  std::size_t parameter_count() const;

 private:
  std::vector<DenseLayer> layers_;
  bool trainable_;
};

// Per-layer activations recorded by a forward pass, consumed by backward.
struct ForwardCache {
  Matrix input;
  std::vector<Matrix> pre_acts;   // T x out, before the activation
  std::vector<Matrix> post_acts;  // T x out, after the activation
};

// Runs the network on a T x input_dim frame batch. When `cache` is given,
// intermediate activations are recorded for a later backward pass.
Matrix network_forward(const Network& net, const Matrix& input, ForwardCache* cache = nullptr);

// Row-wise log-probabilities of the final softmax layer, computed from the
// cached pre-activations with the max-subtracted log-sum-exp form. This is
// the numerically stable path for cross-entropy values.
Matrix log_output(const Network& net, const ForwardCache& cache);

// Gradients of a scalar loss with respect to every parameter and the input.
// Parameter gradients are omitted for frozen networks (only the input
// gradient flows through them).
struct GradientBundle {
  std::vector<Matrix> weight_grads;
  std::vector<Vector> bias_grads;
  Matrix input_gradient;

  bool has_param_grads() const { return !weight_grads.empty(); }
};

// Reverse-mode pass. `output_gradient` is dLoss/dOutput (post-activation),
// shaped like the forward output. A softmax final layer is handled through
// its full Jacobian.
GradientBundle network_backward(const Network& net, const ForwardCache& cache,
                                const Matrix& output_gradient);

// Variant for losses that differentiate with respect to the final layer's
// pre-softmax logits (the fused log-softmax route used by cross-entropy).
// Requires a softmax final activation.
GradientBundle network_backward_from_logits(const Network& net, const ForwardCache& cache,
                                            const Matrix& logit_gradient);

// Accumulated squared gradients for AdaGrad, one accumulator per parameter.
struct AdaGradState {
  std::vector<Matrix> weight_accum;
  std::vector<Vector> bias_accum;
  double epsilon = 1e-8;

  static AdaGradState zeros_like(const Network& net);
};

// One AdaGrad update: accum += g^2 first, then p -= lr * g / (sqrt(accum) + eps).
// Refuses frozen networks.
void adagrad_step(Network& net, const GradientBundle& grads, AdaGradState& state, double lr);

// Seeded uniform init: Glorot bound per layer, with a 4x gain on sigmoid
// hidden layers and a 0.1x damping on the output layer. Biases start at 0.
void init_parameters(Network& net, std::uint64_t seed);

}  // namespace v2s
