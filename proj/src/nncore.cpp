#include "v2s/nncore.hpp"

#include <cmath>
#include <sstream>

#include "v2s/rng.hpp"

namespace v2s {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softmax: return "softmax";
  }
  return "?";
}

Network::Network(std::vector<DenseLayer> layers, bool trainable)
    : layers_(std::move(layers)), trainable_(trainable) {
  if (layers_.empty()) throw ValidationError("network must have at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.weight.rows() == 0 || l.weight.cols() == 0)
      throw ValidationError("layer " + std::to_string(i) + " has an empty weight matrix");
    if (l.bias.size() != l.weight.rows()) {
      std::ostringstream os;
      os << "layer " << i << " bias size " << l.bias.size() << " != out dim " << l.weight.rows();
      throw ShapeError(os.str());
    }
    if (i + 1 < layers_.size() && l.out_dim() != layers_[i + 1].in_dim()) {
      std::ostringstream os;
      os << "layer " << i << " out dim " << l.out_dim() << " != layer " << i + 1 << " in dim "
         << layers_[i + 1].in_dim();
      throw ShapeError(os.str());
    }
    if (l.activation == Activation::softmax && i + 1 != layers_.size())
      throw ValidationError("softmax is only allowed on the final layer");
    if (!l.weight.allFinite() || !l.bias.allFinite())
      throw ValidationError("layer " + std::to_string(i) + " has non-finite parameters");
  }
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

namespace {

Matrix apply_activation(Activation act, const Matrix& z) {
  switch (act) {
    case Activation::identity:
      return z;
    case Activation::relu:
      return z.cwiseMax(0.0);
    case Activation::sigmoid:
      return ((-z.array()).exp() + 1.0).inverse().matrix();
    case Activation::softmax: {
      // Row-wise, max-subtracted for overflow safety.
      Matrix out(z.rows(), z.cols());
      for (Eigen::Index t = 0; t < z.rows(); ++t) {
        const double m = z.row(t).maxCoeff();
        Eigen::ArrayXd e = (z.row(t).array() - m).exp();
        out.row(t) = (e / e.sum()).matrix();
      }
      return out;
    }
  }
  throw ValidationError("unknown activation");
}

// dLoss/dZ given dLoss/dA for element-wise activations.
Matrix activation_backward(Activation act, const Matrix& z, const Matrix& a, const Matrix& da) {
  switch (act) {
    case Activation::identity:
      return da;
    case Activation::relu:
      // Derivative at exactly 0 is taken as 0.
      return (z.array() > 0.0).select(da, Matrix::Zero(da.rows(), da.cols()));
    case Activation::sigmoid:
      return (da.array() * a.array() * (1.0 - a.array())).matrix();
    case Activation::softmax: {
      // Full Jacobian per row: dz_i = a_i * (da_i - sum_j da_j a_j).
      Matrix dz(da.rows(), da.cols());
      for (Eigen::Index t = 0; t < da.rows(); ++t) {
        const double dot = da.row(t).dot(a.row(t));
        dz.row(t) = (a.row(t).array() * (da.row(t).array() - dot)).matrix();
      }
      return dz;
    }
  }
  throw ValidationError("unknown activation");
}

void check_cache(const Network& net, const ForwardCache& cache) {
  if (cache.pre_acts.size() != net.depth() || cache.post_acts.size() != net.depth())
    throw ContractError("forward cache does not match the network (layer count differs)");
  if (cache.input.cols() != net.input_dim())
    throw ContractError("forward cache does not match the network (input width differs)");
  for (std::size_t i = 0; i < net.depth(); ++i) {
    if (cache.pre_acts[i].cols() != net.layer(i).out_dim() ||
        cache.pre_acts[i].rows() != cache.input.rows())
      throw ContractError("forward cache does not match the network (layer " +
                          std::to_string(i) + " shape differs)");
  }
}

GradientBundle backward_impl(const Network& net, const ForwardCache& cache, Matrix delta,
                             bool skip_final_activation) {
  check_cache(net, cache);
  const auto depth = net.depth();
  if (delta.rows() != cache.input.rows() || delta.cols() != net.output_dim()) {
    std::ostringstream os;
    os << "output gradient is " << delta.rows() << "x" << delta.cols() << ", expected "
       << cache.input.rows() << "x" << net.output_dim();
    throw ShapeError(os.str());
  }

  GradientBundle grads;
  if (net.trainable()) {
    grads.weight_grads.resize(depth);
    grads.bias_grads.resize(depth);
  }

  for (std::size_t k = depth; k-- > 0;) {
    const auto& layer = net.layer(k);
    const bool is_final = (k + 1 == depth);
    if (!(is_final && skip_final_activation))
      delta = activation_backward(layer.activation, cache.pre_acts[k], cache.post_acts[k], delta);

    const Matrix& layer_input = (k == 0) ? cache.input : cache.post_acts[k - 1];
    if (net.trainable()) {
      grads.weight_grads[k] = delta.transpose() * layer_input;
      grads.bias_grads[k] = delta.colwise().sum().transpose();
    }
    delta = delta * layer.weight;  // gradient w.r.t. the layer's input
  }
  grads.input_gradient = std::move(delta);
  return grads;
}

}  // namespace

Matrix network_forward(const Network& net, const Matrix& input, ForwardCache* cache) {
  if (input.cols() != net.input_dim()) {
    std::ostringstream os;
    os << "input has " << input.cols() << " columns, network expects " << net.input_dim();
    throw ShapeError(os.str());
  }
  if (input.rows() < 1) throw ShapeError("input has no frames");
  if (!input.allFinite()) throw ValidationError("input contains non-finite values");

  if (cache) {
    cache->input = input;
    cache->pre_acts.clear();
    cache->post_acts.clear();
    cache->pre_acts.reserve(net.depth());
    cache->post_acts.reserve(net.depth());
  }

  Matrix a = input;
  for (const auto& layer : net.layers()) {
    Matrix z = a * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    a = apply_activation(layer.activation, z);
    if (cache) {
      cache->pre_acts.push_back(std::move(z));
      cache->post_acts.push_back(a);
    }
  }
  return a;
}

Matrix log_output(const Network& net, const ForwardCache& cache) {
  check_cache(net, cache);
  if (net.output_activation() != Activation::softmax)
    throw ContractError("log_output requires a softmax final layer");
  const Matrix& z = cache.pre_acts.back();
  Matrix lp(z.rows(), z.cols());
  for (Eigen::Index t = 0; t < z.rows(); ++t) {
    const double m = z.row(t).maxCoeff();
    const double lse = m + std::log((z.row(t).array() - m).exp().sum());
    lp.row(t) = z.row(t).array() - lse;
  }
  return lp;
}

GradientBundle network_backward(const Network& net, const ForwardCache& cache,
                                const Matrix& output_gradient) {
  return backward_impl(net, cache, output_gradient, /*skip_final_activation=*/false);
}

GradientBundle network_backward_from_logits(const Network& net, const ForwardCache& cache,
                                            const Matrix& logit_gradient) {
  if (net.output_activation() != Activation::softmax)
    throw ContractError("logit-gradient backward requires a softmax final layer");
  return backward_impl(net, cache, logit_gradient, /*skip_final_activation=*/true);
}

AdaGradState AdaGradState::zeros_like(const Network& net) {
  AdaGradState s;
  s.weight_accum.reserve(net.depth());
  s.bias_accum.reserve(net.depth());
  for (const auto& l : net.layers()) {
    s.weight_accum.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    s.bias_accum.push_back(Vector::Zero(l.bias.size()));
  }
  return s;
}

void adagrad_step(Network& net, const GradientBundle& grads, AdaGradState& state, double lr) {
  if (!net.trainable()) throw ContractError("adagrad_step applied to a frozen network");
  if (!grads.has_param_grads())
    throw ContractError("gradient bundle carries no parameter gradients");
  if (grads.weight_grads.size() != net.depth() || state.weight_accum.size() != net.depth())
    throw ShapeError("gradient/state layer count does not match the network");

  for (std::size_t k = 0; k < net.depth(); ++k) {
    auto& layer = net.layer(k);
    const Matrix& gw = grads.weight_grads[k];
    const Vector& gb = grads.bias_grads[k];
    if (gw.rows() != layer.weight.rows() || gw.cols() != layer.weight.cols() ||
        gb.size() != layer.bias.size())
      throw ShapeError("gradient shape does not match layer " + std::to_string(k));

    state.weight_accum[k].array() += gw.array().square();
    state.bias_accum[k].array() += gb.array().square();
    layer.weight.array() -=
        lr * gw.array() / (state.weight_accum[k].array().sqrt() + state.epsilon);
    layer.bias.array() -= lr * gb.array() / (state.bias_accum[k].array().sqrt() + state.epsilon);
  }
}

void init_parameters(Network& net, std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t k = 0; k < net.depth(); ++k) {
    auto& layer = net.layer(k);
    // Glorot bound with the logistic-sigmoid gain correction (x4, the
    // bound is derived for tanh); the output layer is damped instead so
    // softmax heads start near the uniform posterior.
    double scale = 1.0;
    if (k + 1 == net.depth()) scale = 0.1;
    else if (layer.activation == Activation::sigmoid) scale = 4.0;
    const double bound = scale * std::sqrt(6.0 / (layer.in_dim() + layer.out_dim()));
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
        layer.weight(i, j) = rng.uniform(-bound, bound);
    layer.bias.setZero();
  }
}

}  // namespace v2s
