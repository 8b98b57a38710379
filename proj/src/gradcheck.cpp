#include "v2s/gradcheck.hpp"

#include <cmath>

namespace v2s {

namespace {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

double loss_at(const Network& net, const OutputLossFn& loss, const Matrix& input) {
  const Matrix out = network_forward(net, input);
  const double value = loss(out).value;
  if (!std::isfinite(value)) throw ValidationError("non-finite loss during gradient check");
  return value;
}

}  // namespace

double gradient_check(const Network& net, const OutputLossFn& loss, const Matrix& input,
                      double h) {
  if (h <= 0.0) throw ValidationError("finite-difference step must be positive");

  Network probe = net;
  probe.set_trainable(true);

  ForwardCache cache;
  const Matrix output = network_forward(probe, input, &cache);
  const LossValue lv = loss(output);
  if (!std::isfinite(lv.value)) throw ValidationError("non-finite loss during gradient check");
  const GradientBundle analytic = network_backward(probe, cache, lv.gradient);

  double worst = 0.0;
  const auto probe_entry = [&](double& entry, double analytic_grad) {
    const double saved = entry;
    entry = saved + h;
    const double plus = loss_at(probe, loss, input);
    entry = saved - h;
    const double minus = loss_at(probe, loss, input);
    entry = saved;
    const double numeric = (plus - minus) / (2.0 * h);
    worst = std::max(worst, relative_error(analytic_grad, numeric));
  };

  for (std::size_t k = 0; k < probe.depth(); ++k) {
    auto& layer = probe.layer(k);
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
        probe_entry(layer.weight(i, j), analytic.weight_grads[k](i, j));
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
      probe_entry(layer.bias(i), analytic.bias_grads[k](i));
  }

  Matrix in = input;
  for (Eigen::Index i = 0; i < in.rows(); ++i) {
    for (Eigen::Index j = 0; j < in.cols(); ++j) {
      const double saved = in(i, j);
      in(i, j) = saved + h;
      const double plus = loss_at(probe, loss, in);
      in(i, j) = saved - h;
      const double minus = loss_at(probe, loss, in);
      in(i, j) = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      worst = std::max(worst, relative_error(analytic.input_gradient(i, j), numeric));
    }
  }
  return worst;
}

}  // namespace v2s
