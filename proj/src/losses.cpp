#include "v2s/losses.hpp"

#include <cmath>
#include <sstream>

namespace v2s {

namespace {

void check_posterior(const Matrix& posterior) {
  if (posterior.rows() < 1) throw ShapeError("posterior has no frames");
  for (Eigen::Index t = 0; t < posterior.rows(); ++t) {
    const double sum = posterior.row(t).sum();
    if (std::abs(sum - 1.0) > 1e-6 || posterior.row(t).minCoeff() < 0.0) {
      std::ostringstream os;
      os << "posterior row " << t << " is not stochastic (sum = " << sum << ")";
      throw ValidationError(os.str());
    }
  }
}

}  // namespace

LossValue mse_loss(const Matrix& y_hat, const Matrix& y) {
  if (y_hat.rows() != y.rows() || y_hat.cols() != y.cols()) {
    std::ostringstream os;
    os << "mse_loss shapes differ: " << y_hat.rows() << "x" << y_hat.cols() << " vs " << y.rows()
       << "x" << y.cols();
    throw ShapeError(os.str());
  }
  const double t = static_cast<double>(y_hat.rows());
  const Matrix diff = y_hat - y;
  LossValue out;
  out.value = diff.array().square().sum() / t;
  out.gradient = (2.0 / t) * diff;
  return out;
}

LossValue sce_loss(const SpeakerCode& code, const Matrix& posterior) {
  if (posterior.cols() != code.count()) {
    std::ostringstream os;
    os << "posterior has " << posterior.cols() << " classes, code expects " << code.count();
    throw ShapeError(os.str());
  }
  check_posterior(posterior);

  const double t = static_cast<double>(posterior.rows());
  const int target = code.index();
  double total = 0.0;
  for (Eigen::Index r = 0; r < posterior.rows(); ++r)
    total -= std::log(std::max(posterior(r, target), kLogFloor));

  LossValue out;
  out.value = total / t;
  out.gradient = posterior / t;
  out.gradient.col(target).array() -= 1.0 / t;
  return out;
}

LossValue sce_loss_frames(const std::vector<int>& labels, const Matrix& posterior) {
  if (static_cast<Eigen::Index>(labels.size()) != posterior.rows())
    throw ShapeError("label count does not match posterior rows");
  check_posterior(posterior);

  const double t = static_cast<double>(posterior.rows());
  double total = 0.0;
  LossValue out;
  out.gradient = posterior / t;
  for (Eigen::Index r = 0; r < posterior.rows(); ++r) {
    const int label = labels[static_cast<std::size_t>(r)];
    if (label < 0 || label >= posterior.cols())
      throw ValidationError("frame label " + std::to_string(label) + " out of range");
    total -= std::log(std::max(posterior(r, label), kLogFloor));
    out.gradient(r, label) -= 1.0 / t;
  }
  out.value = total / t;
  return out;
}

namespace {

V2sLossParts v2s_loss_impl(const Matrix& x, const Matrix& y_hat, const SpeakerCode& code,
                           const Network& asv, const Network& asr, double omega,
                           bool want_retention_value) {
  if (asv.trainable() || asr.trainable())
    throw ContractError("v2s_loss requires frozen classifier models");
  if (omega < 0.0) throw ValidationError("omega must be non-negative");
  if (x.rows() != y_hat.rows())
    throw ShapeError("input and converted sequences differ in frame count");
  if (asv.output_activation() != Activation::softmax ||
      asr.output_activation() != Activation::softmax)
    throw ContractError("v2s_loss requires softmax classifier outputs");

  // Deception term: SCE through the verifier, gradient via the logits path.
  ForwardCache asv_cache;
  const Matrix v_posterior = network_forward(asv, y_hat, &asv_cache);
  const LossValue sce = sce_loss(code, v_posterior);
  const GradientBundle asv_grads = network_backward_from_logits(asv, asv_cache, sce.gradient);

  V2sLossParts parts;
  parts.sce = sce.value;
  parts.target_posterior = v_posterior.col(code.index()).mean();
  parts.total.value = sce.value;
  parts.total.gradient = asv_grads.input_gradient;

  if (omega > 0.0 || want_retention_value) {
    // Retention term: posteriorgram MSE. R(x) carries no gradient.
    const Matrix r_x = network_forward(asr, x);
    ForwardCache asr_cache;
    const Matrix r_y = network_forward(asr, y_hat, &asr_cache);
    const LossValue retention = mse_loss(r_y, r_x);
    parts.retention = retention.value;
    parts.total.value += omega * retention.value;
    if (omega > 0.0) {
      const GradientBundle asr_grads = network_backward(asr, asr_cache, retention.gradient);
      parts.total.gradient += omega * asr_grads.input_gradient;
    }
  }
  return parts;
}

}  // namespace

LossValue v2s_loss(const Matrix& x, const Matrix& y_hat, const SpeakerCode& code,
                   const Network& asv, const Network& asr, double omega) {
  return v2s_loss_impl(x, y_hat, code, asv, asr, omega, /*want_retention_value=*/false).total;
}

V2sLossParts v2s_loss_parts(const Matrix& x, const Matrix& y_hat, const SpeakerCode& code,
                            const Network& asv, const Network& asr, double omega) {
  return v2s_loss_impl(x, y_hat, code, asv, asr, omega, /*want_retention_value=*/true);
}

}  // namespace v2s
