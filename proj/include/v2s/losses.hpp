#pragma once

#include <vector>

#include "v2s/nncore.hpp"
#include "v2s/speaker_code.hpp"

namespace v2s {

// Loss weight for the posteriorgram-matching term of the composite loss.
inline constexpr double kDefaultOmega = 0.01;

// Posterior probabilities are clamped to this floor inside logs.
inline constexpr double kLogFloor = 1e-12;

// A scalar loss together with its gradient. Which argument the gradient
// refers to is documented per loss.
struct LossValue {
  double value = 0.0;
  Matrix gradient;
};

// Mean squared error over a frame sequence, normalized by the frame count
// only: value = (1/T) * sum over all entries of (y_hat - y)^2.
// Gradient is with respect to y_hat.
LossValue mse_loss(const Matrix& y_hat, const Matrix& y);

// Softmax cross-entropy of a row-stochastic posterior sequence against a
// fixed one-hot code: value = -(1/T) * sum_t log v_t(target).
// The gradient is taken with respect to the pre-softmax logits of the
// network that produced `posterior` (row t: (v_t - l) / T), i.e. the fused
// log-softmax form consumed by network_backward_from_logits.
LossValue sce_loss(const SpeakerCode& code, const Matrix& posterior);

// Frame-level variant with one label per row, used for posteriorgram
// classifiers. Same value/gradient conventions as sce_loss.
LossValue sce_loss_frames(const std::vector<int>& labels, const Matrix& posterior);

// The composite attack loss:
//   L = SCE(code, V(y_hat)) + omega * MSE(R(x), R(y_hat)).
// V and R must be frozen; the gradient is with respect to y_hat only, and
// R(x) is treated as a constant. `x` and `y_hat` are frame sequences in the
// same (normalized) feature space the two classifiers were trained on.
LossValue v2s_loss(const Matrix& x, const Matrix& y_hat, const SpeakerCode& code,
                   const Network& asv, const Network& asr, double omega);

// Same computation with the individual terms exposed.
struct V2sLossParts {
  LossValue total;
  double sce = 0.0;                 // deception term
  double retention = 0.0;           // unweighted posteriorgram MSE term
  double target_posterior = 0.0;    // mean over frames of V(y_hat) at the target
};
V2sLossParts v2s_loss_parts(const Matrix& x, const Matrix& y_hat, const SpeakerCode& code,
                            const Network& asv, const Network& asr, double omega);

}  // namespace v2s
