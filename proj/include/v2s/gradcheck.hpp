#pragma once

#include <functional>

#include "v2s/losses.hpp"
#include "v2s/nncore.hpp"

namespace v2s {

// Scalar loss of a network output, returning the value and the gradient
// with respect to that output.
using OutputLossFn = std::function<LossValue(const Matrix& output)>;

// Compares analytic backpropagation against central finite differences
// (step h) for every parameter and every input entry. Returns
//   max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
// The network is copied internally, so frozen models can be checked too.
double gradient_check(const Network& net, const OutputLossFn& loss, const Matrix& input, double h);

}  // namespace v2s
