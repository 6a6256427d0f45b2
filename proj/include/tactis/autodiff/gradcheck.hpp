#pragma once

#include <functional>
#include <vector>

#include "tactis/autodiff/tensor.hpp"

namespace tactis::ad {

/// Compares reverse-mode gradients of a scalar function against five-point central
/// differences with step eps and returns the worst coordinate's relative error
/// |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
///
/// `f` must be deterministic and read the parameters' current values.
/// Parameter values are restored before returning; their gradients are
/// left as computed by the analytic pass.
double finite_difference_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                               double eps);

/// Single-tensor convenience form: `point` is made a parameter if needed.
double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, Tensor point,
                               double eps);

}  // namespace tactis::ad
