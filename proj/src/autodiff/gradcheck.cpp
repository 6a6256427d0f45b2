#include "tactis/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace tactis::ad {

double finite_difference_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                               double eps) {
  if (!(eps > 0.0)) throw Error("finite_difference_check: eps must be positive");
  for (auto& p : params) p.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor y = f();
    tape.backward(y);
  }

  NoGradScope no_grad;
  double worst = 0.0;
  for (auto& p : params) {
    const std::vector<double> analytic = p.grad();
    auto values = p.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      auto at = [&](double h) {
        values[i] = saved + h;
        return f().item();
      };
      // five-point stencil: O(eps^4) truncation, so eps can be large enough to keep roundoff small
      const double numeric = (8.0 * (at(eps) - at(-eps)) - (at(2.0 * eps) - at(-2.0 * eps))) / (12.0 * eps);
      values[i] = saved;
      const double err =
          std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + std::abs(numeric) + 1e-12);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, Tensor point,
                               double eps) {
  if (!point.requires_grad()) point = Tensor::parameter(point.shape(), {point.data().begin(), point.data().end()});
  return finite_difference_check([&] { return f(point); }, {point}, eps);
}

}  // namespace tactis::ad
