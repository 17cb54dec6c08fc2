#include "nilmformer/grad_check.hpp"

#include <cmath>

#include "nilmformer/errors.hpp"

namespace nilmformer {

namespace {
Scalar eval_scalar(const std::function<Tensor()>& f) {
  NoGradGuard guard;
  Scalar v = f().item();
  if (!std::isfinite(v)) {
    throw DivergenceError("grad_check: objective is not finite");
  }
  return v;
}
}  // namespace

GradCheckReport grad_check_report(const std::function<Tensor()>& f,
                                  std::span<const Tensor> params, double step) {
  if (step <= 0) throw ConfigError("grad_check: step must be positive");

  for (const Tensor& p : params) p.zero_grad();
  Tensor loss = f();
  if (!std::isfinite(loss.item())) {
    throw DivergenceError("grad_check: objective is not finite");
  }
  backward(loss);

  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (const Tensor& p : params) analytic.push_back(p.grad());

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Matrix& values = params[pi].mutable_value();
    for (Index i = 0; i < values.size(); ++i) {
      const Scalar saved = values.data()[i];
      values.data()[i] = saved + step;
      const Scalar up = eval_scalar(f);
      values.data()[i] = saved - step;
      const Scalar down = eval_scalar(f);
      values.data()[i] = saved;

      const Scalar fd = (up - down) / (2.0 * step);
      const Scalar ga = analytic[pi].data()[i];
      const Scalar rel =
          std::fabs(ga - fd) / std::max({std::fabs(ga), std::fabs(fd), 1e-8});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = pi;
        report.worst_coord = i;
      }
    }
  }
  return report;
}

double grad_check(const std::function<Tensor()>& f, std::span<const Tensor> params,
                  double step) {
  return grad_check_report(f, params, step).max_rel_err;
}

}  // namespace nilmformer
