#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nilmformer/tensor.hpp"

namespace nilmformer {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_param = 0;
  Index worst_coord = 0;
};

// Compares the analytic gradient of the scalar f() against central finite
// differences (f(t+h) - f(t-h)) / 2h per coordinate of each parameter.
// Relative error per coordinate is |ga - gfd| / max(|ga|, |gfd|, 1e-8).
// f must be deterministic: any dropout or masking inside it has to replay
// the same pattern on every call.
GradCheckReport grad_check_report(const std::function<Tensor()>& f,
                                  std::span<const Tensor> params, double step = 1e-5);

double grad_check(const std::function<Tensor()>& f, std::span<const Tensor> params,
                  double step = 1e-5);

}  // namespace nilmformer
