/*
 * Copyright 2026 The ranklab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Test-only oracles, independent of the library's compute paths.

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "ranklab/tensor.hpp"

namespace testutil {

// Reference triple-loop multiply.
inline std::vector<double> matmul_oracle(const std::vector<double>& a,
                                         std::size_t m, std::size_t k,
                                         const std::vector<double>& b,
                                         std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p)
        c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

// Softmax oracle that substitutes -inf for masked logits, then applies a
// plain stable softmax.
inline std::vector<double> masked_softmax_oracle(
    const std::vector<double>& row, const std::vector<bool>& allowed) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> x(row.size());
  for (std::size_t i = 0; i < row.size(); ++i)
    x[i] = allowed[i] ? row[i] : -inf;
  double mx = -inf;
  for (double v : x) mx = std::max(mx, v);
  std::vector<double> out(row.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    denom += out[i];
  }
  for (auto& v : out) v /= denom;
  return out;
}

// Central finite-difference gradient of `f` with respect to `param`,
// compared against the autodiff gradient already stored in param.grad().
// Returns the worst per-coordinate relative error, where the comparison
// allows for the resolution limit of central differences themselves:
// a coordinate passes at rtol when |fd - ad| <= atol + rtol*max(|fd|,|ad|),
// with atol = 1e-9 (the fd value of a loss of order 1..10 at step 1e-5 is
// only reliable to ~1e-10 absolute). Equivalently, the returned value is
// max over coordinates of |fd - ad| / (atol/rtol + max(|fd|, |ad|)).
inline double max_grad_rel_error(
    ranklab::Tensor param, const std::function<double()>& eval_loss,
    double step = 1e-5, double atol_over_rtol = 1e-3) {
  double worst = 0.0;
  auto data = param.data();
  auto grad = param.grad();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double saved = data[i];
    data[i] = saved + step;
    const double up = eval_loss();
    data[i] = saved - step;
    const double down = eval_loss();
    data[i] = saved;
    const double fd = (up - down) / (2.0 * step);
    const double ad = grad.empty() ? 0.0 : grad[i];
    const double denom = atol_over_rtol + std::max(std::abs(fd), std::abs(ad));
    worst = std::max(worst, std::abs(fd - ad) / denom);
  }
  return worst;
}

inline double max_abs_diff(std::span<const double> a,
                           std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

} // namespace testutil
