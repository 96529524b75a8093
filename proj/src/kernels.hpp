// Copyright 2026 The simulmt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "simulmt/parameters.hpp"

namespace simulmt::kernels {

inline constexpr double kLayerNormEps = 1e-5;

inline Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

/// Row-wise layer norm. `xhat` and `inv_std` are filled when non-null.
inline Matrix layer_norm(const Matrix& x, const Matrix& g, const Matrix& b, Matrix* xhat = nullptr,
                         Eigen::VectorXd* inv_std = nullptr) {
  const auto n = x.rows();
  const auto d = static_cast<double>(x.cols());
  Matrix norm(n, x.cols());
  if (inv_std) inv_std->resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.row(i).sum() / d;
    const RowVector centered = x.row(i).array() - mean;
    const double var = centered.squaredNorm() / d;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    norm.row(i) = centered * inv;
    if (inv_std) (*inv_std)(i) = inv;
  }
  Matrix y = norm.array().rowwise() * g.row(0).array();
  y.rowwise() += b.row(0);
  if (xhat) *xhat = std::move(norm);
  return y;
}

/// Multi-head scaled dot-product attention where query row i sees only key
/// rows [0, visible[i]). Masked keys get exactly zero weight, so their
/// content cannot leak into the output. Per-head probability matrices are
/// stored in `probs` when non-null.
inline Matrix masked_attention(const Matrix& q, const Matrix& k, const Matrix& v, int n_heads,
                               std::span<const int> visible, std::vector<Matrix>* probs = nullptr) {
  const auto m = q.rows();
  const auto n = k.rows();
  const auto d = q.cols();
  const auto dh = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix out(m, d);
  if (probs) probs->assign(static_cast<std::size_t>(n_heads), Matrix());
  for (int h = 0; h < n_heads; ++h) {
    Matrix p = (q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose()) * scale;
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto vis = static_cast<Eigen::Index>(visible[static_cast<std::size_t>(i)]);
      auto row = p.row(i);
      const double mx = row.head(vis).maxCoeff();
      double sum = 0.0;
      for (Eigen::Index j = 0; j < vis; ++j) {
        row(j) = std::exp(row(j) - mx);
        sum += row(j);
      }
      row.head(vis) /= sum;
      if (vis < n) row.tail(n - vis).setZero();
    }
    out.middleCols(h * dh, dh) = p * v.middleCols(h * dh, dh);
    if (probs) (*probs)[static_cast<std::size_t>(h)] = std::move(p);
  }
  return out;
}

inline void add_sinusoid(Eigen::Ref<RowVector> row, int pos) {
  const auto d = row.size();
  for (Eigen::Index i = 0; i < d; i += 2) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
    row(i) += std::sin(pos * freq);
    if (i + 1 < d) row(i + 1) += std::cos(pos * freq);
  }
}

inline Matrix log_softmax(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mx = x.row(i).maxCoeff();
    const double lse = mx + std::log((x.row(i).array() - mx).exp().sum());
    out.row(i) = x.row(i).array() - lse;
  }
  return out;
}

}  // namespace simulmt::kernels
