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

#include "simulmt/autodiff.hpp"

#include "kernels.hpp"

namespace simulmt {

Tape::Tape(const Parameters& params, bool record) : params_(params), record_(record) {
  nodes_.reserve(256);
  backward_.reserve(256);
}

Tape::Var Tape::push(Matrix value, std::function<void(const Matrix&)> backward) {
  Node node;
  node.own = std::move(value);
  nodes_.push_back(std::move(node));
  backward_.push_back(record_ ? std::move(backward) : nullptr);
  return static_cast<Var>(nodes_.size() - 1);
}

Tape::Var Tape::param(int slot) {
  Node node;
  node.ref = &params_.slot_tensor(slot);
  node.slot = slot;
  nodes_.push_back(std::move(node));
  backward_.emplace_back(nullptr);
  return static_cast<Var>(nodes_.size() - 1);
}

Tape::Var Tape::constant(Matrix value) { return push(std::move(value), nullptr); }

const Matrix& Tape::value(Var v) const {
  const auto& n = nodes_[static_cast<std::size_t>(v)];
  return n.ref ? *n.ref : n.own;
}

Matrix& Tape::grad_of(Var v) {
  auto& n = nodes_[static_cast<std::size_t>(v)];
  if (n.grad.size() == 0) {
    const auto& val = value(v);
    n.grad = Matrix::Zero(val.rows(), val.cols());
  }
  return n.grad;
}

Tape::Var Tape::embed(Var table, std::span<const TokenId> ids, int first_pos, double scale) {
  const auto& tab = value(table);
  Matrix out(static_cast<Eigen::Index>(ids.size()), tab.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto id = ids[i];
    if (id < 0 || id >= tab.rows()) {
      throw ValidationError("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(tab.rows()));
    }
    const auto r = static_cast<Eigen::Index>(i);
    out.row(r) = scale * tab.row(id);
    kernels::add_sinusoid(out.row(r), first_pos + static_cast<int>(i));
  }
  std::vector<TokenId> saved(ids.begin(), ids.end());
  return push(std::move(out), [this, table, saved = std::move(saved), scale](const Matrix& g) {
    auto& gt = grad_of(table);
    for (std::size_t i = 0; i < saved.size(); ++i) {
      gt.row(saved[i]) += scale * g.row(static_cast<Eigen::Index>(i));
    }
  });
}

Tape::Var Tape::linear(Var x, Var w, Var b) {
  return push(kernels::linear(value(x), value(w), value(b)), [this, x, w, b](const Matrix& g) {
    grad_of(x).noalias() += g * value(w).transpose();
    grad_of(w).noalias() += value(x).transpose() * g;
    grad_of(b) += g.colwise().sum();
  });
}

Tape::Var Tape::add(Var a, Var b) {
  return push(value(a) + value(b), [this, a, b](const Matrix& g) {
    grad_of(a) += g;
    grad_of(b) += g;
  });
}

Tape::Var Tape::layer_norm(Var x, Var gain, Var bias) {
  if (!record_) return push(kernels::layer_norm(value(x), value(gain), value(bias)), nullptr);
  Matrix xhat;
  Eigen::VectorXd inv_std;
  Matrix y = kernels::layer_norm(value(x), value(gain), value(bias), &xhat, &inv_std);
  return push(std::move(y), [this, x, gain, bias, xhat = std::move(xhat),
                             inv_std = std::move(inv_std)](const Matrix& g) {
    const auto& gv = value(gain);
    grad_of(gain) += (g.array() * xhat.array()).colwise().sum().matrix();
    grad_of(bias) += g.colwise().sum();
    const Matrix dxhat = g.array().rowwise() * gv.row(0).array();
    const double d = static_cast<double>(xhat.cols());
    auto& gx = grad_of(x);
    for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
      const double mean_dxhat = dxhat.row(i).sum() / d;
      const double mean_dxhat_xhat = dxhat.row(i).dot(xhat.row(i)) / d;
      gx.row(i).array() += inv_std(i) * (dxhat.row(i).array() - mean_dxhat -
                                         xhat.row(i).array() * mean_dxhat_xhat);
    }
  });
}

Tape::Var Tape::relu(Var x) {
  return push(value(x).cwiseMax(0.0), [this, x](const Matrix& g) {
    grad_of(x).array() += (value(x).array() > 0.0).select(g.array(), 0.0);
  });
}

Tape::Var Tape::attention(Var q, Var k, Var v, int n_heads, std::vector<int> visible) {
  if (!record_) {
    return push(kernels::masked_attention(value(q), value(k), value(v), n_heads, visible),
                nullptr);
  }
  std::vector<Matrix> probs;
  Matrix out = kernels::masked_attention(value(q), value(k), value(v), n_heads, visible, &probs);
  return push(std::move(out), [this, q, k, v, n_heads, probs = std::move(probs)](const Matrix& g) {
    const auto& qv = value(q);
    const auto& kv = value(k);
    const auto& vv = value(v);
    const auto dh = qv.cols() / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    auto& gq = grad_of(q);
    auto& gk = grad_of(k);
    auto& gv = grad_of(v);
    for (int h = 0; h < n_heads; ++h) {
      const auto& p = probs[static_cast<std::size_t>(h)];
      const auto go = g.middleCols(h * dh, dh);
      gv.middleCols(h * dh, dh).noalias() += p.transpose() * go;
      const Matrix dp = go * vv.middleCols(h * dh, dh).transpose();
      const Eigen::VectorXd row_dot = (p.array() * dp.array()).rowwise().sum();
      const Matrix ds = (p.array() * (dp.array().colwise() - row_dot.array())) * scale;
      gq.middleCols(h * dh, dh).noalias() += ds * kv.middleCols(h * dh, dh);
      gk.middleCols(h * dh, dh).noalias() += ds.transpose() * qv.middleCols(h * dh, dh);
    }
  });
}

Tape::Var Tape::project(Var h, Var table, Var bias) {
  Matrix y = value(h) * value(table).transpose();
  y.rowwise() += value(bias).row(0);
  return push(std::move(y), [this, h, table, bias](const Matrix& g) {
    grad_of(h).noalias() += g * value(table);
    grad_of(table).noalias() += g.transpose() * value(h);
    grad_of(bias) += g.colwise().sum();
  });
}

Tape::Var Tape::log_softmax(Var x) {
  Matrix y = kernels::log_softmax(value(x));
  if (!record_) return push(std::move(y), nullptr);
  const Var out = push(std::move(y), nullptr);
  backward_[static_cast<std::size_t>(out)] = [this, x, out](const Matrix& g) {
    const Matrix p = value(out).array().exp();
    const Eigen::VectorXd gsum = g.rowwise().sum();
    grad_of(x) += g - (p.array().colwise() * gsum.array()).matrix();
  };
  return out;
}

void Tape::backward(Var root, const Matrix& seed) {
  if (!record_) throw RuntimeFailure("backward on a tape that did not record");
  grad_of(root) += seed;
  for (auto i = static_cast<std::size_t>(root) + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (node.grad.size() == 0 || !backward_[i]) continue;
    // Closures only write to lower-indexed (parent) nodes.
    backward_[i](node.grad);
  }
}

void Tape::accumulate_param_grads(std::vector<Matrix>& grads) const {
  for (const auto& node : nodes_) {
    if (node.slot >= 0 && node.grad.size() != 0) {
      grads[static_cast<std::size_t>(node.slot)] += node.grad;
    }
  }
}

}  // namespace simulmt
