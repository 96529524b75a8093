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

#include <functional>
#include <span>
#include <vector>

#include "simulmt/common.hpp"
#include "simulmt/parameters.hpp"

namespace simulmt {

/// Reverse-mode tape over matrix-valued nodes, with just the layer-level
/// operations the transformer needs. Parameter leaves reference the
/// Parameters storage directly; their gradients are keyed by storage slot,
/// so tied tensors accumulate into a single gradient.
///
/// With `record == false` the tape only evaluates values (no closures or
/// saved activations), which is how inference-only forward passes share
/// the training code path.
class Tape {
 public:
  using Var = int;

  explicit Tape(const Parameters& params, bool record = true);

  Var param(int slot);
  Var constant(Matrix value);
  const Matrix& value(Var v) const;

  /// scale * table[ids[i]] + sinusoid(first_pos + i), one row per id.
  Var embed(Var table, std::span<const TokenId> ids, int first_pos, double scale);
  /// x * w + b (b is a 1 x cols row).
  Var linear(Var x, Var w, Var b);
  Var add(Var a, Var b);
  Var layer_norm(Var x, Var gain, Var bias);
  Var relu(Var x);
  Var attention(Var q, Var k, Var v, int n_heads, std::vector<int> visible);
  /// h * table^T + bias: output projection with (possibly tied) embeddings.
  Var project(Var h, Var table, Var bias);
  Var log_softmax(Var x);

  /// Back-propagates `seed` (d loss / d value(root)).
  void backward(Var root, const Matrix& seed);
  /// Adds parameter-leaf gradients into `grads` (one tensor per slot).
  void accumulate_param_grads(std::vector<Matrix>& grads) const;

 private:
  struct Node {
    Matrix own;
    const Matrix* ref = nullptr;
    int slot = -1;
    Matrix grad;
  };

  Var push(Matrix value, std::function<void(const Matrix&)> backward);
  Matrix& grad_of(Var v);

  const Parameters& params_;
  bool record_;
  std::vector<Node> nodes_;
  std::vector<std::function<void(const Matrix&)>> backward_;
};

}  // namespace simulmt
