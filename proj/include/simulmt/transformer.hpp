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

#include <span>
#include <utility>
#include <vector>

#include "simulmt/autodiff.hpp"
#include "simulmt/common.hpp"
#include "simulmt/parameters.hpp"

namespace simulmt {

/// Cached causal encoding of the first `length()` source tokens. Growing
/// the state never touches rows that are already there.
struct EncoderState {
  std::vector<Matrix> layer_outputs;  // per encoder layer, z x d
  std::vector<Matrix> self_keys;      // per encoder layer
  std::vector<Matrix> self_values;
  Matrix memory;                      // final layer norm applied, z x d
  std::vector<Matrix> cross_keys;     // per decoder layer, projected memory
  std::vector<Matrix> cross_values;

  int length() const { return static_cast<int>(memory.rows()); }
};

/// Target-side self-attention cache for the emitted prefix.
struct DecoderState {
  int step = 0;
  std::vector<Matrix> self_keys;  // per decoder layer, step x d
  std::vector<Matrix> self_values;
};

/// Pre-norm encoder-decoder with a causal (unidirectional) encoder and
/// cross-attention restricted to the first z source positions. Holds a
/// reference to the parameters, which must outlive it.
class Transformer {
 public:
  explicit Transformer(const Parameters& params);

  const ModelConfig& config() const { return params_.config(); }
  const Parameters& params() const { return params_; }

  EncoderState encode_prefix(std::span<const TokenId> new_tokens, EncoderState state = {}) const;

  /// Feeds `prev_token` at the next target position and returns the
  /// log-distribution over the target vocabulary, attending to source
  /// positions [0, z).
  RowVector decode_step(const EncoderState& enc, DecoderState& dec, TokenId prev_token,
                        int z) const;

  /// Builds the batch encoder on a tape and returns the memory node.
  Tape::Var build_encoder(Tape& tape, std::span<const TokenId> x) const;
  /// Teacher-forced decoder over `y_in`; row t attends to source rows
  /// [0, cross_visible[t]). Returns the |y_in| x V log-probability node.
  Tape::Var build_decoder(Tape& tape, Tape::Var memory, std::span<const TokenId> y_in,
                          const std::vector<int>& cross_visible) const;

  /// Log-probability matrix (|y| x V) under read schedule `path` (path[t]
  /// is z for target position t). Runs the tape without recording.
  Matrix teacher_forced_log_probs(std::span<const TokenId> x, std::span<const TokenId> y,
                                  std::span<const int> path) const;

 private:
  struct AttnSlots {
    int wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct FfnSlots {
    int w1, b1, w2, b2;
  };
  struct NormSlots {
    int g, b;
  };
  struct EncLayer {
    NormSlots ln1;
    AttnSlots attn;
    NormSlots ln2;
    FfnSlots ffn;
  };
  struct DecLayer {
    NormSlots ln1;
    AttnSlots self;
    NormSlots ln2;
    AttnSlots cross;
    NormSlots ln3;
    FfnSlots ffn;
  };

  const Matrix& t(int slot) const { return params_.slot_tensor(slot); }
  Matrix embed_rows(int table_slot, std::span<const TokenId> ids, int first_pos) const;

  const Parameters& params_;
  double embed_scale_;
  int embed_src_, embed_tgt_, out_weight_, out_bias_;
  std::vector<EncLayer> enc_;
  NormSlots enc_ln_;
  std::vector<DecLayer> dec_;
  NormSlots dec_ln_;
};

/// Checks |path| == |y|, non-decreasing, values in [1, src_len].
void validate_path(std::span<const int> path, std::size_t tgt_len, int src_len);

EncoderState encode_prefix(const Parameters& params, std::span<const TokenId> new_tokens,
                           EncoderState state = {});
std::pair<RowVector, DecoderState> decode_step(const Parameters& params, const EncoderState& enc,
                                               DecoderState dec, TokenId prev_token, int z);
/// Gold-token log-probabilities, one per target step: the addends of the
/// single-path log-likelihood.
std::vector<double> forward_teacher_forced(const Parameters& params, std::span<const TokenId> x,
                                           std::span<const TokenId> y, std::span<const int> path);

}  // namespace simulmt
