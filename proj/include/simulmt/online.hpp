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

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "simulmt/common.hpp"
#include "simulmt/parameters.hpp"
#include "simulmt/transformer.hpp"

namespace simulmt {

struct ActionEvent {
  enum class Kind { kRead, kWrite };
  Kind kind = Kind::kRead;
  // READ: index of the source unit read (0-based) and its time, if timed.
  int source_index = 0;
  std::optional<double> timestamp_ms;
  // WRITE: emitted token, source units read so far and audio consumed so far.
  TokenId token = 0;
  int g_tokens = 0;
  std::optional<double> g_ms;

  friend bool operator==(const ActionEvent&, const ActionEvent&) = default;
};

/// Ordered READ/WRITE events; the only input lagging metrics need.
struct ActionTrace {
  std::vector<ActionEvent> events;

  void read(int source_index, std::optional<double> timestamp_ms = std::nullopt);
  void write(TokenId token, int g_tokens, std::optional<double> g_ms = std::nullopt);

  int num_reads() const;
  std::vector<TokenId> written() const;
  std::vector<int> write_g() const;
  /// Throws ValidationError when a WRITE lacks g_ms.
  std::vector<double> write_g_ms() const;

  nlohmann::json to_json() const;
  friend bool operator==(const ActionTrace&, const ActionTrace&) = default;
};

/// g_tokens equals the number of preceding READs, is non-decreasing, and the
/// last WRITE is EOS unless `truncated`.
void validate_trace(const ActionTrace& trace, bool truncated = false);

struct OnlinePolicy {
  WaitK k_eval = WaitK::infinite();
  // Hypotheses are cut at alpha_len * |x| + beta_len tokens.
  double alpha_len = 1.0;
  int beta_len = 50;
};

/// Incremental next-token scorer. Implementations own their source and
/// target caches; one instance serves one decode at a time.
class StepScorer {
 public:
  virtual ~StepScorer() = default;
  virtual int vocab_size() const = 0;
  /// Clears source and target state.
  virtual void reset() = 0;
  virtual void extend_source(std::span<const TokenId> tokens) = 0;
  virtual int source_length() const = 0;
  /// Consumes `prev` as the next target input and returns the next-token
  /// log-distribution restricted to the first `z` source tokens.
  virtual RowVector next_log_probs(TokenId prev, int z) = 0;
};

class TransformerScorer final : public StepScorer {
 public:
  explicit TransformerScorer(const Parameters& params) : model_(params) {}

  int vocab_size() const override { return model_.config().tgt_vocab_size; }
  void reset() override;
  void extend_source(std::span<const TokenId> tokens) override;
  int source_length() const override { return enc_.length(); }
  RowVector next_log_probs(TokenId prev, int z) override;

 private:
  Transformer model_;
  EncoderState enc_;
  DecoderState dec_;
};

/// Uniform mean of per-model log-probabilities, renormalized. A single input
/// is returned unchanged.
RowVector ensemble_logprobs(std::span<const RowVector> per_model);

/// Index of the largest entry; the lowest index wins ties.
TokenId argmax_token(const RowVector& log_probs);

struct DecodeResult {
  TokenSeq tokens;  // ends with EOS unless truncated
  ActionTrace trace;
  bool truncated = false;
};

/// Wait-k greedy decoder driven one action at a time, so the same code
/// serves in-memory decoding and remote (service) sessions. The caller
/// feeds source tokens while wants_read() holds, signals the end of the
/// source, and calls write() otherwise.
class WaitKSession {
 public:
  WaitKSession(std::vector<StepScorer*> models, OnlinePolicy policy);

  bool done() const { return done_; }
  bool truncated() const { return truncated_; }
  bool source_finished() const { return source_finished_; }
  /// True when the next write needs more source than has been read.
  bool wants_read() const;

  void read(TokenId token, std::optional<double> timestamp_ms = std::nullopt);
  void finish_source();
  /// Emits the next token; requires !done() and !wants_read().
  TokenId write(std::optional<double> g_ms = std::nullopt);

  const TokenSeq& source() const { return source_; }
  const TokenSeq& output() const { return output_; }
  const ActionTrace& trace() const { return trace_; }
  DecodeResult result() const { return {output_, trace_, truncated_}; }

 private:
  int required_source() const;
  void check_cap();

  std::vector<StepScorer*> models_;
  OnlinePolicy policy_;
  TokenSeq source_;
  std::size_t fed_ = 0;
  TokenSeq output_;
  ActionTrace trace_;
  bool source_finished_ = false;
  bool done_ = false;
  bool truncated_ = false;
};

/// Reveals `x` token by token under the policy's wait-k schedule. `x`
/// should already carry its sentence-final EOS marker.
DecodeResult online_greedy_decode(std::span<StepScorer* const> models, std::span<const TokenId> x,
                                  const OnlinePolicy& policy);
DecodeResult online_greedy_decode(std::span<const Parameters* const> models,
                                  std::span<const TokenId> x, const OnlinePolicy& policy);

/// Full-source greedy decoding that bypasses the READ/WRITE machinery.
TokenSeq offline_greedy_decode(const Parameters& params, std::span<const TokenId> x,
                               double alpha_len = 1.0, int beta_len = 50);

}  // namespace simulmt
