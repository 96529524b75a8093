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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simulmt/cascade.hpp"
#include "simulmt/common.hpp"
#include "simulmt/online.hpp"
#include "simulmt/parameters.hpp"

namespace simulmt {

enum class BleuSmoothing {
  kNone,
  // Adds one to matches and totals for n > 1. Not the canonical shared-task
  // scoring; meant for very small corpora.
  kAddOne,
};

BleuSmoothing parse_bleu_smoothing(const std::string& name);

struct BleuBreakdown {
  std::vector<double> precisions;
  std::vector<long long> matches;
  std::vector<long long> totals;
  double brevity_penalty = 0.0;
  long long hyp_len = 0;
  long long ref_len = 0;
  double score = 0.0;
};

using Words = std::vector<std::string>;

BleuBreakdown corpus_bleu(std::span<const Words> hyps, std::span<const Words> refs, int max_n = 4,
                          BleuSmoothing smoothing = BleuSmoothing::kNone);
/// Same, over whitespace-split strings.
BleuBreakdown corpus_bleu_text(std::span<const std::string> hyps,
                               std::span<const std::string> refs, int max_n = 4,
                               BleuSmoothing smoothing = BleuSmoothing::kNone);

// Average Lagging (Ma et al., 2019):
//   AL = 1/tau * sum_{t=1..tau} [ g(t) - (t-1) / gamma ],  gamma = |y| / |x|
// with tau the first target index whose g(t) reaches the full source. The
// EOS write is not counted unless it is the only write; when the source is
// never fully read tau falls back to the target length.

/// Generic form over explicit delays and the ideal per-token source step.
double average_lagging(std::span<const double> g, double src_len, int tgt_len, double ideal_step);

/// Delays in source tokens (READ count at each WRITE).
double average_lagging_words(const ActionTrace& trace, int src_len, int tgt_len);
/// Delays in milliseconds of consumed audio.
double average_lagging_ms(const ActionTrace& trace, double total_src_ms, int tgt_len);

/// Number of non-EOS writes, or 1 when EOS is the only write.
int lagging_target_length(const ActionTrace& trace);

struct TradeoffRecord {
  std::string system_id;
  WaitK k_eval;
  double bleu = 0.0;
  double al_words = 0.0;
  std::optional<double> al_ms;

  friend bool operator==(const TradeoffRecord&, const TradeoffRecord&) = default;
};

struct SweepSystem {
  std::string id;
  std::vector<const Parameters*> models;  // ensembled when more than one
};

struct T2tItem {
  TokenSeq source;  // with the sentence-final EOS marker
  std::string reference;
};

struct S2tItem {
  std::vector<TimedWord> stream;
  double total_ms = 0.0;
  std::string reference;
};

struct SweepTestset {
  std::vector<T2tItem> t2t;
  std::vector<S2tItem> s2t;
  // Target ids (without EOS) to detokenized text.
  std::function<std::string(std::span<const TokenId>)> detokenize;
  // s2t only: transcript text to source ids, and the cascade settings.
  std::function<TokenSeq(std::string_view)> tokenize;
  CascadeConfig cascade;
  OnlinePolicy policy;  // t2t length cap; k_eval is overridden per point
  BleuSmoothing smoothing = BleuSmoothing::kNone;
};

enum class SweepMode { kT2t, kS2t };

SweepMode parse_sweep_mode(const std::string& name);

/// One sentence (or document) of a sweep point as the scorer sees it.
struct ScoredItem {
  std::string hypothesis;
  std::string reference;
  ActionTrace trace;
  int src_tokens = 0;  // source tokens (t2t) or READ actions (s2t)
  std::optional<double> src_ms;  // audio duration (s2t)
};

/// Corpus BLEU plus the mean per-item AL; al_ms is set when every item has
/// an audio duration.
TradeoffRecord score_point(const std::string& system_id, WaitK k_eval,
                           std::span<const ScoredItem> items, BleuSmoothing smoothing = BleuSmoothing::kNone);

/// Decodes every test item for one (system, k) point.
std::vector<ScoredItem> decode_point(const SweepSystem& system, WaitK k_eval,
                                     const SweepTestset& testset, SweepMode mode);

/// One record per (system, k), ordered by system then k. In s2t mode k sets
/// the cascade write budget offset beta. Points run on up to `threads`
/// worker threads.
std::vector<TradeoffRecord> sweep(std::span<const SweepSystem> systems,
                                  std::span<const WaitK> k_values, const SweepTestset& testset,
                                  SweepMode mode, int threads = 1);

}  // namespace simulmt
