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

#include <cstdint>
#include <string>
#include <vector>

#include "simulmt/bpe.hpp"
#include "simulmt/common.hpp"

namespace simulmt {

/// Raw parallel text.
struct TextPair {
  std::string source;
  std::string target;
  friend bool operator==(const TextPair&, const TextPair&) = default;
};

/// Token-level training/evaluation pair. The source carries a trailing EOS
/// as its sentence-final marker; the target always ends with EOS.
struct SentencePair {
  TokenSeq source;
  TokenSeq target;
  friend bool operator==(const SentencePair&, const SentencePair&) = default;
};

/// Throws ValidationError when an invariant is broken (empty side, PAD
/// inside, target without final EOS).
void validate_pair(const SentencePair& pair);

/// Reads `source<TAB>target` lines, or JSON lines with `src`/`tgt` fields
/// when the first non-blank line starts with `{`.
std::vector<TextPair> read_parallel_corpus(const std::string& path);
void write_parallel_corpus(const std::string& path, const std::vector<TextPair>& pairs);

SentencePair encode_pair(const BpeModel& source_bpe, const BpeModel& target_bpe,
                         const TextPair& pair);
std::vector<SentencePair> encode_corpus(const BpeModel& source_bpe, const BpeModel& target_bpe,
                                        const std::vector<TextPair>& pairs);

/// Keeps pairs with max(|src|,|tgt|) / min(|src|,|tgt|) <= max_ratio, in
/// input order.
std::vector<SentencePair> filter_length_ratio(const std::vector<SentencePair>& pairs,
                                              double max_ratio);

enum class ToyTask { kCopy, kLocalSwap, kDigitToWord };

ToyTask parse_toy_task(const std::string& name);
std::string to_string(ToyTask task);

/// English word for a single digit character '0'..'9'.
const std::string& digit_word(char digit);

/// Deterministic synthetic corpus. Sources hold 2..10 words, so both sides
/// stay well under 20 tokens after subword segmentation.
///   copy          target == source
///   local_swap    adjacent words swapped pairwise
///   digit_to_word "3 1 4" -> "three one four"
std::vector<TextPair> gen_toy_corpus(std::uint64_t seed, int n_pairs, ToyTask task);

}  // namespace simulmt
