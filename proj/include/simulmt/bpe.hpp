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

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "simulmt/common.hpp"
#include "simulmt/vocabulary.hpp"

namespace simulmt {

/// Frequency-greedy byte pair encoding over UTF-8 code points.
///
/// Lines are split on single spaces (not collapsed), and the last symbol of
/// every word carries the `</w>` end marker, so "ab c" becomes
/// `a b</w> c</w>`. An empty word (leading, trailing or doubled space)
/// becomes the bare marker. Decoding turns every marker back into a space
/// and drops the final one, which makes encode/decode lossless over the
/// training alphabet.
class BpeModel {
 public:
  using Merge = std::pair<std::string, std::string>;
  static constexpr std::string_view kWordEnd = "</w>";

  BpeModel() = default;
  BpeModel(Vocabulary vocab, std::vector<Merge> merges);

  /// Learns merges until the vocabulary (specials included) reaches
  /// `target_vocab_size` or no pair is left to merge.
  static BpeModel train(const std::vector<std::string>& corpus, int target_vocab_size);

  std::vector<std::string> encode_pieces(std::string_view text) const;
  TokenSeq encode(std::string_view text) const;
  /// Specials other than UNK are skipped.
  std::string decode(std::span<const TokenId> ids) const;
  static std::string join_pieces(std::span<const std::string> pieces);

  const Vocabulary& vocab() const { return vocab_; }
  const std::vector<Merge>& merges() const { return merges_; }

  /// Text format: `#vocab N`, N token lines in id order, `#merges M`, then M
  /// lines `left right`.
  void save(std::ostream& out) const;
  static BpeModel load(std::istream& in);
  void save_file(const std::string& path) const;
  static BpeModel load_file(const std::string& path);

 private:
  std::vector<std::string> word_pieces(std::string_view word) const;

  Vocabulary vocab_;
  std::vector<Merge> merges_;
  std::unordered_map<std::string, int> merge_rank_;
};

}  // namespace simulmt
