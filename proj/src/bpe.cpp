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

#include "simulmt/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "text_util.hpp"

namespace simulmt {
namespace {

std::string rank_key(const std::string& left, const std::string& right) {
  std::string key = left;
  key.push_back('\x1f');
  key += right;
  return key;
}

std::vector<std::string> initial_symbols(std::string_view word) {
  std::vector<std::string> syms = detail::utf8_chars(word);
  if (syms.empty()) {
    syms.emplace_back(BpeModel::kWordEnd);
  } else {
    syms.back() += BpeModel::kWordEnd;
  }
  return syms;
}

void apply_merge(std::vector<std::string>& syms, const std::string& left,
                 const std::string& right) {
  std::vector<std::string> out;
  out.reserve(syms.size());
  for (std::size_t i = 0; i < syms.size(); ++i) {
    if (i + 1 < syms.size() && syms[i] == left && syms[i + 1] == right) {
      out.push_back(left + right);
      ++i;
    } else {
      out.push_back(std::move(syms[i]));
    }
  }
  syms = std::move(out);
}

}  // namespace

BpeModel::BpeModel(Vocabulary vocab, std::vector<Merge> merges)
    : vocab_(std::move(vocab)), merges_(std::move(merges)) {
  for (std::size_t i = 0; i < merges_.size(); ++i) {
    const auto key = rank_key(merges_[i].first, merges_[i].second);
    if (!merge_rank_.emplace(key, static_cast<int>(i)).second) {
      throw ValidationError("duplicate BPE merge '" + merges_[i].first + " " +
                            merges_[i].second + "'");
    }
  }
}

BpeModel BpeModel::train(const std::vector<std::string>& corpus, int target_vocab_size) {
  if (corpus.empty()) throw ValidationError("cannot train BPE on an empty corpus");

  std::map<std::string, long> word_freq;
  for (const auto& line : corpus) {
    for (auto word : detail::split_exact(line, ' ')) ++word_freq[std::string(word)];
  }

  std::set<std::string> alphabet;
  std::vector<std::pair<std::vector<std::string>, long>> words;
  words.reserve(word_freq.size());
  for (const auto& [word, freq] : word_freq) {
    if (word.empty()) alphabet.emplace(kWordEnd);
    for (const auto& ch : detail::utf8_chars(word)) {
      alphabet.insert(ch);
      alphabet.insert(ch + std::string(kWordEnd));
    }
    words.emplace_back(initial_symbols(word), freq);
  }

  const auto base_size = static_cast<int>(alphabet.size()) + Vocabulary::kNumSpecials;
  if (target_vocab_size < base_size) {
    throw ValidationError("target vocabulary size " + std::to_string(target_vocab_size) +
                          " is below the base alphabet size " + std::to_string(base_size));
  }

  Vocabulary vocab;
  for (const auto& sym : alphabet) vocab.add(sym);

  std::vector<Merge> merges;
  std::set<Merge> seen;
  while (vocab.size() < target_vocab_size) {
    std::map<Merge, long> counts;
    for (const auto& [syms, freq] : words) {
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) counts[{syms[i], syms[i + 1]}] += freq;
    }
    // Highest count wins; ties go to the lexicographically smallest pair.
    const Merge* best = nullptr;
    long best_count = 0;
    for (const auto& [pair, count] : counts) {
      if (seen.count(pair)) continue;
      if (count > best_count) {
        best = &pair;
        best_count = count;
      }
    }
    if (best == nullptr) break;
    const Merge merge = *best;
    seen.insert(merge);
    merges.push_back(merge);
    vocab.add(merge.first + merge.second);
    for (auto& entry : words) apply_merge(entry.first, merge.first, merge.second);
  }
  return BpeModel(std::move(vocab), std::move(merges));
}

std::vector<std::string> BpeModel::word_pieces(std::string_view word) const {
  auto syms = initial_symbols(word);
  while (syms.size() > 1) {
    int best_rank = -1;
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      auto it = merge_rank_.find(rank_key(syms[i], syms[i + 1]));
      if (it != merge_rank_.end() && (best_rank < 0 || it->second < best_rank)) {
        best_rank = it->second;
      }
    }
    if (best_rank < 0) break;
    const auto& merge = merges_[static_cast<std::size_t>(best_rank)];
    apply_merge(syms, merge.first, merge.second);
  }
  return syms;
}

std::vector<std::string> BpeModel::encode_pieces(std::string_view text) const {
  std::vector<std::string> pieces;
  if (text.empty()) return pieces;
  for (auto word : detail::split_exact(text, ' ')) {
    auto wp = word_pieces(word);
    pieces.insert(pieces.end(), std::make_move_iterator(wp.begin()),
                  std::make_move_iterator(wp.end()));
  }
  return pieces;
}

TokenSeq BpeModel::encode(std::string_view text) const {
  TokenSeq ids;
  for (const auto& piece : encode_pieces(text)) ids.push_back(vocab_.id_of(piece));
  return ids;
}

std::string BpeModel::join_pieces(std::span<const std::string> pieces) {
  std::string joined;
  for (const auto& p : pieces) joined += p;
  std::string out;
  out.reserve(joined.size());
  bool ends_with_marker = false;
  for (std::size_t i = 0; i < joined.size();) {
    if (joined.compare(i, kWordEnd.size(), kWordEnd) == 0) {
      out.push_back(' ');
      i += kWordEnd.size();
      ends_with_marker = true;
    } else {
      out.push_back(joined[i]);
      ++i;
      ends_with_marker = false;
    }
  }
  if (ends_with_marker) out.pop_back();
  return out;
}

std::string BpeModel::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> pieces;
  for (TokenId id : ids) {
    if (Vocabulary::is_special(id) && id != Vocabulary::kUnk) continue;
    pieces.push_back(vocab_.token_of(id));
  }
  return join_pieces(pieces);
}

void BpeModel::save(std::ostream& out) const {
  out << "#vocab " << vocab_.size() << '\n';
  for (const auto& tok : vocab_.tokens()) out << tok << '\n';
  out << "#merges " << merges_.size() << '\n';
  for (const auto& [l, r] : merges_) out << l << ' ' << r << '\n';
}

BpeModel BpeModel::load(std::istream& in) {
  std::string line;
  auto expect_header = [&](const std::string& tag) {
    if (!std::getline(in, line)) throw ValidationError("BPE file truncated before " + tag);
    line = detail::rstrip_cr(line);
    if (line.rfind(tag + " ", 0) != 0) throw ValidationError("BPE file: expected '" + tag + "'");
    return std::stol(line.substr(tag.size() + 1));
  };
  const long n_vocab = expect_header("#vocab");
  Vocabulary vocab;
  for (long i = 0; i < n_vocab; ++i) {
    if (!std::getline(in, line)) throw ValidationError("BPE file: truncated vocabulary");
    line = detail::rstrip_cr(line);
    if (i < Vocabulary::kNumSpecials) {
      if (line != vocab.token_of(static_cast<TokenId>(i))) {
        throw ValidationError("BPE file: special token mismatch at id " + std::to_string(i));
      }
      continue;
    }
    if (vocab.add(line) != i) throw ValidationError("BPE file: duplicate token '" + line + "'");
  }
  const long n_merges = expect_header("#merges");
  std::vector<Merge> merges;
  for (long i = 0; i < n_merges; ++i) {
    if (!std::getline(in, line)) throw ValidationError("BPE file: truncated merges");
    line = detail::rstrip_cr(line);
    const auto sp = line.find(' ');
    if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size()) {
      throw ValidationError("BPE file: malformed merge line '" + line + "'");
    }
    merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  return BpeModel(std::move(vocab), std::move(merges));
}

void BpeModel::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write " + path);
  save(out);
}

BpeModel BpeModel::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  return load(in);
}

}  // namespace simulmt
