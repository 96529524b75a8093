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

#include "simulmt/corpus.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <random>

#include <json.hpp>

#include "text_util.hpp"

namespace simulmt {

void validate_pair(const SentencePair& pair) {
  if (pair.source.empty() || pair.target.empty()) {
    throw ValidationError("sentence pair with an empty side");
  }
  auto has_pad = [](const TokenSeq& s) {
    return std::find(s.begin(), s.end(), Vocabulary::kPad) != s.end();
  };
  if (has_pad(pair.source) || has_pad(pair.target)) {
    throw ValidationError("sentence pair contains PAD");
  }
  if (pair.target.back() != Vocabulary::kEos) {
    throw ValidationError("target sequence must end with EOS");
  }
}

std::vector<TextPair> read_parallel_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open corpus " + path);
  std::vector<TextPair> pairs;
  std::string line;
  int line_no = 0;
  bool jsonl = false;
  bool decided = false;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::rstrip_cr(line);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (!decided) {
      jsonl = line[line.find_first_not_of(" \t")] == '{';
      decided = true;
    }
    if (jsonl) {
      try {
        const auto j = nlohmann::json::parse(line);
        pairs.push_back({j.at("src").get<std::string>(), j.at("tgt").get<std::string>()});
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path + ":" + std::to_string(line_no) + ": " + e.what());
      }
    } else {
      const auto tab = line.find('\t');
      if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
        throw ValidationError(path + ":" + std::to_string(line_no) +
                              ": expected exactly one TAB separator");
      }
      pairs.push_back({line.substr(0, tab), line.substr(tab + 1)});
    }
  }
  return pairs;
}

void write_parallel_corpus(const std::string& path, const std::vector<TextPair>& pairs) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write " + path);
  for (const auto& p : pairs) out << p.source << '\t' << p.target << '\n';
}

SentencePair encode_pair(const BpeModel& source_bpe, const BpeModel& target_bpe,
                         const TextPair& pair) {
  SentencePair out{source_bpe.encode(pair.source), target_bpe.encode(pair.target)};
  out.source.push_back(Vocabulary::kEos);
  out.target.push_back(Vocabulary::kEos);
  return out;
}

std::vector<SentencePair> encode_corpus(const BpeModel& source_bpe, const BpeModel& target_bpe,
                                        const std::vector<TextPair>& pairs) {
  std::vector<SentencePair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(encode_pair(source_bpe, target_bpe, p));
  return out;
}

std::vector<SentencePair> filter_length_ratio(const std::vector<SentencePair>& pairs,
                                              double max_ratio) {
  if (!(max_ratio >= 1.0)) throw ValidationError("max_ratio must be >= 1");
  std::vector<SentencePair> kept;
  for (const auto& p : pairs) {
    if (p.source.empty() || p.target.empty()) {
      throw ValidationError("length-ratio filter: pair with a zero-length side");
    }
    const auto lo = static_cast<double>(std::min(p.source.size(), p.target.size()));
    const auto hi = static_cast<double>(std::max(p.source.size(), p.target.size()));
    if (hi / lo <= max_ratio) kept.push_back(p);
  }
  return kept;
}

ToyTask parse_toy_task(const std::string& name) {
  if (name == "copy") return ToyTask::kCopy;
  if (name == "local_swap") return ToyTask::kLocalSwap;
  if (name == "digit_to_word") return ToyTask::kDigitToWord;
  throw ValidationError("unknown toy task '" + name + "'");
}

std::string to_string(ToyTask task) {
  switch (task) {
    case ToyTask::kCopy: return "copy";
    case ToyTask::kLocalSwap: return "local_swap";
    case ToyTask::kDigitToWord: return "digit_to_word";
  }
  return "?";
}

const std::string& digit_word(char digit) {
  static const std::array<std::string, 10> kWords = {
      "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"};
  if (digit < '0' || digit > '9') throw ValidationError("not a digit");
  return kWords[static_cast<std::size_t>(digit - '0')];
}

std::vector<TextPair> gen_toy_corpus(std::uint64_t seed, int n_pairs, ToyTask task) {
  if (n_pairs < 1) throw ValidationError("n_pairs must be >= 1");
  static const std::array<const char*, 16> kLexicon = {
      "ka", "lo", "mi", "nu", "pe", "ri", "so", "tu",
      "va", "ze", "bo", "di", "fa", "gu", "he", "jo"};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> len_dist(2, 10);
  std::vector<TextPair> out;
  out.reserve(static_cast<std::size_t>(n_pairs));
  for (int i = 0; i < n_pairs; ++i) {
    const int len = len_dist(rng);
    std::vector<std::string> src;
    std::vector<std::string> tgt;
    if (task == ToyTask::kDigitToWord) {
      std::uniform_int_distribution<int> d(0, 9);
      for (int j = 0; j < len; ++j) {
        const char c = static_cast<char>('0' + d(rng));
        src.emplace_back(1, c);
        tgt.push_back(digit_word(c));
      }
    } else {
      std::uniform_int_distribution<std::size_t> w(0, kLexicon.size() - 1);
      for (int j = 0; j < len; ++j) src.emplace_back(kLexicon[w(rng)]);
      tgt = src;
      if (task == ToyTask::kLocalSwap) {
        for (std::size_t j = 0; j + 1 < tgt.size(); j += 2) std::swap(tgt[j], tgt[j + 1]);
      }
    }
    out.push_back({detail::join(src, " "), detail::join(tgt, " ")});
  }
  return out;
}

}  // namespace simulmt
