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

#include "simulmt/normalize.hpp"

#include <array>
#include <cctype>

#include "simulmt/common.hpp"
#include "text_util.hpp"

namespace simulmt {
namespace {

const std::array<const char*, 20> kOnes = {
    "zero",    "one",     "two",       "three",    "four",     "five",    "six",
    "seven",   "eight",   "nine",      "ten",      "eleven",   "twelve",  "thirteen",
    "fourteen", "fifteen", "sixteen",  "seventeen", "eighteen", "nineteen"};
const std::array<const char*, 10> kTens = {"",      "",      "twenty",  "thirty", "forty",
                                           "fifty", "sixty", "seventy", "eighty", "ninety"};

std::string below_hundred(int n) {
  if (n < 20) return kOnes[static_cast<std::size_t>(n)];
  std::string out = kTens[static_cast<std::size_t>(n / 10)];
  if (n % 10) out += std::string(" ") + kOnes[static_cast<std::size_t>(n % 10)];
  return out;
}

}  // namespace

std::string number_to_words(int n) {
  if (n < 0 || n > 9999) throw ValidationError("number_to_words supports 0..9999");
  if (n < 100) return below_hundred(n);
  std::vector<std::string> parts;
  if (n >= 1000) {
    parts.push_back(std::string(kOnes[static_cast<std::size_t>(n / 1000)]) + " thousand");
    n %= 1000;
  }
  if (n >= 100) {
    parts.push_back(std::string(kOnes[static_cast<std::size_t>(n / 100)]) + " hundred");
    n %= 100;
  }
  if (n > 0) parts.push_back(below_hundred(n));
  return detail::join(parts, " ");
}

const NumberLexicon& default_number_lexicon() {
  static const NumberLexicon lexicon = [] {
    NumberLexicon lex;
    for (int i = 0; i <= 9999; ++i) lex.emplace(std::to_string(i), number_to_words(i));
    return lex;
  }();
  return lexicon;
}

std::string asr_normalize(std::string_view text, const NumberLexicon& lexicon,
                          std::vector<std::string>* warnings) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (u >= 0x80 || std::isalnum(u)) {
      cleaned.push_back(static_cast<char>(std::tolower(u)));
    } else if (std::isspace(u)) {
      cleaned.push_back(' ');
    }
  }
  std::vector<std::string> words;
  for (auto& tok : detail::split_ws(cleaned)) {
    const bool has_digit = tok.find_first_of("0123456789") != std::string::npos;
    if (!has_digit) {
      words.push_back(std::move(tok));
      continue;
    }
    auto it = lexicon.find(tok);
    if (it != lexicon.end()) {
      words.push_back(it->second);
    } else {
      if (warnings) warnings->push_back("number '" + tok + "' not covered by the lexicon");
      words.push_back(std::move(tok));
    }
  }
  return detail::join(words, " ");
}

}  // namespace simulmt
