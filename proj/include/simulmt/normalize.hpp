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

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace simulmt {

using NumberLexicon = std::map<std::string, std::string>;

/// Spelled-out English for 0..9999 ("21" -> "twenty one").
std::string number_to_words(int n);

/// Lexicon covering "0".."9999".
const NumberLexicon& default_number_lexicon();

/// Makes text look like ASR output: ASCII lower-casing, removal of every
/// character that is neither alphanumeric nor whitespace, digit tokens
/// spelled out through `lexicon`, single-space separation. Bytes >= 0x80
/// count as letters so UTF-8 words survive. Digit-bearing tokens missing
/// from the lexicon are kept verbatim and reported in `warnings`.
std::string asr_normalize(std::string_view text, const NumberLexicon& lexicon,
                          std::vector<std::string>* warnings = nullptr);

}  // namespace simulmt
