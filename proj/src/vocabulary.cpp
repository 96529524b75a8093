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

#include "simulmt/vocabulary.hpp"

namespace simulmt {

Vocabulary::Vocabulary() {
  add(kPadToken);
  add(kBosToken);
  add(kEosToken);
  add(kUnkToken);
}

TokenId Vocabulary::add(std::string_view token) {
  if (token.empty()) throw ValidationError("vocabulary tokens must be non-empty");
  auto it = ids_.find(std::string(token));
  if (it != ids_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.emplace_back(token);
  ids_.emplace(tokens_.back(), id);
  return id;
}

bool Vocabulary::contains(std::string_view token) const {
  return ids_.count(std::string(token)) != 0;
}

TokenId Vocabulary::id_of(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(TokenId id) const {
  if (id < 0 || id >= size()) {
    throw ValidationError("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

WaitK WaitK::parse(const std::string& text) {
  if (text == "inf" || text == "INF" || text == "infinity") return WaitK::infinite();
  std::size_t used = 0;
  int k = 0;
  try {
    k = std::stoi(text, &used);
  } catch (const std::exception&) {
    throw ValidationError("invalid wait-k value '" + text + "'");
  }
  if (used != text.size()) throw ValidationError("invalid wait-k value '" + text + "'");
  return WaitK(k);
}

}  // namespace simulmt
