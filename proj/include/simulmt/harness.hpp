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
#include <vector>

#include <json.hpp>

#include "simulmt/bpe.hpp"
#include "simulmt/metrics.hpp"
#include "simulmt/parameters.hpp"

namespace simulmt {

/// Lowercase hex SHA-256 digests.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::string& path);

/// Settings of one command, resolved from defaults, a JSON config file and
/// command-line flags (later sources win). Each value remembers where it
/// came from, and every input file is hashed so outputs can be traced back.
class RunConfig {
 public:
  enum class Source { kDefault, kConfigFile, kFlag };

  /// `defaults` is a flat JSON object; its keys are the only accepted keys
  /// and its value types are enforced.
  RunConfig(std::string command, nlohmann::json defaults);

  /// Merges a JSON object file. Keys may also be nested under the command
  /// name: {"segment": {"theta": 0.5}}.
  void apply_file(const std::string& path);
  void apply(const nlohmann::json& values, Source source, const std::string& origin = "");
  void set(const std::string& key, nlohmann::json value, Source source = Source::kFlag);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const nlohmann::json& get(const std::string& key) const;
  std::string str(const std::string& key) const;
  double number(const std::string& key) const;
  long long integer(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<std::string> list(const std::string& key) const;
  Source source_of(const std::string& key) const;
  const std::string& command() const { return command_; }

  /// Hashes an input file and records it.
  void add_input(const std::string& path);

  /// {"command", "values", "provenance", "inputs", "version"}.
  nlohmann::json to_json() const;
  /// Writes to_json() next to an output as `<output>.run.json`.
  void write_sidecar(const std::string& output_path) const;

  static std::string source_name(Source s);

 private:
  struct Entry {
    nlohmann::json value;
    Source source = Source::kDefault;
    std::string origin;
  };
  nlohmann::json coerce(const std::string& key, const nlohmann::json& value) const;

  std::string command_;
  std::map<std::string, Entry> values_;
  std::vector<std::pair<std::string, std::string>> inputs_;
};

/// Environment variable naming a default config file.
inline constexpr const char* kConfigEnvVar = "SIMULMT_CONFIG";

// ---------------------------------------------------------------------------
// Plot data: CSV `system,k,bleu,al_words,al_ms`, sorted by (system, AL).

inline constexpr int kPlotPrecision = 6;

std::string format_plotdata(std::vector<TradeoffRecord> records);
void emit_plotdata(const std::vector<TradeoffRecord>& records, const std::string& path);
std::vector<TradeoffRecord> parse_plotdata(const std::string& csv);
std::vector<TradeoffRecord> read_plotdata(const std::string& path);

nlohmann::json to_json(const TradeoffRecord& record);

// ---------------------------------------------------------------------------
// Model files: a checkpoint whose header also carries both subword models.

struct ModelBundle {
  Parameters params;
  BpeModel source_bpe;
  BpeModel target_bpe;
  nlohmann::json info = nlohmann::json::object();  // training settings and provenance
};

void save_model_bundle(const std::string& path, const ModelBundle& bundle);
ModelBundle load_model_bundle(const std::string& path);

}  // namespace simulmt
