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
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace simulmt {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct ModelConfig {
  int d_model = 64;
  int n_heads = 4;
  int n_enc_layers = 2;
  int n_dec_layers = 2;
  int d_ffn = 128;
  int src_vocab_size = 0;
  int tgt_vocab_size = 0;
  // Output projection shares storage with the decoder input embedding.
  bool tie_decoder_embeddings = true;
  // Encoder embedding shares storage with the decoder input embedding.
  bool joint_vocabulary = true;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Named weight tensors. Several names may alias one storage slot (weight
/// tying); copies are deep and keep the aliasing.
class Parameters {
 public:
  Parameters() = default;
  explicit Parameters(ModelConfig config) : config_(config) {}

  void add(const std::string& name, Matrix value);
  void tie(const std::string& alias, const std::string& target);

  bool contains(const std::string& name) const { return slot_of_.count(name) != 0; }
  int slot(const std::string& name) const;
  Matrix& at(const std::string& name) { return storage_[static_cast<std::size_t>(slot(name))]; }
  const Matrix& at(const std::string& name) const {
    return storage_[static_cast<std::size_t>(slot(name))];
  }
  Matrix& slot_tensor(int s) { return storage_[static_cast<std::size_t>(s)]; }
  const Matrix& slot_tensor(int s) const { return storage_[static_cast<std::size_t>(s)]; }
  bool same_storage(const std::string& a, const std::string& b) const {
    return slot(a) == slot(b);
  }

  /// Every name, aliases included, in insertion order.
  const std::vector<std::string>& names() const { return names_; }
  /// First name registered for each storage slot.
  const std::string& slot_name(int s) const { return slot_names_[static_cast<std::size_t>(s)]; }
  int num_slots() const { return static_cast<int>(storage_.size()); }
  std::size_t num_scalars() const;
  bool all_finite() const;

  const ModelConfig& config() const { return config_; }

  /// Zero tensors, one per storage slot.
  std::vector<Matrix> zeros_like() const;

  friend bool operator==(const Parameters& a, const Parameters& b);

 private:
  ModelConfig config_;
  std::vector<Matrix> storage_;
  std::vector<std::string> slot_names_;
  std::vector<std::string> names_;
  std::map<std::string, int> slot_of_;
};

/// Builds every tensor of the encoder-decoder with scaled-uniform weights,
/// unit layer-norm gains and zero biases. Deterministic in `seed`.
Parameters init_parameters(const ModelConfig& config, std::uint64_t seed);

/// Checkpoint layout: a first line `simulmt-checkpoint 1 <header bytes>`,
/// a JSON header holding the config and a manifest of
/// {name, shape, offset, alias_of}, then the flat little-endian float64
/// payload of every storage slot in slot order.
void save_checkpoint(const std::string& path, const Parameters& params,
                     const nlohmann::json& extra = nlohmann::json::object());
Parameters load_checkpoint(const std::string& path, nlohmann::json* extra = nullptr);

}  // namespace simulmt
