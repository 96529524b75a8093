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

#include <Eigen/Dense>

namespace simulmt {

/// Time-major T x D feature matrix.
struct FeatureMatrix {
  Eigen::MatrixXd frames;
  double frame_shift_ms = 10.0;

  Eigen::Index num_frames() const { return frames.rows(); }
  Eigen::Index dim() const { return frames.cols(); }
};

void validate_features(const FeatureMatrix& feat);

struct SpecAugmentOptions {
  int time_warp = 5;      // W
  int freq_mask = 30;     // F
  int time_mask = 40;     // T
  int n_freq_masks = 1;
  int n_time_masks = 1;
};

/// Time warp around the midpoint frame, then frequency masks, then time
/// masks. Masked cells are set to 0. With every width at 0 the input is
/// returned unchanged.
FeatureMatrix spec_augment(const FeatureMatrix& feat, const SpecAugmentOptions& opts,
                           std::uint64_t seed);

/// Resamples the time axis to round(T / factor) frames by linear
/// interpolation, end points aligned.
FeatureMatrix speed_perturb(const FeatureMatrix& feat, double factor);

/// First line: JSON header {"T":..,"D":..,"frame_shift_ms":..}; then T
/// lines of D space-separated decimals.
void write_features(const std::string& path, const FeatureMatrix& feat);
FeatureMatrix read_features(const std::string& path);

}  // namespace simulmt
