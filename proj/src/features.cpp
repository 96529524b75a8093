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

#include "simulmt/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "simulmt/common.hpp"

namespace simulmt {
namespace {

// Row at fractional time `pos`, linearly interpolated.
Eigen::RowVectorXd interpolate_row(const Eigen::MatrixXd& m, double pos) {
  const auto last = m.rows() - 1;
  pos = std::clamp(pos, 0.0, static_cast<double>(last));
  const auto lo = static_cast<Eigen::Index>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0 || lo == last) return m.row(lo);
  return (1.0 - frac) * m.row(lo) + frac * m.row(lo + 1);
}

Eigen::MatrixXd time_warp(const Eigen::MatrixXd& m, int max_shift, std::mt19937_64& rng) {
  const auto n = m.rows();
  std::uniform_int_distribution<int> shift_dist(-max_shift, max_shift);
  const int shift = shift_dist(rng);
  if (shift == 0 || n < 3) return m;
  const double anchor = static_cast<double>((n - 1) / 2);
  const double moved = std::clamp(anchor + shift, 1.0, static_cast<double>(n - 2));
  const double last = static_cast<double>(n - 1);
  Eigen::MatrixXd out(n, m.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i);
    const double src = t <= moved ? t * anchor / moved
                                  : anchor + (t - moved) * (last - anchor) / (last - moved);
    out.row(i) = interpolate_row(m, src);
  }
  return out;
}

}  // namespace

void validate_features(const FeatureMatrix& feat) {
  if (feat.frames.rows() < 1 || feat.frames.cols() < 1) {
    throw ValidationError("feature matrix must be at least 1 x 1");
  }
  if (!feat.frames.allFinite()) throw ValidationError("feature matrix has non-finite values");
}

FeatureMatrix spec_augment(const FeatureMatrix& feat, const SpecAugmentOptions& opts,
                           std::uint64_t seed) {
  validate_features(feat);
  const auto n_frames = feat.num_frames();
  const auto dim = feat.dim();
  if (opts.time_warp < 0 || opts.freq_mask < 0 || opts.time_mask < 0 || opts.n_freq_masks < 0 ||
      opts.n_time_masks < 0) {
    throw ValidationError("SpecAugment parameters must be non-negative");
  }
  if (opts.freq_mask >= dim) throw ValidationError("frequency mask width F must be < D");
  if (opts.time_mask >= n_frames) throw ValidationError("time mask width T must be < frames");
  if (opts.time_warp >= n_frames) throw ValidationError("time warp W must be < frames");

  std::mt19937_64 rng(seed);
  FeatureMatrix out{feat.frames, feat.frame_shift_ms};
  if (opts.time_warp > 0) out.frames = time_warp(out.frames, opts.time_warp, rng);

  for (int i = 0; i < opts.n_freq_masks; ++i) {
    const int width = std::uniform_int_distribution<int>(0, opts.freq_mask)(rng);
    const auto start = std::uniform_int_distribution<Eigen::Index>(0, dim - width)(rng);
    out.frames.middleCols(start, width).setZero();
  }
  for (int i = 0; i < opts.n_time_masks; ++i) {
    const int width = std::uniform_int_distribution<int>(0, opts.time_mask)(rng);
    const auto start = std::uniform_int_distribution<Eigen::Index>(0, n_frames - width)(rng);
    out.frames.middleRows(start, width).setZero();
  }
  return out;
}

FeatureMatrix speed_perturb(const FeatureMatrix& feat, double factor) {
  validate_features(feat);
  if (!(factor > 0.0) || !std::isfinite(factor)) {
    throw ValidationError("speed factor must be > 0");
  }
  const auto n_in = feat.num_frames();
  const auto n_out = static_cast<Eigen::Index>(std::llround(static_cast<double>(n_in) / factor));
  if (n_out < 1) throw ValidationError("speed perturbation would produce zero frames");
  FeatureMatrix out{Eigen::MatrixXd(n_out, feat.dim()), feat.frame_shift_ms};
  const double scale =
      n_out > 1 ? static_cast<double>(n_in - 1) / static_cast<double>(n_out - 1) : 0.0;
  for (Eigen::Index i = 0; i < n_out; ++i) {
    out.frames.row(i) = interpolate_row(feat.frames, static_cast<double>(i) * scale);
  }
  return out;
}

void write_features(const std::string& path, const FeatureMatrix& feat) {
  validate_features(feat);
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write " + path);
  nlohmann::json header = {{"T", feat.num_frames()},
                           {"D", feat.dim()},
                           {"frame_shift_ms", feat.frame_shift_ms}};
  out << header.dump() << '\n';
  char buf[32];
  for (Eigen::Index r = 0; r < feat.num_frames(); ++r) {
    for (Eigen::Index c = 0; c < feat.dim(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", feat.frames(r, c));
      if (c) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

FeatureMatrix read_features(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path + ": missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": bad header: " + e.what());
  }
  const auto rows = header.at("T").get<Eigen::Index>();
  const auto cols = header.at("D").get<Eigen::Index>();
  FeatureMatrix feat{Eigen::MatrixXd(rows, cols), header.value("frame_shift_ms", 10.0)};
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (!std::getline(in, line)) throw ValidationError(path + ": truncated feature rows");
    std::istringstream ss(line);
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!(ss >> feat.frames(r, c))) {
        throw ValidationError(path + ": row " + std::to_string(r) + " too short");
      }
    }
  }
  validate_features(feat);
  return feat;
}

}  // namespace simulmt
