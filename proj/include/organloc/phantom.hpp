/*
 * Copyright 2026 The organloc Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "organloc/organs.hpp"
#include "organloc/voldata.hpp"

namespace organloc::phantom {

// Sampling ranges for the synthetic population.
inline constexpr double kHeightMin = 1500.0, kHeightMax = 1950.0;
inline constexpr double kTorsoWidthMin = 280.0, kTorsoWidthMax = 420.0;
inline constexpr double kTorsoDepthMin = 180.0, kTorsoDepthMax = 300.0;
inline constexpr double kFatMin = 5.0, kFatMax = 30.0;
inline constexpr double kLateralityMax = 10.0;
inline constexpr double kOrganJitterSigma = 8.0;
inline constexpr double kBladderJitterSigma = 15.0;
/// Jitter draws are clamped to this many standard deviations.
inline constexpr double kJitterClamp = 2.5;

/// Posterior Y layers occupied by the scanner table.
inline constexpr std::uint32_t kTableLayers = 3;
inline constexpr float kTableIntensity = 0.05f;
inline constexpr float kBodyIntensity = 0.5f;
inline constexpr float kNoiseAmplitude = 0.01f;

/// Default grid: a head-first field of view, 64 x 48 x 144 voxels at 8 mm.
inline constexpr Dims3 kDefaultDims{64, 48, 144};
inline constexpr Spacing3 kDefaultSpacing{8.0f, 8.0f, 8.0f};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Vec3&, const Vec3&) = default;
};

struct BodyParams {
  double height_mm = 0.0;
  double torso_width_mm = 0.0;
  double torso_depth_mm = 0.0;
  double fat_thickness_mm = 0.0;
  /// Common left-right offset of all organs.
  double laterality_shift_mm = 0.0;
  /// Per-organ translation, canonical organ order.
  std::array<Vec3, kOrganCount> organ_jitter_mm{};
  std::uint64_t rng_seed = 0;

  friend bool operator==(const BodyParams&, const BodyParams&) = default;
};

struct PhantomOptions {
  bool table = true;
  bool noise = true;
};

struct PhantomCase {
  std::string case_id;
  Volume volume;
  /// One mask per organ, canonical order. Organs never overlap in 3D.
  std::vector<BinaryVolume> organ_labels;
  BodyParams params;

  /// Encodes the organ masks as a single map: 0 = background, k+1 = organ k.
  LabelVolume label_map() const;
};

BodyParams sample_params(std::uint64_t rng_seed);

/// Builds the body (head, neck, torso, pelvis, legs as superellipsoids) and
/// organ ellipsoids placed in the torso frame. The head top is anchored two
/// voxels below the superior edge of the grid; anatomy below the inferior
/// edge lies outside the field of view. Throws std::invalid_argument when
/// the body does not fit laterally, antero-posteriorly or superiorly, or
/// when an organ ends up empty.
PhantomCase build_phantom(const BodyParams& params, Dims3 dims, Spacing3 spacing,
                          const PhantomOptions& options = {}, std::string case_id = {});

/// Splits a label map back into per-organ binary volumes.
std::vector<BinaryVolume> split_label_map(const LabelVolume& labels);

/// Per-case seed: splitmix64(master ^ splitmix64(index)).
std::uint64_t case_seed(std::uint64_t master_seed, std::size_t index);

std::string case_id_for(std::size_t index);

struct ManifestRow {
  std::string case_id;
  std::uint64_t seed = 0;
  double height_mm = 0.0;
  double torso_width_mm = 0.0;
  double torso_depth_mm = 0.0;
};

inline constexpr const char* kManifestHeader = "case_id,seed,height_mm,torso_width_mm,torso_depth_mm";
inline constexpr const char* kManifestFile = "manifest.csv";

std::filesystem::path volume_path(const std::filesystem::path& dir, const std::string& case_id);
std::filesystem::path labels_path(const std::filesystem::path& dir, const std::string& case_id);

void write_manifest(const std::vector<ManifestRow>& rows, const std::filesystem::path& path);
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);

/// Writes n cases (intensity volume + label map each) and manifest.csv into
/// out_dir. Deterministic in (n, master_seed, dims, spacing).
std::vector<ManifestRow> generate_cohort(std::size_t n, std::uint64_t master_seed, Dims3 dims,
                                         Spacing3 spacing, const std::filesystem::path& out_dir);

}  // namespace organloc::phantom
