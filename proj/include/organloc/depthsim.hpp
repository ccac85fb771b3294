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

#include <span>
#include <vector>

#include "organloc/phantom.hpp"
#include "organloc/voldata.hpp"

namespace organloc::depthsim {

/// Structuring element used by the 3D binary opening.
enum class Element {
  cube,   // (2r+1)^3 box
  cross,  // 6-connected: axis-aligned arms of length r
};

const char* to_string(Element e);
Element element_from_string(std::string_view s);

struct PipelineConfig {
  double binarize_threshold = 0.02;
  double far_suppress_threshold = 0.3;
  int binary_opening_radius = 1;
  int gray_opening_radius = 1;
  Element binary_element = Element::cube;

  void validate() const;
};

/// (v - min) / (max - min). Throws on a constant volume.
Volume normalize_volume(const Volume& v);

/// 1 where value > threshold.
BinaryVolume binarize(const Volume& v, double threshold);

/// Erosion then dilation; voxels outside the grid count as 0.
BinaryVolume binary_erosion(const BinaryVolume& m, int radius, Element element = Element::cube);
BinaryVolume binary_dilation(const BinaryVolume& m, int radius, Element element = Element::cube);
BinaryVolume binary_opening(const BinaryVolume& m, int radius, Element element = Element::cube);

/// Min filter then max filter over a (2r+1)^2 window clipped to the image.
Grid2<float> grayscale_opening(const Grid2<float>& img, int radius);

/// Anterior-most body surface per (x,z) column, normalized so the nearest
/// surface maps to 1 and the farthest to 0, then far-suppressed and
/// grayscale-opened.
DepthImage extract_depth(const BinaryVolume& body, const PipelineConfig& cfg);

/// Channel c at (x,z) is 1 iff any voxel of volume c along Y is 1.
MaskStack project_masks(std::span<const BinaryVolume> labels);

/// Projection onto the X-Z plane of a single volume.
Mask2D project_coronal(const BinaryVolume& v);

struct SimulatedCase {
  DepthImage depth;
  MaskStack masks;
};

/// normalize -> binarize -> binary opening -> depth extraction, plus the
/// per-organ projections.
DepthImage simulate_depth(const Volume& scan, const PipelineConfig& cfg);
SimulatedCase simulate_case(const phantom::PhantomCase& pc, const PipelineConfig& cfg);

}  // namespace organloc::depthsim
