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

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "organloc/voldata.hpp"

namespace organloc::metrics {

/// Tight box around the ones of a mask, in mm, using pixel-edge coordinates:
/// left = min_x * sx, right = (max_x + 1) * sx, top/bottom likewise along Z.
struct BBox2D {
  double left = 0.0;
  double right = 0.0;
  double top = 0.0;
  double bottom = 0.0;

  friend bool operator==(const BBox2D&, const BBox2D&) = default;
};

struct PixelPoint {
  std::uint32_t x = 0;
  std::uint32_t z = 0;

  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

/// 2|A n B| / (|A| + |B|); 1 when both masks are empty.
double dice(const Mask2D& a, const Mask2D& b);

/// Ones with at least one 4-neighbour that is zero or outside the image,
/// in row-major order.
std::vector<PixelPoint> boundary(const Mask2D& mask);

/// Average symmetric surface distance in mm between the boundaries of two
/// non-empty masks (Euclidean, pixel centers).
double assd(const Mask2D& a, const Mask2D& b);

BBox2D bbox(const Mask2D& mask);

/// Largest absolute offset among the four corresponding box sides.
double doe(const BBox2D& gt, const BBox2D& pred);

/// Linear-interpolation percentile at rank 1 + q (n - 1) on the sorted
/// sample, q in [0,1].
double percentile(std::span<const double> values, double q);
inline double percentile95(std::span<const double> values) { return percentile(values, 0.95); }

struct WilcoxonResult {
  std::size_t n = 0;        // non-zero differences
  double w_plus = 0.0;      // rank sum of positive differences x - y
  double w_minus = 0.0;     // rank sum of negative differences
  double statistic = 0.0;   // min(w_plus, w_minus)
  double p_value = 1.0;     // two-sided
  bool exact = false;
};

/// Largest sample (after dropping zero differences) that uses the exact
/// null distribution; larger samples use the normal approximation with tie
/// and continuity correction.
inline constexpr std::size_t kWilcoxonExactMax = 12;
inline constexpr std::size_t kWilcoxonMinPairs = 5;

/// Paired two-sided signed-rank test. Throws std::invalid_argument when the
/// samples differ in length or fewer than five differences are non-zero.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y);

/// Average ranks (1-based) of the values, ties sharing their mean rank.
std::vector<double> average_ranks(std::span<const double> values);

double mean(std::span<const double> v);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double stddev(std::span<const double> v);

}  // namespace organloc::metrics
