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

#include "organloc/depthsim.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

namespace organloc::depthsim {

namespace {

// Line access into a flat grid: element k of the line is data[base + k*stride].
struct Line {
  std::size_t base;
  std::size_t stride;
  std::size_t length;
};

// Calls f(line) for every line of a 3D grid running along `axis`.
template <class F>
void for_each_line(Dims3 d, int axis, F&& f) {
  const std::size_t nx = d.x, ny = d.y, nz = d.z;
  if (axis == 0) {
    for (std::size_t z = 0; z < nz; ++z)
      for (std::size_t y = 0; y < ny; ++y) f(Line{nx * (y + ny * z), 1, nx});
  } else if (axis == 1) {
    for (std::size_t z = 0; z < nz; ++z)
      for (std::size_t x = 0; x < nx; ++x) f(Line{x + nx * ny * z, nx, ny});
  } else {
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t x = 0; x < nx; ++x) f(Line{x + nx * y, nx * ny, nz});
  }
}

// 1D binary erosion (out-of-range counts as 0) or dilation along a line.
void morph_line(std::span<const std::uint8_t> in, std::span<std::uint8_t> out, const Line& l, int radius,
                bool erode) {
  const auto r = static_cast<std::ptrdiff_t>(radius);
  const auto n = static_cast<std::ptrdiff_t>(l.length);
  // Prefix count of ones along the line.
  std::vector<std::ptrdiff_t> prefix(l.length + 1, 0);
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    prefix[k + 1] = prefix[k] + in[l.base + static_cast<std::size_t>(k) * l.stride];
  }
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    const std::ptrdiff_t lo = k - r, hi = k + r;
    std::uint8_t v;
    if (erode) {
      v = (lo >= 0 && hi < n && prefix[hi + 1] - prefix[lo] == 2 * r + 1) ? 1 : 0;
    } else {
      const std::ptrdiff_t a = std::max<std::ptrdiff_t>(lo, 0), b = std::min(hi, n - 1);
      v = prefix[b + 1] - prefix[a] > 0 ? 1 : 0;
    }
    out[l.base + static_cast<std::size_t>(k) * l.stride] = v;
  }
}

std::vector<std::uint8_t> morph_axis(std::span<const std::uint8_t> in, Dims3 d, int axis, int radius, bool erode) {
  std::vector<std::uint8_t> out(in.size());
  for_each_line(d, axis, [&](const Line& l) { morph_line(in, out, l, radius, erode); });
  return out;
}

BinaryVolume morph(const BinaryVolume& m, int radius, Element element, bool erode) {
  if (radius < 0) throw std::invalid_argument("structuring element radius must be >= 0");
  if (radius == 0) return m;
  const auto d = m.dims();
  std::vector<std::uint8_t> out;
  if (element == Element::cube) {
    out = morph_axis(m.values(), d, 0, radius, erode);
    out = morph_axis(out, d, 1, radius, erode);
    out = morph_axis(out, d, 2, radius, erode);
  } else {
    // The cross is the union of three axis segments: erosion intersects the
    // per-axis erosions, dilation unites the per-axis dilations.
    out = morph_axis(m.values(), d, 0, radius, erode);
    for (int axis = 1; axis < 3; ++axis) {
      const auto other = morph_axis(m.values(), d, axis, radius, erode);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = erode ? (out[i] & other[i]) : (out[i] | other[i]);
    }
  }
  return BinaryVolume(d, m.spacing(), std::move(out));
}

// Running min (or max) over a clipped window of radius r along a line.
void extremum_line(const std::vector<float>& in, std::vector<float>& out, std::size_t base, std::size_t stride,
                   std::size_t n, int radius, bool take_min) {
  const auto r = static_cast<std::ptrdiff_t>(radius);
  const auto len = static_cast<std::ptrdiff_t>(n);
  for (std::ptrdiff_t k = 0; k < len; ++k) {
    const std::ptrdiff_t a = std::max<std::ptrdiff_t>(k - r, 0), b = std::min(k + r, len - 1);
    float v = in[base + static_cast<std::size_t>(a) * stride];
    for (std::ptrdiff_t j = a + 1; j <= b; ++j) {
      const float u = in[base + static_cast<std::size_t>(j) * stride];
      v = take_min ? std::min(v, u) : std::max(v, u);
    }
    out[base + static_cast<std::size_t>(k) * stride] = v;
  }
}

std::vector<float> extremum_2d(const std::vector<float>& in, Dims2 d, int radius, bool take_min) {
  std::vector<float> tmp(in.size()), out(in.size());
  for (std::size_t z = 0; z < d.h; ++z) extremum_line(in, tmp, z * d.w, 1, d.w, radius, take_min);
  for (std::size_t x = 0; x < d.w; ++x) extremum_line(tmp, out, x, d.w, d.h, radius, take_min);
  return out;
}

}  // namespace

const char* to_string(Element e) { return e == Element::cube ? "cube" : "cross"; }

Element element_from_string(std::string_view s) {
  if (s == "cube") return Element::cube;
  if (s == "cross") return Element::cross;
  throw std::invalid_argument("unknown structuring element '" + std::string(s) + "'");
}

void PipelineConfig::validate() const {
  if (!(binarize_threshold > 0.0 && binarize_threshold < 1.0)) {
    throw std::invalid_argument("binarize_threshold must lie in (0,1)");
  }
  if (!(far_suppress_threshold > 0.0 && far_suppress_threshold < 1.0)) {
    throw std::invalid_argument("far_suppress_threshold must lie in (0,1)");
  }
  if (binary_opening_radius < 0 || gray_opening_radius < 0) {
    throw std::invalid_argument("opening radii must be >= 0");
  }
}

Volume normalize_volume(const Volume& v) {
  const auto vals = v.values();
  const auto [lo_it, hi_it] = std::minmax_element(vals.begin(), vals.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) throw std::invalid_argument("cannot normalize a constant volume");
  const double range = hi - lo;
  std::vector<float> out(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) out[i] = static_cast<float>((vals[i] - lo) / range);
  return Volume(v.dims(), v.spacing(), std::move(out));
}

BinaryVolume binarize(const Volume& v, double threshold) {
  const auto vals = v.values();
  std::vector<std::uint8_t> out(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) out[i] = static_cast<double>(vals[i]) > threshold ? 1 : 0;
  return BinaryVolume(v.dims(), v.spacing(), std::move(out));
}

BinaryVolume binary_erosion(const BinaryVolume& m, int radius, Element element) {
  return morph(m, radius, element, true);
}

BinaryVolume binary_dilation(const BinaryVolume& m, int radius, Element element) {
  return morph(m, radius, element, false);
}

BinaryVolume binary_opening(const BinaryVolume& m, int radius, Element element) {
  return binary_dilation(binary_erosion(m, radius, element), radius, element);
}

Grid2<float> grayscale_opening(const Grid2<float>& img, int radius) {
  if (radius < 0) throw std::invalid_argument("opening radius must be >= 0");
  if (radius == 0) return img;
  std::vector<float> in(img.values().begin(), img.values().end());
  auto out = extremum_2d(extremum_2d(in, img.dims(), radius, true), img.dims(), radius, false);
  return Grid2<float>(img.dims(), img.spacing(), std::move(out));
}

DepthImage extract_depth(const BinaryVolume& body, const PipelineConfig& cfg) {
  cfg.validate();
  const auto d = body.dims();
  const Dims2 d2{d.x, d.z};
  const Spacing2 s2{body.spacing().x, body.spacing().z};
  constexpr double kNoSurface = -1.0;
  std::vector<double> height(d2.count(), kNoSurface);
  double h_min = std::numeric_limits<double>::infinity();
  double h_max = -std::numeric_limits<double>::infinity();
  for (std::uint32_t z = 0; z < d.z; ++z) {
    for (std::uint32_t x = 0; x < d.x; ++x) {
      for (std::uint32_t y = d.y; y-- > 0;) {
        if (body.at(x, y, z)) {
          const double h = static_cast<double>(y) * body.spacing().y;
          height[x + std::size_t{d.x} * z] = h;
          h_min = std::min(h_min, h);
          h_max = std::max(h_max, h);
          break;
        }
      }
    }
  }
  if (h_max < 0.0) throw std::invalid_argument("cannot extract depth from an empty body mask");

  std::vector<float> depth(d2.count(), 0.0f);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (height[i] == kNoSurface) continue;
    // A flat surface has no range to normalize; it is the nearest surface.
    const float v = h_max > h_min ? static_cast<float>((height[i] - h_min) / (h_max - h_min)) : 1.0f;
    depth[i] = static_cast<double>(v) < cfg.far_suppress_threshold ? 0.0f : v;
  }
  auto opened = grayscale_opening(Grid2<float>(d2, s2, std::move(depth)), cfg.gray_opening_radius);
  return DepthImage(d2, s2, std::vector<float>(opened.values().begin(), opened.values().end()));
}

Mask2D project_coronal(const BinaryVolume& v) {
  const auto d = v.dims();
  std::vector<std::uint8_t> out(std::size_t{d.x} * d.z, 0);
  for (std::uint32_t z = 0; z < d.z; ++z)
    for (std::uint32_t y = 0; y < d.y; ++y)
      for (std::uint32_t x = 0; x < d.x; ++x) out[x + std::size_t{d.x} * z] |= v.at(x, y, z);
  return Mask2D({d.x, d.z}, {v.spacing().x, v.spacing().z}, std::move(out));
}

MaskStack project_masks(std::span<const BinaryVolume> labels) {
  if (labels.size() != kOrganCount) {
    throw std::invalid_argument("expected " + std::to_string(kOrganCount) + " organ volumes, got " +
                                std::to_string(labels.size()));
  }
  std::vector<Mask2D> channels;
  channels.reserve(labels.size());
  for (const auto& l : labels) {
    if (l.dims() != labels.front().dims() || l.spacing() != labels.front().spacing()) {
      throw std::invalid_argument("organ volumes differ in dims or spacing");
    }
    channels.push_back(project_coronal(l));
  }
  return MaskStack(std::vector<std::string>(kOrganNames.begin(), kOrganNames.end()), std::move(channels));
}

DepthImage simulate_depth(const Volume& scan, const PipelineConfig& cfg) {
  cfg.validate();
  const auto body = binary_opening(binarize(normalize_volume(scan), cfg.binarize_threshold),
                                   cfg.binary_opening_radius, cfg.binary_element);
  return extract_depth(body, cfg);
}

SimulatedCase simulate_case(const phantom::PhantomCase& pc, const PipelineConfig& cfg) {
  return {simulate_depth(pc.volume, cfg), project_masks(pc.organ_labels)};
}

}  // namespace organloc::depthsim
