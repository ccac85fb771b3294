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
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace organloc {

// Axis convention: X runs left-right, Y posterior to anterior (the simulated
// camera sits on the anterior side looking along -Y), Z inferior to superior.
// The coronal projection plane is X-Z; 2D images store X as width and Z as
// height.

struct Dims3 {
  std::uint32_t x = 1;
  std::uint32_t y = 1;
  std::uint32_t z = 1;

  std::size_t count() const { return std::size_t{x} * y * z; }
  friend bool operator==(const Dims3&, const Dims3&) = default;
};

struct Spacing3 {
  float x = 1.0f;
  float y = 1.0f;
  float z = 1.0f;

  friend bool operator==(const Spacing3&, const Spacing3&) = default;
};

struct Dims2 {
  std::uint32_t w = 1;
  std::uint32_t h = 1;

  std::size_t count() const { return std::size_t{w} * h; }
  friend bool operator==(const Dims2&, const Dims2&) = default;
};

/// Pixel size in mm along the width (X) and height (Z) axes.
struct Spacing2 {
  float w = 1.0f;
  float h = 1.0f;

  friend bool operator==(const Spacing2&, const Spacing2&) = default;
};

void validate(const Dims3& dims);
void validate(const Spacing3& spacing);
void validate(const Dims2& dims);
void validate(const Spacing2& spacing);

/// Dense 3D grid with physical spacing, X-fastest storage:
/// value (x,y,z) lives at x + X*(y + Y*z).
template <class T>
class Grid3 {
 public:
  using value_type = T;

  Grid3(Dims3 dims, Spacing3 spacing) : Grid3(dims, spacing, std::vector<T>(dims.count())) {}

  Grid3(Dims3 dims, Spacing3 spacing, std::vector<T> values)
      : dims_(dims), spacing_(spacing), values_(std::move(values)) {
    validate(dims_);
    validate(spacing_);
    if (values_.size() != dims_.count()) {
      throw std::invalid_argument("grid payload has " + std::to_string(values_.size()) +
                                  " values, dims imply " + std::to_string(dims_.count()));
    }
  }

  const Dims3& dims() const { return dims_; }
  const Spacing3& spacing() const { return spacing_; }
  std::span<const T> values() const { return values_; }

  std::size_t index(std::uint32_t x, std::uint32_t y, std::uint32_t z) const {
    return x + std::size_t{dims_.x} * (y + std::size_t{dims_.y} * z);
  }
  T at(std::uint32_t x, std::uint32_t y, std::uint32_t z) const { return values_[index(x, y, z)]; }

  friend bool operator==(const Grid3&, const Grid3&) = default;

 private:
  Dims3 dims_;
  Spacing3 spacing_;
  std::vector<T> values_;
};

/// Scalar intensity volume (the simulated scan).
using Volume = Grid3<float>;

/// Byte-valued volume, e.g. an organ label map (0 = background, k = organ k-1).
using LabelVolume = Grid3<std::uint8_t>;

/// Byte volume restricted to {0,1}.
class BinaryVolume : public Grid3<std::uint8_t> {
 public:
  BinaryVolume(Dims3 dims, Spacing3 spacing) : Grid3(dims, spacing) {}
  BinaryVolume(Dims3 dims, Spacing3 spacing, std::vector<std::uint8_t> values);

  std::size_t count_ones() const;
};

/// Dense 2D grid, width-fastest: pixel (x,z) lives at x + W*z.
template <class T>
class Grid2 {
 public:
  using value_type = T;

  Grid2(Dims2 dims, Spacing2 spacing) : Grid2(dims, spacing, std::vector<T>(dims.count())) {}

  Grid2(Dims2 dims, Spacing2 spacing, std::vector<T> values)
      : dims_(dims), spacing_(spacing), values_(std::move(values)) {
    validate(dims_);
    validate(spacing_);
    if (values_.size() != dims_.count()) {
      throw std::invalid_argument("image payload has " + std::to_string(values_.size()) +
                                  " values, dims imply " + std::to_string(dims_.count()));
    }
  }

  const Dims2& dims() const { return dims_; }
  const Spacing2& spacing() const { return spacing_; }
  std::span<const T> values() const { return values_; }

  std::size_t index(std::uint32_t x, std::uint32_t z) const { return x + std::size_t{dims_.w} * z; }
  T at(std::uint32_t x, std::uint32_t z) const { return values_[index(x, z)]; }

  friend bool operator==(const Grid2&, const Grid2&) = default;

 private:
  Dims2 dims_;
  Spacing2 spacing_;
  std::vector<T> values_;
};

/// 2D binary mask, values in {0,1}.
class Mask2D : public Grid2<std::uint8_t> {
 public:
  Mask2D(Dims2 dims, Spacing2 spacing) : Grid2(dims, spacing) {}
  Mask2D(Dims2 dims, Spacing2 spacing, std::vector<std::uint8_t> values);

  std::size_t count_ones() const;
  bool empty() const { return count_ones() == 0; }
};

/// Coronal height map, values in [0,1], background exactly 0.
class DepthImage : public Grid2<float> {
 public:
  DepthImage(Dims2 dims, Spacing2 spacing) : Grid2(dims, spacing) {}
  DepthImage(Dims2 dims, Spacing2 spacing, std::vector<float> values);
};

/// Ordered per-organ binary masks sharing one 2D geometry. Channels may
/// overlap.
class MaskStack {
 public:
  MaskStack(std::vector<std::string> names, std::vector<Mask2D> channels);

  /// All-zero stack with the canonical organ names.
  static MaskStack empty_canonical(Dims2 dims, Spacing2 spacing);

  std::size_t size() const { return channels_.size(); }
  const Dims2& dims() const { return channels_.front().dims(); }
  const Spacing2& spacing() const { return channels_.front().spacing(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Mask2D>& channels() const { return channels_; }
  const Mask2D& channel(std::size_t i) const { return channels_.at(i); }

  /// True when the names equal the canonical organ list.
  bool is_canonical() const;

  friend bool operator==(const MaskStack&, const MaskStack&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Mask2D> channels_;
};

using Bytes = std::vector<std::uint8_t>;

// Binary encodings. Layouts:
//  DVOL: "DVOL" u8 version=1, u8 dtype (0 float32, 1 uint8), 3 x u32 dims,
//        3 x f32 spacing, payload X-fastest.
//  DMSK: "DMSK" u8 version=1, u8 n_channels, 2 x u32 dims, 2 x f32 spacing,
//        per channel: u16 name length, UTF-8 name, W*H u8 payload.
//  DDEP: "DDEP" u8 version=1, 2 x u32 dims, 2 x f32 spacing, W*H f32 payload.
// All multi-byte fields are little-endian.
inline constexpr std::uint8_t kFormatVersion = 1;

enum class VolumeDtype : std::uint8_t { float32 = 0, uint8 = 1 };

Bytes encode_volume(const Volume& v);
Bytes encode_volume(const Grid3<std::uint8_t>& v);
Bytes encode_maskstack(const MaskStack& m);
Bytes encode_depth(const DepthImage& d);

VolumeDtype peek_volume_dtype(std::span<const std::uint8_t> bytes);
Volume decode_volume(std::span<const std::uint8_t> bytes);
LabelVolume decode_label_volume(std::span<const std::uint8_t> bytes);
MaskStack decode_maskstack(std::span<const std::uint8_t> bytes);
DepthImage decode_depth(std::span<const std::uint8_t> bytes);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

Volume read_volume(const std::filesystem::path& path);
LabelVolume read_label_volume(const std::filesystem::path& path);
void write_volume(const Volume& v, const std::filesystem::path& path);
void write_volume(const Grid3<std::uint8_t>& v, const std::filesystem::path& path);

MaskStack read_maskstack(const std::filesystem::path& path);
void write_maskstack(const MaskStack& m, const std::filesystem::path& path);

DepthImage read_depth(const std::filesystem::path& path);
void write_depth(const DepthImage& d, const std::filesystem::path& path);

}  // namespace organloc
