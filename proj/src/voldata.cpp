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

#include "organloc/voldata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include "binio.hpp"
#include "organloc/errors.hpp"
#include "organloc/organs.hpp"

namespace organloc {

namespace {

bool all_binary(std::span<const std::uint8_t> values) {
  return std::all_of(values.begin(), values.end(), [](std::uint8_t v) { return v <= 1; });
}

// Size of a payload of `count` elements of `elem` bytes, or max() if it
// cannot be represented.
std::size_t payload_bytes(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::size_t elem) {
  constexpr auto kMax = std::numeric_limits<std::size_t>::max();
  std::size_t n = elem;
  for (std::uint64_t f : {a, b, c}) {
    if (f != 0 && n > kMax / f) return kMax;
    n *= static_cast<std::size_t>(f);
  }
  return n;
}

void check_payload(binio::ByteReader& r, std::size_t expected, const char* what) {
  if (r.remaining() < expected) {
    throw FormatError(FormatErrc::truncated, std::string(what) + " payload needs " +
                                                 std::to_string(expected) + " bytes, have " +
                                                 std::to_string(r.remaining()));
  }
  if (r.remaining() > expected) {
    throw FormatError(FormatErrc::size_mismatch, std::string(what) + " payload declares " +
                                                     std::to_string(expected) + " bytes, file has " +
                                                     std::to_string(r.remaining()));
  }
}

template <class F>
auto rethrow_invalid(F&& build) -> decltype(build()) {
  try {
    return build();
  } catch (const std::invalid_argument& e) {
    throw FormatError(FormatErrc::invalid_value, e.what());
  }
}

struct VolumeHeader {
  VolumeDtype dtype;
  Dims3 dims;
  Spacing3 spacing;
};

VolumeHeader read_volume_header(binio::ByteReader& r) {
  r.expect_header("DVOL", kFormatVersion);
  const std::uint8_t code = r.u8();
  if (code > 1) throw FormatError(FormatErrc::unknown_dtype, "dtype code " + std::to_string(code));
  VolumeHeader h{static_cast<VolumeDtype>(code), {}, {}};
  h.dims.x = r.u32();
  h.dims.y = r.u32();
  h.dims.z = r.u32();
  h.spacing.x = r.f32();
  h.spacing.y = r.f32();
  h.spacing.z = r.f32();
  rethrow_invalid([&] {
    validate(h.dims);
    validate(h.spacing);
  });
  return h;
}

void write_volume_header(binio::ByteWriter& w, VolumeDtype dtype, const Dims3& d, const Spacing3& s) {
  w.magic("DVOL");
  w.u8(kFormatVersion);
  w.u8(static_cast<std::uint8_t>(dtype));
  w.u32(d.x);
  w.u32(d.y);
  w.u32(d.z);
  w.f32(s.x);
  w.f32(s.y);
  w.f32(s.z);
}

}  // namespace

void validate(const Dims3& d) {
  if (d.x < 1 || d.y < 1 || d.z < 1) throw std::invalid_argument("volume dims must be >= 1");
}

void validate(const Spacing3& s) {
  for (float v : {s.x, s.y, s.z}) {
    if (!(v > 0.0f) || !std::isfinite(v)) throw std::invalid_argument("spacing must be positive");
  }
}

void validate(const Dims2& d) {
  if (d.w < 1 || d.h < 1) throw std::invalid_argument("image dims must be >= 1");
}

void validate(const Spacing2& s) {
  for (float v : {s.w, s.h}) {
    if (!(v > 0.0f) || !std::isfinite(v)) throw std::invalid_argument("spacing must be positive");
  }
}

BinaryVolume::BinaryVolume(Dims3 dims, Spacing3 spacing, std::vector<std::uint8_t> values)
    : Grid3(dims, spacing, std::move(values)) {
  if (!all_binary(this->values())) throw std::invalid_argument("binary volume holds values other than 0/1");
}

std::size_t BinaryVolume::count_ones() const {
  return static_cast<std::size_t>(std::count(values().begin(), values().end(), std::uint8_t{1}));
}

Mask2D::Mask2D(Dims2 dims, Spacing2 spacing, std::vector<std::uint8_t> values)
    : Grid2(dims, spacing, std::move(values)) {
  if (!all_binary(this->values())) throw std::invalid_argument("mask holds values other than 0/1");
}

std::size_t Mask2D::count_ones() const {
  return static_cast<std::size_t>(std::count(values().begin(), values().end(), std::uint8_t{1}));
}

DepthImage::DepthImage(Dims2 dims, Spacing2 spacing, std::vector<float> values)
    : Grid2(dims, spacing, std::move(values)) {
  for (float v : this->values()) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw std::invalid_argument("depth value " + std::to_string(v) + " outside [0,1]");
    }
  }
}

MaskStack::MaskStack(std::vector<std::string> names, std::vector<Mask2D> channels)
    : names_(std::move(names)), channels_(std::move(channels)) {
  if (channels_.empty()) throw std::invalid_argument("mask stack needs at least one channel");
  if (channels_.size() != names_.size()) {
    throw std::invalid_argument("mask stack has " + std::to_string(channels_.size()) +
                                " channels but " + std::to_string(names_.size()) + " names");
  }
  if (channels_.size() > std::numeric_limits<std::uint8_t>::max()) {
    throw std::invalid_argument("mask stack supports at most 255 channels");
  }
  for (const auto& c : channels_) {
    if (c.dims() != channels_.front().dims() || c.spacing() != channels_.front().spacing()) {
      throw std::invalid_argument("mask stack channels differ in geometry");
    }
  }
}

MaskStack MaskStack::empty_canonical(Dims2 dims, Spacing2 spacing) {
  std::vector<std::string> names(kOrganNames.begin(), kOrganNames.end());
  std::vector<Mask2D> channels(kOrganCount, Mask2D(dims, spacing));
  return MaskStack(std::move(names), std::move(channels));
}

bool MaskStack::is_canonical() const {
  return std::equal(names_.begin(), names_.end(), kOrganNames.begin(), kOrganNames.end());
}

Bytes encode_volume(const Volume& v) {
  binio::ByteWriter w;
  write_volume_header(w, VolumeDtype::float32, v.dims(), v.spacing());
  w.f32_array(v.values());
  return std::move(w).take();
}

Bytes encode_volume(const Grid3<std::uint8_t>& v) {
  binio::ByteWriter w;
  write_volume_header(w, VolumeDtype::uint8, v.dims(), v.spacing());
  w.raw(v.values());
  return std::move(w).take();
}

VolumeDtype peek_volume_dtype(std::span<const std::uint8_t> bytes) {
  binio::ByteReader r(bytes);
  return read_volume_header(r).dtype;
}

Volume decode_volume(std::span<const std::uint8_t> bytes) {
  binio::ByteReader r(bytes);
  const auto h = read_volume_header(r);
  if (h.dtype != VolumeDtype::float32) {
    throw FormatError(FormatErrc::dtype_mismatch, "expected float32 volume");
  }
  check_payload(r, payload_bytes(h.dims.x, h.dims.y, h.dims.z, 4), "volume");
  auto values = r.f32_array(r.remaining() / 4);
  return rethrow_invalid([&] { return Volume(h.dims, h.spacing, std::move(values)); });
}

LabelVolume decode_label_volume(std::span<const std::uint8_t> bytes) {
  binio::ByteReader r(bytes);
  const auto h = read_volume_header(r);
  if (h.dtype != VolumeDtype::uint8) {
    throw FormatError(FormatErrc::dtype_mismatch, "expected uint8 volume");
  }
  check_payload(r, payload_bytes(h.dims.x, h.dims.y, h.dims.z, 1), "volume");
  auto payload = r.raw(r.remaining());
  return rethrow_invalid([&] {
    return LabelVolume(h.dims, h.spacing, std::vector<std::uint8_t>(payload.begin(), payload.end()));
  });
}

Bytes encode_maskstack(const MaskStack& m) {
  binio::ByteWriter w;
  w.magic("DMSK");
  w.u8(kFormatVersion);
  w.u8(static_cast<std::uint8_t>(m.size()));
  w.u32(m.dims().w);
  w.u32(m.dims().h);
  w.f32(m.spacing().w);
  w.f32(m.spacing().h);
  for (std::size_t c = 0; c < m.size(); ++c) {
    w.str16(m.names()[c]);
    w.raw(m.channel(c).values());
  }
  return std::move(w).take();
}

MaskStack decode_maskstack(std::span<const std::uint8_t> bytes) {
  binio::ByteReader r(bytes);
  r.expect_header("DMSK", kFormatVersion);
  const std::uint8_t n = r.u8();
  Dims2 dims;
  dims.w = r.u32();
  dims.h = r.u32();
  Spacing2 spacing;
  spacing.w = r.f32();
  spacing.h = r.f32();
  rethrow_invalid([&] {
    validate(dims);
    validate(spacing);
  });
  const std::size_t plane = payload_bytes(dims.w, dims.h, 1, 1);
  std::vector<std::string> names;
  std::vector<Mask2D> channels;
  for (std::uint8_t c = 0; c < n; ++c) {
    names.push_back(r.str16());
    if (r.remaining() < plane) {
      throw FormatError(FormatErrc::truncated, "channel " + std::to_string(c) + " payload");
    }
    auto payload = r.raw(plane);
    channels.push_back(rethrow_invalid([&] {
      return Mask2D(dims, spacing, std::vector<std::uint8_t>(payload.begin(), payload.end()));
    }));
  }
  r.expect_end("mask stack");
  return rethrow_invalid([&] { return MaskStack(std::move(names), std::move(channels)); });
}

Bytes encode_depth(const DepthImage& d) {
  binio::ByteWriter w;
  w.magic("DDEP");
  w.u8(kFormatVersion);
  w.u32(d.dims().w);
  w.u32(d.dims().h);
  w.f32(d.spacing().w);
  w.f32(d.spacing().h);
  w.f32_array(d.values());
  return std::move(w).take();
}

DepthImage decode_depth(std::span<const std::uint8_t> bytes) {
  binio::ByteReader r(bytes);
  r.expect_header("DDEP", kFormatVersion);
  Dims2 dims;
  dims.w = r.u32();
  dims.h = r.u32();
  Spacing2 spacing;
  spacing.w = r.f32();
  spacing.h = r.f32();
  rethrow_invalid([&] {
    validate(dims);
    validate(spacing);
  });
  check_payload(r, payload_bytes(dims.w, dims.h, 1, 4), "depth");
  auto values = r.f32_array(r.remaining() / 4);
  return rethrow_invalid([&] { return DepthImage(dims, spacing, std::move(values)); });
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

Volume read_volume(const std::filesystem::path& path) { return decode_volume(read_file(path)); }

LabelVolume read_label_volume(const std::filesystem::path& path) {
  return decode_label_volume(read_file(path));
}

void write_volume(const Volume& v, const std::filesystem::path& path) {
  write_file(path, encode_volume(v));
}

void write_volume(const Grid3<std::uint8_t>& v, const std::filesystem::path& path) {
  write_file(path, encode_volume(v));
}

MaskStack read_maskstack(const std::filesystem::path& path) { return decode_maskstack(read_file(path)); }

void write_maskstack(const MaskStack& m, const std::filesystem::path& path) {
  write_file(path, encode_maskstack(m));
}

DepthImage read_depth(const std::filesystem::path& path) { return decode_depth(read_file(path)); }

void write_depth(const DepthImage& d, const std::filesystem::path& path) {
  write_file(path, encode_depth(d));
}

}  // namespace organloc
