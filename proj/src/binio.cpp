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

#include "binio.hpp"

#include <limits>

namespace organloc {

const char* to_string(FormatErrc code) {
  switch (code) {
    case FormatErrc::bad_magic: return "bad magic";
    case FormatErrc::bad_version: return "unsupported version";
    case FormatErrc::unknown_dtype: return "unknown dtype";
    case FormatErrc::dtype_mismatch: return "dtype mismatch";
    case FormatErrc::truncated: return "truncated payload";
    case FormatErrc::size_mismatch: return "payload size mismatch";
    case FormatErrc::invalid_value: return "invalid value";
    case FormatErrc::arch_mismatch: return "architecture mismatch";
  }
  return "format error";
}

}  // namespace organloc

namespace organloc::binio {

void ByteWriter::u16(std::uint16_t v) {
  buf_.push_back(static_cast<std::uint8_t>(v));
  buf_.push_back(static_cast<std::uint8_t>(v >> 8));
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::str16(std::string_view s) {
  if (s.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw std::invalid_argument("string too long for u16 length prefix");
  }
  u16(static_cast<std::uint16_t>(s.size()));
  buf_.insert(buf_.end(), s.begin(), s.end());
}

void ByteWriter::f32_array(std::span<const float> values) {
  buf_.reserve(buf_.size() + 4 * values.size());
  for (float v : values) f32(v);
}

void ByteReader::need(std::size_t n) const {
  if (bytes_.size() - pos_ < n) {
    throw FormatError(FormatErrc::truncated, "need " + std::to_string(n) + " bytes at offset " +
                                                 std::to_string(pos_) + ", have " +
                                                 std::to_string(bytes_.size() - pos_));
  }
}

std::uint8_t ByteReader::u8() {
  need(1);
  return bytes_[pos_++];
}

std::uint16_t ByteReader::u16() {
  need(2);
  std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
  pos_ += 2;
  return v;
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
  pos_ += 8;
  return v;
}

std::string ByteReader::str16() {
  const std::uint16_t n = u16();
  auto s = raw(n);
  return std::string(s.begin(), s.end());
}

std::span<const std::uint8_t> ByteReader::raw(std::size_t n) {
  need(n);
  auto s = bytes_.subspan(pos_, n);
  pos_ += n;
  return s;
}

std::vector<float> ByteReader::f32_array(std::size_t n) {
  if (n > remaining() / 4) need(n * 4);
  std::vector<float> out(n);
  for (auto& v : out) v = f32();
  return out;
}

void ByteReader::expect_header(std::string_view magic, std::uint8_t version) {
  if (bytes_.size() < magic.size()) {
    throw FormatError(FormatErrc::truncated, "file shorter than magic");
  }
  for (std::size_t i = 0; i < magic.size(); ++i) {
    if (bytes_[pos_ + i] != static_cast<std::uint8_t>(magic[i])) {
      throw FormatError(FormatErrc::bad_magic, "expected " + std::string(magic));
    }
  }
  pos_ += magic.size();
  const std::uint8_t got = u8();
  if (got != version) {
    throw FormatError(FormatErrc::bad_version,
                      "got " + std::to_string(got) + ", expected " + std::to_string(version));
  }
}

void ByteReader::expect_end(std::string_view what) const {
  if (remaining() != 0) {
    throw FormatError(FormatErrc::size_mismatch,
                      std::to_string(remaining()) + " trailing bytes after " + std::string(what));
  }
}

}  // namespace organloc::binio
