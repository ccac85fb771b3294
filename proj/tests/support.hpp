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

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <vector>

#include "organloc/rng.hpp"
#include "organloc/voldata.hpp"

namespace organloc::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("organloc_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Mask2D random_mask(Rng& rng, Dims2 dims, double density, Spacing2 spacing = {1.0f, 1.0f}) {
  std::vector<std::uint8_t> v(dims.count());
  for (auto& x : v) x = rng.uniform() < density ? 1 : 0;
  return Mask2D(dims, spacing, std::move(v));
}

inline Mask2D mask_from_rows(const std::vector<std::string>& rows, Spacing2 spacing = {1.0f, 1.0f}) {
  const auto h = static_cast<std::uint32_t>(rows.size());
  const auto w = static_cast<std::uint32_t>(rows.front().size());
  std::vector<std::uint8_t> v(std::size_t{w} * h);
  for (std::uint32_t z = 0; z < h; ++z)
    for (std::uint32_t x = 0; x < w; ++x) v[x + std::size_t{w} * z] = rows[z][x] == '#' ? 1 : 0;
  return Mask2D({w, h}, spacing, std::move(v));
}

}  // namespace organloc::testing
