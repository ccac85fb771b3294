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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "organloc/depthsim.hpp"
#include "organloc/phantom.hpp"
#include "support.hpp"

using namespace organloc;
using namespace organloc::depthsim;

namespace {

const Spacing3 kIso{1.0f, 1.0f, 1.0f};

BinaryVolume random_binary(Rng& rng, Dims3 d, double density) {
  std::vector<std::uint8_t> v(d.count());
  for (auto& x : v) x = rng.uniform() < density ? 1 : 0;
  return BinaryVolume(d, kIso, std::move(v));
}

BinaryVolume box(Dims3 d, Dims3 lo, Dims3 hi) {
  std::vector<std::uint8_t> v(d.count(), 0);
  for (std::uint32_t z = lo.z; z < hi.z; ++z)
    for (std::uint32_t y = lo.y; y < hi.y; ++y)
      for (std::uint32_t x = lo.x; x < hi.x; ++x) v[x + d.x * (y + std::size_t{d.y} * z)] = 1;
  return BinaryVolume(d, kIso, std::move(v));
}

bool in_element(int dx, int dy, int dz, int r, Element e) {
  if (e == Element::cube) return std::abs(dx) <= r && std::abs(dy) <= r && std::abs(dz) <= r;
  const int nonzero = (dx != 0) + (dy != 0) + (dz != 0);
  return nonzero <= 1 && std::abs(dx) + std::abs(dy) + std::abs(dz) <= r;
}

// Morphology by definition: erosion keeps p when every element offset lands
// on a 1 inside the grid, dilation sets p when any offset lands on a 1.
BinaryVolume brute_morph(const BinaryVolume& m, int r, Element e, bool erode) {
  const auto d = m.dims();
  std::vector<std::uint8_t> out(d.count());
  auto get = [&](int x, int y, int z) -> int {
    if (x < 0 || y < 0 || z < 0 || x >= int(d.x) || y >= int(d.y) || z >= int(d.z)) return 0;
    return m.at(x, y, z);
  };
  for (int z = 0; z < int(d.z); ++z)
    for (int y = 0; y < int(d.y); ++y)
      for (int x = 0; x < int(d.x); ++x) {
        bool acc = erode;
        for (int dz = -r; dz <= r; ++dz)
          for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
              if (!in_element(dx, dy, dz, r, e)) continue;
              const int v = get(x + dx, y + dy, z + dz);
              if (erode) acc = acc && v;
              else acc = acc || v;
            }
        out[m.index(x, y, z)] = acc ? 1 : 0;
      }
  return BinaryVolume(d, m.spacing(), std::move(out));
}

Grid2<float> brute_gray_open(const Grid2<float>& img, int r) {
  const auto d = img.dims();
  auto filter = [&](const Grid2<float>& in, bool take_min) {
    std::vector<float> out(d.count());
    for (int z = 0; z < int(d.h); ++z)
      for (int x = 0; x < int(d.w); ++x) {
        float acc = in.at(x, z);
        for (int dz = -r; dz <= r; ++dz)
          for (int dx = -r; dx <= r; ++dx) {
            const int xx = x + dx, zz = z + dz;
            if (xx < 0 || zz < 0 || xx >= int(d.w) || zz >= int(d.h)) continue;
            acc = take_min ? std::min(acc, in.at(xx, zz)) : std::max(acc, in.at(xx, zz));
          }
        out[img.index(x, z)] = acc;
      }
    return Grid2<float>(d, img.spacing(), std::move(out));
  };
  return filter(filter(img, true), false);
}

// Column scan with explicit normalization, far suppression and opening.
std::vector<double> brute_depth(const BinaryVolume& body, double far, int gray_r) {
  const auto d = body.dims();
  std::vector<int> surface(std::size_t{d.x} * d.z, -1);
  for (std::uint32_t z = 0; z < d.z; ++z)
    for (std::uint32_t x = 0; x < d.x; ++x)
      for (std::uint32_t y = 0; y < d.y; ++y)
        if (body.at(x, y, z)) surface[x + d.x * z] = int(y);
  int lo = 1 << 30, hi = -1;
  for (int s : surface)
    if (s >= 0) {
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
  std::vector<float> v(surface.size(), 0.0f);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (surface[i] < 0) continue;
    double t = hi == lo ? 1.0 : double(surface[i] - lo) / double(hi - lo);
    if (t < far) t = 0.0;
    v[i] = static_cast<float>(t);
  }
  const auto opened = brute_gray_open(Grid2<float>({d.x, d.z}, {1.0f, 1.0f}, v), gray_r);
  return {opened.values().begin(), opened.values().end()};
}

}  // namespace

TEST_CASE("normalization is affine onto [0,1]") {
  const Volume v({3, 1, 1}, kIso, {0.0f, 250.0f, 500.0f});
  const auto n = normalize_volume(v);
  CHECK(n.at(0, 0, 0) == 0.0f);
  CHECK(n.at(1, 0, 0) == 0.5f);
  CHECK(n.at(2, 0, 0) == 1.0f);
  const Volume u({4, 1, 1}, kIso, {0.0f, 0.25f, 0.7f, 1.0f});
  CHECK(normalize_volume(u) == u);
  CHECK_THROWS_AS(normalize_volume(Volume({2, 2, 1}, kIso, {3.0f, 3.0f, 3.0f, 3.0f})), std::invalid_argument);
}

TEST_CASE("binarization uses a strict threshold") {
  const Volume v({3, 1, 1}, kIso, {0.021f, 0.019f, 0.02f});
  const auto b = binarize(v, 0.02);
  CHECK(b.at(0, 0, 0) == 1);
  CHECK(b.at(1, 0, 0) == 0);
  CHECK(b.at(2, 0, 0) == 0);
}

TEST_CASE("opening removes an isolated voxel") {
  for (Element e : {Element::cube, Element::cross}) {
    const auto m = box({7, 7, 7}, {3, 3, 3}, {4, 4, 4});
    CHECK(binary_opening(m, 1, e).count_ones() == 0);
  }
}

TEST_CASE("opening a solid cube") {
  const auto cube = box({14, 14, 14}, {2, 2, 2}, {12, 12, 12});
  CHECK(binary_opening(cube, 1, Element::cube) == cube);
  const auto crossed = binary_opening(cube, 1, Element::cross);
  const auto core = box({14, 14, 14}, {3, 3, 3}, {11, 11, 11});
  const auto cv = crossed.values(), iv = cube.values(), kv = core.values();
  for (std::size_t i = 0; i < cv.size(); ++i) {
    CHECK(cv[i] <= iv[i]);
    CHECK(kv[i] <= cv[i]);
  }
}

TEST_CASE("radius 0 morphology is the identity") {
  Rng rng(1);
  const auto m = random_binary(rng, {6, 5, 4}, 0.5);
  CHECK(binary_opening(m, 0, Element::cube) == m);
  CHECK(binary_opening(m, 0, Element::cross) == m);
  const Grid2<float> g({3, 2}, {1.0f, 1.0f}, {0.1f, 0.5f, 0.2f, 0.9f, 0.0f, 0.3f});
  CHECK(grayscale_opening(g, 0) == g);
}

TEST_CASE("erosion and dilation agree with the definition") {
  Rng rng(17);
  for (int rep = 0; rep < 12; ++rep) {
    const Dims3 d{3 + std::uint32_t(rng.below(6)), 3 + std::uint32_t(rng.below(6)), 3 + std::uint32_t(rng.below(6))};
    const auto m = random_binary(rng, d, rep % 2 ? 0.8 : 0.35);
    for (int r : {1, 2}) {
      for (Element e : {Element::cube, Element::cross}) {
        CHECK(binary_erosion(m, r, e) == brute_morph(m, r, e, true));
        CHECK(binary_dilation(m, r, e) == brute_morph(m, r, e, false));
        CHECK(binary_opening(m, r, e) == brute_morph(brute_morph(m, r, e, true), r, e, false));
      }
    }
  }
}

TEST_CASE("grayscale opening agrees with clipped min/max filters") {
  Rng rng(23);
  for (int rep = 0; rep < 10; ++rep) {
    const Dims2 d{2 + std::uint32_t(rng.below(9)), 2 + std::uint32_t(rng.below(9))};
    std::vector<float> v(d.count());
    for (auto& x : v) x = static_cast<float>(rng.uniform());
    const Grid2<float> g(d, {1.0f, 1.0f}, v);
    for (int r : {1, 2}) CHECK(grayscale_opening(g, r) == brute_gray_open(g, r));
  }
}

TEST_CASE("grayscale opening removes a bright spike") {
  std::vector<float> v(9 * 9, 0.5f);
  v[4 + 9 * 4] = 1.0f;
  const auto out = grayscale_opening(Grid2<float>({9, 9}, {1.0f, 1.0f}, v), 1);
  for (float x : out.values()) CHECK(x == 0.5f);
}

TEST_CASE("box body gives a flat unit footprint") {
  const Dims3 d{12, 10, 14};
  const auto body = box(d, {3, 0, 4}, {9, 6, 11});
  const auto depth = extract_depth(body, {});
  for (std::uint32_t z = 0; z < d.z; ++z)
    for (std::uint32_t x = 0; x < d.x; ++x) {
      const bool inside = x >= 3 && x < 9 && z >= 4 && z < 11;
      CHECK(depth.at(x, z) == (inside ? 1.0f : 0.0f));
    }
}

TEST_CASE("hemisphere apex maps to 1") {
  const Dims3 d{21, 12, 21};
  std::vector<std::uint8_t> v(d.count(), 0);
  for (std::uint32_t z = 0; z < d.z; ++z)
    for (std::uint32_t y = 0; y < d.y; ++y)
      for (std::uint32_t x = 0; x < d.x; ++x) {
        const double dx = double(x) - 10, dz = double(z) - 10, dy = double(y);
        if (dx * dx + dy * dy + dz * dz <= 100.0) v[x + d.x * (y + std::size_t{d.y} * z)] = 1;
      }
  const BinaryVolume body(d, kIso, v);
  PipelineConfig raw;
  raw.gray_opening_radius = 0;
  const auto depth = extract_depth(body, raw);
  const auto vals = depth.values();
  CHECK(*std::max_element(vals.begin(), vals.end()) == 1.0f);
  CHECK(depth.at(10, 10) == 1.0f);
  CHECK(std::count(vals.begin(), vals.end(), 1.0f) == 1);

  // A one-pixel apex is flattened by the grayscale opening but stays maximal.
  const auto opened = extract_depth(body, {});
  const auto ov = opened.values();
  CHECK(opened.at(10, 10) == *std::max_element(ov.begin(), ov.end()));
}

TEST_CASE("depth extraction agrees with a column-scan oracle") {
  Rng rng(31);
  for (int rep = 0; rep < 10; ++rep) {
    const Dims3 d{10, 9, 11};
    std::vector<std::uint8_t> v(d.count(), 0);
    for (std::uint32_t z = 0; z < d.z; ++z)
      for (std::uint32_t x = 0; x < d.x; ++x) {
        const auto h = static_cast<std::uint32_t>(rng.below(d.y + 1));
        for (std::uint32_t y = 0; y < h; ++y) v[x + d.x * (y + std::size_t{d.y} * z)] = 1;
      }
    const BinaryVolume body(d, kIso, v);
    PipelineConfig cfg;
    cfg.gray_opening_radius = rep % 3;
    const auto got = extract_depth(body, cfg);
    const auto want = brute_depth(body, cfg.far_suppress_threshold, cfg.gray_opening_radius);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(got.values()[i] == doctest::Approx(want[i]).epsilon(1e-6));
  }
}

TEST_CASE("table slab disappears under far suppression") {
  const Dims3 d{16, 20, 16};
  auto raw = box(d, {4, 3, 4}, {12, 19, 12}).values();
  std::vector<std::uint8_t> v(raw.begin(), raw.end());
  for (std::uint32_t z = 0; z < d.z; ++z)
    for (std::uint32_t y = 0; y < 3; ++y)
      for (std::uint32_t x = 0; x < d.x; ++x) v[x + d.x * (y + std::size_t{d.y} * z)] = 1;
  const auto depth = extract_depth(BinaryVolume(d, kIso, v), {});
  for (std::uint32_t z = 0; z < d.z; ++z)
    for (std::uint32_t x = 0; x < d.x; ++x) {
      const bool body = x >= 4 && x < 12 && z >= 4 && z < 12;
      CHECK(depth.at(x, z) == (body ? 1.0f : 0.0f));
    }
}

TEST_CASE("coronal projection") {
  const Dims3 d{6, 10, 12};
  std::vector<BinaryVolume> organs(kOrganCount, BinaryVolume(d, kIso));
  organs[0] = box(d, {3, 7, 9}, {4, 8, 10});
  organs[1] = box(d, {2, 1, 9}, {4, 2, 10});
  const auto stack = project_masks(organs);
  CHECK(stack.is_canonical());
  CHECK(stack.dims() == Dims2{6, 12});
  CHECK(stack.channel(0).at(3, 9) == 1);
  CHECK(stack.channel(0).count_ones() == 1);
  CHECK(stack.channel(1).at(3, 9) == 1);
  CHECK(stack.channel(1).at(2, 9) == 1);
  CHECK(stack.channel(5).empty());
  CHECK_THROWS_AS(project_masks(std::span(organs).first(10)), std::invalid_argument);
}

TEST_CASE("generated cases: determinism, value range, no table pixels") {
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto pc = phantom::build_phantom(phantom::sample_params(s), phantom::kDefaultDims, phantom::kDefaultSpacing);
    const PipelineConfig cfg;
    const auto a = simulate_case(pc, cfg), b = simulate_case(pc, cfg);
    CHECK(encode_depth(a.depth) == encode_depth(b.depth));
    CHECK(a.masks == b.masks);
    CHECK(a.depth.spacing() == Spacing2{phantom::kDefaultSpacing.x, phantom::kDefaultSpacing.z});

    const auto d = pc.volume.dims();
    std::vector<std::uint8_t> footprint(std::size_t{d.x} * d.z, 0);
    for (std::uint32_t z = 0; z < d.z; ++z)
      for (std::uint32_t y = 0; y < d.y; ++y)
        for (std::uint32_t x = 0; x < d.x; ++x)
          if (pc.volume.at(x, y, z) > 0.1f) footprint[x + d.x * z] = 1;
    std::size_t lit = 0;
    for (std::size_t i = 0; i < footprint.size(); ++i) {
      const float v = a.depth.values()[i];
      const bool in_range = v == 0.0f || (v >= 0.3f && v <= 1.0f);
      CHECK(in_range);
      if (!footprint[i]) CHECK(v == 0.0f);
      lit += v > 0.0f;
    }
    CHECK(lit > footprint.size() / 10);
  }
}

TEST_CASE("pipeline configuration") {
  PipelineConfig cfg;
  CHECK(cfg.binarize_threshold == 0.02);
  CHECK(cfg.far_suppress_threshold == 0.3);
  CHECK_NOTHROW(cfg.validate());
  cfg.far_suppress_threshold = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.binary_opening_radius = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK(element_from_string("cross") == Element::cross);
  CHECK(std::string(to_string(Element::cube)) == "cube");
  CHECK_THROWS_AS(element_from_string("ball"), std::invalid_argument);
}
