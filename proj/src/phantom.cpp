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

#include "organloc/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "organloc/rng.hpp"

namespace organloc::phantom {

namespace {

struct Shape {
  Vec3 center;
  Vec3 radii;
  double p_xy = 2.0;  // exponent across X and Y
  double p_z = 2.0;   // exponent along Z

  bool contains(double x, double y, double z) const {
    const double u = std::abs(x - center.x) / radii.x;
    const double v = std::abs(y - center.y) / radii.y;
    const double w = std::abs(z - center.z) / radii.z;
    if (u > 1.0 || v > 1.0 || w > 1.0) return false;
    return std::pow(u, p_xy) + std::pow(v, p_xy) + std::pow(w, p_z) <= 1.0;
  }
};

// Visits every voxel whose center lies inside `s`.
template <class F>
void rasterize(const Shape& s, Dims3 d, Spacing3 sp, F&& visit) {
  auto range = [](double c, double r, float step, std::uint32_t n) {
    const double lo = std::floor((c - r) / step - 0.5);
    const double hi = std::ceil((c + r) / step - 0.5);
    const auto clamp = [n](double v) {
      return static_cast<std::int64_t>(std::clamp(v, 0.0, static_cast<double>(n) - 1.0));
    };
    return std::pair{clamp(lo), clamp(hi)};
  };
  const auto [x0, x1] = range(s.center.x, s.radii.x, sp.x, d.x);
  const auto [y0, y1] = range(s.center.y, s.radii.y, sp.y, d.y);
  const auto [z0, z1] = range(s.center.z, s.radii.z, sp.z, d.z);
  for (std::int64_t z = z0; z <= z1; ++z) {
    const double pz = (static_cast<double>(z) + 0.5) * sp.z;
    for (std::int64_t y = y0; y <= y1; ++y) {
      const double py = (static_cast<double>(y) + 0.5) * sp.y;
      for (std::int64_t x = x0; x <= x1; ++x) {
        const double px = (static_cast<double>(x) + 0.5) * sp.x;
        if (s.contains(px, py, pz)) {
          visit(static_cast<std::size_t>(x) + std::size_t{d.x} * (static_cast<std::size_t>(y) +
                                                                 std::size_t{d.y} * static_cast<std::size_t>(z)));
        }
      }
    }
  }
}

// Placement of an organ inside the torso frame. x is a fraction of the inner
// half-width (+x = patient left), y a fraction of the inner depth measured
// from the back, z a fraction of body height below the head top. Radii use
// the same units.
struct OrganTemplate {
  Organ organ;
  double x, y, z;
  double rx, ry, rz;
  bool bilateral;
  float contrast;
};

constexpr std::array<OrganTemplate, kOrganCount> kTemplates = {{
    {Organ::hips, 0.55, 0.45, 0.455, 0.30, 0.30, 0.045, true, 0.15f},
    {Organ::femurs, 0.50, 0.0, 0.63, 0.14, 0.10, 0.13, true, 0.15f},
    {Organ::vertebra, 0.0, 0.15, 0.31, 0.13, 0.09, 0.14, false, 0.15f},
    {Organ::heart, 0.15, 0.60, 0.275, 0.32, 0.22, 0.045, false, 0.10f},
    {Organ::lungs, 0.48, 0.50, 0.245, 0.36, 0.38, 0.075, true, -0.35f},
    {Organ::kidneys, 0.42, 0.28, 0.39, 0.15, 0.14, 0.035, true, 0.12f},
    {Organ::liver, -0.32, 0.50, 0.335, 0.58, 0.36, 0.05, false, 0.08f},
    {Organ::pancreas, 0.12, 0.42, 0.38, 0.38, 0.08, 0.014, false, 0.05f},
    {Organ::spleen, 0.66, 0.32, 0.34, 0.15, 0.18, 0.035, false, 0.10f},
    {Organ::stomach, 0.38, 0.62, 0.345, 0.26, 0.20, 0.04, false, -0.10f},
    {Organ::urinary_bladder, 0.0, 0.60, 0.50, 0.20, 0.15, 0.025, false, 0.25f},
}};

// Later entries overwrite earlier ones where ellipsoids intersect.
constexpr std::array<Organ, kOrganCount> kPaintOrder = {
    Organ::lungs,  Organ::liver,           Organ::stomach, Organ::spleen, Organ::kidneys, Organ::pancreas,
    Organ::heart,  Organ::urinary_bladder, Organ::hips,    Organ::femurs, Organ::vertebra};

struct BodyFrame {
  double cx;          // body midline X
  double table_top;   // posterior body surface Y
  double head_top;    // superior-most Z
  double height;
  double half_width;  // outer
  double depth;       // outer
  double inner_half_width;
  double inner_depth;
  double fat;
  double leg_offset;
  Vec3 leg_radii;

  double z_at(double fraction) const { return head_top - fraction * height; }
};

BodyFrame make_frame(const BodyParams& p, Dims3 d, Spacing3 sp) {
  BodyFrame f{};
  f.cx = 0.5 * d.x * sp.x;
  f.table_top = kTableLayers * static_cast<double>(sp.y);
  f.head_top = d.z * static_cast<double>(sp.z) - 2.0 * sp.z;
  f.height = p.height_mm;
  f.half_width = 0.5 * p.torso_width_mm;
  f.depth = p.torso_depth_mm;
  f.fat = p.fat_thickness_mm;
  f.inner_half_width = f.half_width - f.fat;
  f.inner_depth = f.depth - 2.0 * f.fat;
  f.leg_offset = 0.25 * p.torso_width_mm;
  f.leg_radii = {0.2 * p.torso_width_mm, 0.27 * p.torso_depth_mm, 0.25 * p.height_mm};
  return f;
}

std::vector<Shape> body_parts(const BodyFrame& f) {
  const double h = f.height;
  const double w = 2.0 * f.half_width;
  const double dp = f.depth;
  std::vector<Shape> parts;
  // head
  parts.push_back({{f.cx, f.table_top + 0.055 * h, f.z_at(0.065)}, {0.045 * h, 0.055 * h, 0.065 * h}, 2.0, 2.0});
  // neck
  parts.push_back({{f.cx, f.table_top + 0.3 * dp, f.z_at(0.15)}, {0.17 * w, 0.2 * dp, 0.035 * h}, 2.0, 4.0});
  // torso
  parts.push_back({{f.cx, f.table_top + 0.5 * dp, f.z_at(0.31)}, {0.5 * w, 0.5 * dp, 0.14 * h}, 2.6, 6.0});
  // pelvis
  parts.push_back({{f.cx, f.table_top + 0.45 * dp, f.z_at(0.47)}, {0.48 * w, 0.45 * dp, 0.07 * h}, 2.4, 4.0});
  // legs
  for (double side : {-1.0, 1.0}) {
    parts.push_back({{f.cx + side * f.leg_offset, f.table_top + f.leg_radii.y, f.z_at(0.76)}, f.leg_radii, 2.0, 4.0});
  }
  return parts;
}

std::vector<Shape> organ_shapes(const OrganTemplate& t, const BodyParams& p, const BodyFrame& f) {
  const Vec3& jit = p.organ_jitter_mm[organ_index(t.organ)];
  const Vec3 radii{t.rx * f.inner_half_width, t.ry * f.inner_depth, t.rz * f.height};
  double y = f.table_top + f.fat + t.y * f.inner_depth;
  if (t.organ == Organ::femurs) y = f.table_top + f.leg_radii.y;
  std::vector<Shape> shapes;
  const double dx = t.x * f.inner_half_width;
  for (double side : t.bilateral ? std::vector<double>{-1.0, 1.0} : std::vector<double>{1.0}) {
    Vec3 c{f.cx + side * dx + p.laterality_shift_mm + jit.x, y + jit.y, f.z_at(t.z) + jit.z};
    // Mirrored bilateral organs share the jitter so the pair moves together.
    shapes.push_back({c, radii, 2.0, 2.0});
  }
  return shapes;
}

void check_fits(const std::vector<Shape>& parts, Dims3 d, Spacing3 sp) {
  const double ex = d.x * static_cast<double>(sp.x);
  const double ey = d.y * static_cast<double>(sp.y);
  const double ez = d.z * static_cast<double>(sp.z);
  for (const auto& s : parts) {
    if (s.center.x - s.radii.x < 0.0 || s.center.x + s.radii.x > ex) {
      throw std::invalid_argument("body exceeds grid along X");
    }
    if (s.center.y + s.radii.y > ey) throw std::invalid_argument("body exceeds grid along Y");
    if (s.center.z + s.radii.z > ez) throw std::invalid_argument("body exceeds grid along Z");
  }
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

BodyParams sample_params(std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  BodyParams p;
  p.rng_seed = rng_seed;
  p.height_mm = rng.uniform(kHeightMin, kHeightMax);
  p.torso_width_mm = rng.uniform(kTorsoWidthMin, kTorsoWidthMax);
  p.torso_depth_mm = rng.uniform(kTorsoDepthMin, kTorsoDepthMax);
  p.fat_thickness_mm = rng.uniform(kFatMin, kFatMax);
  p.laterality_shift_mm = rng.uniform(-kLateralityMax, kLateralityMax);
  for (std::size_t i = 0; i < kOrganCount; ++i) {
    const double sigma = i == organ_index(Organ::urinary_bladder) ? kBladderJitterSigma : kOrganJitterSigma;
    auto draw = [&] { return sigma * std::clamp(rng.normal(), -kJitterClamp, kJitterClamp); };
    p.organ_jitter_mm[i].x = draw();
    p.organ_jitter_mm[i].y = draw();
    p.organ_jitter_mm[i].z = draw();
  }
  return p;
}

LabelVolume PhantomCase::label_map() const {
  const auto& ref = volume;
  std::vector<std::uint8_t> out(ref.dims().count(), 0);
  for (std::size_t o = 0; o < organ_labels.size(); ++o) {
    const auto v = organ_labels[o].values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i]) out[i] = static_cast<std::uint8_t>(o + 1);
    }
  }
  return LabelVolume(ref.dims(), ref.spacing(), std::move(out));
}

std::vector<BinaryVolume> split_label_map(const LabelVolume& labels) {
  std::vector<std::vector<std::uint8_t>> masks(kOrganCount, std::vector<std::uint8_t>(labels.dims().count(), 0));
  const auto v = labels.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] == 0) continue;
    if (v[i] > kOrganCount) throw std::invalid_argument("label value " + std::to_string(v[i]) + " out of range");
    masks[v[i] - 1][i] = 1;
  }
  std::vector<BinaryVolume> out;
  out.reserve(kOrganCount);
  for (auto& m : masks) out.emplace_back(labels.dims(), labels.spacing(), std::move(m));
  return out;
}

PhantomCase build_phantom(const BodyParams& params, Dims3 dims, Spacing3 spacing, const PhantomOptions& options,
                          std::string case_id) {
  validate(dims);
  validate(spacing);
  const BodyFrame frame = make_frame(params, dims, spacing);
  const auto parts = body_parts(frame);
  check_fits(parts, dims, spacing);
  if (dims.y <= kTableLayers) throw std::invalid_argument("grid too thin for the table slab");

  const std::size_t n = dims.count();
  std::vector<std::uint8_t> body(n, 0);
  for (const auto& s : parts) rasterize(s, dims, spacing, [&](std::size_t i) { body[i] = 1; });

  std::vector<std::uint8_t> labels(n, 0);
  for (Organ o : kPaintOrder) {
    const auto& t = kTemplates[organ_index(o)];
    const auto code = static_cast<std::uint8_t>(organ_index(o) + 1);
    for (const auto& s : organ_shapes(t, params, frame)) {
      rasterize(s, dims, spacing, [&](std::size_t i) {
        if (body[i]) labels[i] = code;
      });
    }
  }

  std::vector<float> intensity(n, 0.0f);
  if (options.table) {
    for (std::uint32_t z = 0; z < dims.z; ++z) {
      for (std::uint32_t y = 0; y < kTableLayers; ++y) {
        for (std::uint32_t x = 0; x < dims.x; ++x) {
          intensity[x + std::size_t{dims.x} * (y + std::size_t{dims.y} * z)] = kTableIntensity;
        }
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i]) {
      intensity[i] = kBodyIntensity + kTemplates[labels[i] - 1].contrast;
    } else if (body[i]) {
      intensity[i] = kBodyIntensity;
    }
  }
  if (options.noise) {
    Rng noise(mix_seed(params.rng_seed, 1));
    for (auto& v : intensity) v += kNoiseAmplitude * static_cast<float>(noise.uniform());
  }

  PhantomCase out{std::move(case_id), Volume(dims, spacing, std::move(intensity)), {}, params};
  out.organ_labels = split_label_map(LabelVolume(dims, spacing, std::move(labels)));
  for (std::size_t o = 0; o < kOrganCount; ++o) {
    if (out.organ_labels[o].count_ones() == 0) {
      throw std::invalid_argument("organ " + std::string(kOrganNames[o]) + " is empty at this resolution");
    }
  }
  return out;
}

std::uint64_t case_seed(std::uint64_t master_seed, std::size_t index) { return mix_seed(master_seed, index); }

std::string case_id_for(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "case_%04zu", index);
  return buf;
}

std::filesystem::path volume_path(const std::filesystem::path& dir, const std::string& case_id) {
  return dir / (case_id + ".vol.dvol");
}

std::filesystem::path labels_path(const std::filesystem::path& dir, const std::string& case_id) {
  return dir / (case_id + ".labels.dvol");
}

void write_manifest(const std::vector<ManifestRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kManifestHeader << '\n';
  for (const auto& r : rows) {
    out << r.case_id << ',' << r.seed << ',' << format_double(r.height_mm) << ','
        << format_double(r.torso_width_mm) << ',' << format_double(r.torso_depth_mm) << '\n';
  }
  if (!out) throw std::runtime_error("short write to " + path.string());
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader) {
    throw std::runtime_error(path.string() + ": unexpected manifest header");
  }
  std::vector<ManifestRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 5) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    rows.push_back({f[0], std::stoull(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4])});
  }
  return rows;
}

std::vector<ManifestRow> generate_cohort(std::size_t n, std::uint64_t master_seed, Dims3 dims, Spacing3 spacing,
                                         const std::filesystem::path& out_dir) {
  if (n < 1) throw std::invalid_argument("cohort size must be >= 1");
  std::filesystem::create_directories(out_dir);
  std::vector<ManifestRow> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t seed = case_seed(master_seed, i);
    const auto params = sample_params(seed);
    const auto pc = build_phantom(params, dims, spacing, {}, case_id_for(i));
    write_volume(pc.volume, volume_path(out_dir, pc.case_id));
    write_volume(pc.label_map(), labels_path(out_dir, pc.case_id));
    rows.push_back({pc.case_id, seed, params.height_mm, params.torso_width_mm, params.torso_depth_mm});
  }
  write_manifest(rows, out_dir / kManifestFile);
  return rows;
}

}  // namespace organloc::phantom
