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

#include "organloc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace organloc::metrics {

namespace {

void check_same_dims(const Mask2D& a, const Mask2D& b) {
  if (a.dims() != b.dims()) throw std::invalid_argument("masks differ in dims");
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// One pass of the lower-envelope squared distance transform along a line:
// out[p] = min_q (weight * (p - q)^2 + f[q]).
void edt_line(const std::vector<double>& f, std::vector<double>& out, double weight, std::vector<std::size_t>& v,
              std::vector<double>& zb) {
  const std::size_t n = f.size();
  v.assign(n, 0);
  zb.assign(n + 1, 0.0);
  std::size_t k = 0;
  bool any = false;
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (!any) {
      v[0] = q;
      zb[0] = -kInf;
      zb[1] = kInf;
      any = true;
      continue;
    }
    const double fq = f[q] + weight * static_cast<double>(q) * static_cast<double>(q);
    double s;
    // zb[0] is -inf, so the envelope never empties.
    while (true) {
      const std::size_t p = v[k];
      const double fp = f[p] + weight * static_cast<double>(p) * static_cast<double>(p);
      s = (fq - fp) / (2.0 * weight * static_cast<double>(q - p));
      if (s > zb[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    zb[k] = s;
    zb[k + 1] = kInf;
  }
  if (!any) {
    std::fill(out.begin(), out.end(), kInf);
    return;
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (zb[k + 1] < static_cast<double>(q)) ++k;
    const double d = static_cast<double>(q) - static_cast<double>(v[k]);
    out[q] = weight * d * d + f[v[k]];
  }
}

// Squared Euclidean distance (mm^2) from every pixel to the nearest seed.
std::vector<double> squared_distance_map(const std::vector<PixelPoint>& seeds, Dims2 d, Spacing2 s) {
  std::vector<double> grid(d.count(), kInf);
  for (const auto& p : seeds) grid[p.x + std::size_t{d.w} * p.z] = 0.0;
  const double wz = static_cast<double>(s.h) * s.h, wx = static_cast<double>(s.w) * s.w;
  std::vector<std::size_t> v;
  std::vector<double> zb;
  std::vector<double> line(d.h), out(d.h);
  for (std::size_t x = 0; x < d.w; ++x) {
    for (std::size_t z = 0; z < d.h; ++z) line[z] = grid[x + d.w * z];
    edt_line(line, out, wz, v, zb);
    for (std::size_t z = 0; z < d.h; ++z) grid[x + d.w * z] = out[z];
  }
  line.resize(d.w);
  out.resize(d.w);
  for (std::size_t z = 0; z < d.h; ++z) {
    std::copy_n(grid.begin() + static_cast<std::ptrdiff_t>(z * d.w), d.w, line.begin());
    edt_line(line, out, wx, v, zb);
    std::copy(out.begin(), out.end(), grid.begin() + static_cast<std::ptrdiff_t>(z * d.w));
  }
  return grid;
}

double mean_distance(const std::vector<PixelPoint>& from, const std::vector<double>& dist2, Dims2 d) {
  double sum = 0.0;
  for (const auto& p : from) sum += std::sqrt(dist2[p.x + std::size_t{d.w} * p.z]);
  return sum / static_cast<double>(from.size());
}

}  // namespace

double dice(const Mask2D& a, const Mask2D& b) {
  check_same_dims(a, b);
  const auto va = a.values(), vb = b.values();
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    na += va[i];
    nb += vb[i];
    both += va[i] & vb[i];
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

std::vector<PixelPoint> boundary(const Mask2D& mask) {
  const auto d = mask.dims();
  std::vector<PixelPoint> out;
  auto on = [&](std::int64_t x, std::int64_t z) {
    return x >= 0 && z >= 0 && x < d.w && z < d.h &&
           mask.at(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(z)) != 0;
  };
  for (std::uint32_t z = 0; z < d.h; ++z) {
    for (std::uint32_t x = 0; x < d.w; ++x) {
      if (!mask.at(x, z)) continue;
      const std::int64_t xi = x, zi = z;
      if (!on(xi - 1, zi) || !on(xi + 1, zi) || !on(xi, zi - 1) || !on(xi, zi + 1)) out.push_back({x, z});
    }
  }
  if (out.empty()) throw std::invalid_argument("boundary of an empty mask");
  return out;
}

double assd(const Mask2D& a, const Mask2D& b) {
  check_same_dims(a, b);
  if (a.empty() || b.empty()) throw std::invalid_argument("ASSD needs two non-empty masks");
  const auto ba = boundary(a), bb = boundary(b);
  const auto da = squared_distance_map(ba, a.dims(), a.spacing());
  const auto db = squared_distance_map(bb, b.dims(), b.spacing());
  return 0.5 * (mean_distance(ba, db, a.dims()) + mean_distance(bb, da, b.dims()));
}

BBox2D bbox(const Mask2D& mask) {
  const auto d = mask.dims();
  std::uint32_t x0 = d.w, x1 = 0, z0 = d.h, z1 = 0;
  bool any = false;
  for (std::uint32_t z = 0; z < d.h; ++z) {
    for (std::uint32_t x = 0; x < d.w; ++x) {
      if (!mask.at(x, z)) continue;
      any = true;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      z0 = std::min(z0, z);
      z1 = std::max(z1, z);
    }
  }
  if (!any) throw std::invalid_argument("bounding box of an empty mask");
  const double sx = mask.spacing().w, sz = mask.spacing().h;
  return {x0 * sx, (x1 + 1.0) * sx, z0 * sz, (z1 + 1.0) * sz};
}

double doe(const BBox2D& gt, const BBox2D& pred) {
  return std::max({std::abs(gt.left - pred.left), std::abs(gt.right - pred.right), std::abs(gt.top - pred.top),
                   std::abs(gt.bottom - pred.bottom)});
}

double percentile(std::span<const double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("percentile fraction must lie in [0,1]");
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  const double rank = 1.0 + q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = static_cast<std::size_t>(std::ceil(rank));
  const double frac = rank - static_cast<double>(lo);
  return s[lo - 1] + frac * (s[hi - 1] - s[lo - 1]);
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[idx[j + 1]] == values[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("paired samples differ in length");
  std::vector<double> diff;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    if (d != 0.0) diff.push_back(d);
  }
  const std::size_t n = diff.size();
  if (n < kWilcoxonMinPairs) {
    throw std::invalid_argument("signed-rank test needs at least " + std::to_string(kWilcoxonMinPairs) +
                                " non-zero differences, got " + std::to_string(n));
  }
  std::vector<double> mag(n);
  for (std::size_t i = 0; i < n; ++i) mag[i] = std::abs(diff[i]);
  const auto ranks = average_ranks(mag);

  WilcoxonResult res;
  res.n = n;
  for (std::size_t i = 0; i < n; ++i) (diff[i] > 0.0 ? res.w_plus : res.w_minus) += ranks[i];
  res.statistic = std::min(res.w_plus, res.w_minus);

  if (n <= kWilcoxonExactMax) {
    // Average ranks are multiples of 1/2, so doubled ranks are integers and
    // the null distribution of 2*W+ is a subset-sum count.
    std::vector<std::size_t> r2(n);
    std::size_t total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      r2[i] = static_cast<std::size_t>(std::lround(2.0 * ranks[i]));
      total += r2[i];
    }
    std::vector<double> count(total + 1, 0.0);
    count[0] = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t s = total; s >= r2[i]; --s) {
        count[s] += count[s - r2[i]];
        if (s == r2[i]) break;
      }
    }
    const auto w2 = static_cast<std::size_t>(std::lround(2.0 * res.statistic));
    double le = 0.0;
    for (std::size_t s = 0; s <= w2; ++s) le += count[s];
    res.p_value = std::min(1.0, 2.0 * le / std::ldexp(1.0, static_cast<int>(n)));
    res.exact = true;
    return res;
  }

  const double nd = static_cast<double>(n);
  const double mu = nd * (nd + 1.0) / 4.0;
  double tie = 0.0;
  {
    std::vector<double> sorted = mag;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      tie += t * t * t - t;
      i = j + 1;
    }
  }
  const double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - tie / 48.0;
  const double z = std::max(0.0, std::abs(res.w_plus - mu) - 0.5) / std::sqrt(var);
  res.p_value = std::min(1.0, std::erfc(z / std::numbers::sqrt2));
  res.exact = false;
  return res;
}

double mean(std::span<const double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace organloc::metrics
