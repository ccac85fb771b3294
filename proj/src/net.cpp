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

#include "organloc/net.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "organloc/rng.hpp"

namespace organloc::net {

namespace {

template <class T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapRM = Eigen::Map<MatRM<T>>;
template <class T>
using ConstMapRM = Eigen::Map<const MatRM<T>>;
template <class T>
using ConstMapVec = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

std::string shape_str(std::span<const std::uint32_t> s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

// Indices into the parameter list for an L-level architecture.
struct Slots {
  std::size_t levels;

  std::size_t enc(std::size_t l, std::size_t conv) const { return 4 * l + 2 * conv; }
  std::size_t dec(std::size_t l, std::size_t conv) const { return 4 * levels + 4 * (levels - 2 - l) + 2 * conv; }
  std::size_t head() const { return 4 * levels + 4 * (levels - 1); }
};

// Unrolls 3x3 (or kxk) zero-padded neighborhoods: row (c*k + ky)*k + kx,
// column y*W + x.
template <class T>
void im2col(const T* in, std::size_t C, std::size_t H, std::size_t W, std::size_t k, T* col) {
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t hw = H * W;
  const auto h = static_cast<std::ptrdiff_t>(H), w = static_cast<std::ptrdiff_t>(W);
  for (std::size_t c = 0; c < C; ++c) {
    const T* src = in + c * hw;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* dst = col + ((c * k + ky) * k + kx) * hw;
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
        const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx), x1 = std::min(w, w - dx);
        for (std::ptrdiff_t y = 0; y < h; ++y) {
          T* d = dst + y * w;
          const std::ptrdiff_t sy = y + dy;
          if (sy < 0 || sy >= h) {
            std::fill(d, d + w, T(0));
            continue;
          }
          std::fill(d, d + std::min(x0, w), T(0));
          if (x1 > x0) std::copy(src + sy * w + x0 + dx, src + sy * w + x1 + dx, d + x0);
          std::fill(d + std::min(std::max(x0, x1), w), d + w, T(0));
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column gradients back onto the image.
template <class T>
void col2im_add(const T* col, std::size_t C, std::size_t H, std::size_t W, std::size_t k, T* out) {
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t hw = H * W;
  const auto h = static_cast<std::ptrdiff_t>(H), w = static_cast<std::ptrdiff_t>(W);
  for (std::size_t c = 0; c < C; ++c) {
    T* dst = out + c * hw;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* src = col + ((c * k + ky) * k + kx) * hw;
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
        const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx), x1 = std::min(w, w - dx);
        for (std::ptrdiff_t y = 0; y < h; ++y) {
          const std::ptrdiff_t sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          const T* s = src + y * w;
          T* d = dst + sy * w + dx;
          for (std::ptrdiff_t x = x0; x < x1; ++x) d[x] += s[x];
        }
      }
    }
  }
}

template <class T>
void relu_inplace(BasicTensor<T>& t) {
  for (auto& v : t.values) v = v < T(0) ? T(0) : v;  // NaN passes through
}

// Zeroes gradient entries whose ReLU output was not positive.
template <class T>
void relu_backward_inplace(BasicTensor<T>& grad, const BasicTensor<T>& activated) {
  for (std::size_t i = 0; i < grad.values.size(); ++i) {
    if (!(activated.values[i] > T(0))) grad.values[i] = T(0);
  }
}

template <class T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const std::size_t B = a.shape[0], ca = a.shape[1], cb = b.shape[1];
  const std::size_t hw = std::size_t{a.shape[2]} * a.shape[3];
  BasicTensor<T> out({a.shape[0], static_cast<std::uint32_t>(ca + cb), a.shape[2], a.shape[3]});
  for (std::size_t n = 0; n < B; ++n) {
    std::copy_n(a.data() + n * ca * hw, ca * hw, out.data() + n * (ca + cb) * hw);
    std::copy_n(b.data() + n * cb * hw, cb * hw, out.data() + n * (ca + cb) * hw + ca * hw);
  }
  return out;
}

// Splits a concat gradient into its first `ca` channels and the rest,
// adding the tail onto `tail_accum`.
template <class T>
BasicTensor<T> split_channels(const BasicTensor<T>& g, std::size_t ca, BasicTensor<T>& tail_accum) {
  const std::size_t B = g.shape[0], c = g.shape[1], cb = c - ca;
  const std::size_t hw = std::size_t{g.shape[2]} * g.shape[3];
  BasicTensor<T> head({g.shape[0], static_cast<std::uint32_t>(ca), g.shape[2], g.shape[3]});
  for (std::size_t n = 0; n < B; ++n) {
    std::copy_n(g.data() + n * c * hw, ca * hw, head.data() + n * ca * hw);
    const T* src = g.data() + n * c * hw + ca * hw;
    T* dst = tail_accum.data() + n * cb * hw;
    for (std::size_t i = 0; i < cb * hw; ++i) dst[i] += src[i];
  }
  return head;
}

template <class T>
BasicTensor<T> upsample2_backward(const BasicTensor<T>& g) {
  const std::size_t planes = std::size_t{g.shape[0]} * g.shape[1];
  const std::size_t H = g.shape[2] / 2, W = g.shape[3] / 2;
  BasicTensor<T> out({g.shape[0], g.shape[1], static_cast<std::uint32_t>(H), static_cast<std::uint32_t>(W)});
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = g.data() + p * 4 * H * W;
    T* dst = out.data() + p * H * W;
    for (std::size_t y = 0; y < 2 * H; ++y)
      for (std::size_t x = 0; x < 2 * W; ++x) dst[(y / 2) * W + x / 2] += src[y * 2 * W + x];
  }
  return out;
}

void add_into(auto& dst, const auto& src) {
  for (std::size_t i = 0; i < dst.values.size(); ++i) dst.values[i] += src.values[i];
}

template <class T>
void check_input(const Architecture& a, const BasicTensor<T>& input) {
  if (input.shape.size() != 4 || input.shape[0] < 1 || input.shape[1] != 1 || input.shape[2] != a.input_h ||
      input.shape[3] != a.input_w) {
    throw std::invalid_argument("input shape " + shape_str(input.shape) + " does not match architecture " +
                                describe(a));
  }
}

}  // namespace

void Architecture::validate() const {
  if (channels.empty()) throw std::invalid_argument("architecture needs at least one level");
  if (channels.size() > 16) throw std::invalid_argument("architecture has too many levels");
  for (auto c : channels) {
    if (c == 0) throw std::invalid_argument("channel widths must be positive");
  }
  if (n_out == 0) throw std::invalid_argument("n_out must be positive");
  const std::uint32_t div = 1u << (channels.size() - 1);
  if (input_w == 0 || input_h == 0 || input_w % div != 0 || input_h % div != 0) {
    throw std::invalid_argument("input " + std::to_string(input_w) + "x" + std::to_string(input_h) +
                                " not divisible by " + std::to_string(div) + " for " +
                                std::to_string(channels.size()) + " levels");
  }
}

std::string describe(const Architecture& a) {
  std::string ch;
  for (std::size_t i = 0; i < a.channels.size(); ++i) ch += (i ? "/" : "") + std::to_string(a.channels[i]);
  return "levels=" + std::to_string(a.levels()) + " channels=" + ch + " input=" + std::to_string(a.input_w) + "x" +
         std::to_string(a.input_h) + " n_out=" + std::to_string(a.n_out);
}

std::size_t shape_numel(std::span<const std::uint32_t> shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

template <class T>
BasicTensor<T>::BasicTensor(std::vector<std::uint32_t> s) : shape(std::move(s)), values(shape_numel(shape), T(0)) {}

template <class T>
BasicTensor<T>::BasicTensor(std::vector<std::uint32_t> s, std::vector<T> v) : shape(std::move(s)), values(std::move(v)) {
  if (values.size() != shape_numel(shape)) {
    throw std::invalid_argument("tensor of shape " + shape_str(shape) + " given " + std::to_string(values.size()) +
                                " values");
  }
}

std::vector<ParamInfo> parameter_layout(const Architecture& a) {
  a.validate();
  const std::size_t L = a.levels();
  std::vector<ParamInfo> out;
  auto conv = [&](const std::string& prefix, std::uint32_t cout, std::uint32_t cin, std::uint32_t k) {
    out.push_back({prefix + ".weight", {cout, cin, k, k}});
    out.push_back({prefix + ".bias", {cout}});
  };
  for (std::size_t l = 0; l < L; ++l) {
    const std::uint32_t cin = l == 0 ? 1u : a.channels[l - 1];
    conv("enc" + std::to_string(l) + ".conv1", a.channels[l], cin, 3);
    conv("enc" + std::to_string(l) + ".conv2", a.channels[l], a.channels[l], 3);
  }
  for (std::size_t l = L - 1; l-- > 0;) {
    const std::uint32_t cin = std::uint32_t{a.channels[l + 1]} + a.channels[l];
    conv("dec" + std::to_string(l) + ".conv1", a.channels[l], cin, 3);
    conv("dec" + std::to_string(l) + ".conv2", a.channels[l], a.channels[l], 3);
  }
  conv("head", a.n_out, a.channels[0], 1);
  return out;
}

template <class T>
BasicParams<T> BasicParams<T>::zeros(const Architecture& arch) {
  BasicParams p;
  p.arch = arch;
  for (auto& entry : parameter_layout(arch)) {
    p.names.push_back(entry.name);
    p.tensors.emplace_back(entry.shape);
  }
  return p;
}

template <class T>
const BasicTensor<T>& BasicParams<T>::get(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return tensors[i];
  }
  throw std::out_of_range("no parameter named " + std::string(name));
}

template <class T>
BasicTensor<T>& BasicParams<T>::get(std::string_view name) {
  return const_cast<BasicTensor<T>&>(std::as_const(*this).get(name));
}

template <class T>
std::size_t BasicParams<T>::count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.numel();
  return n;
}

NetworkParams init_params(const Architecture& arch, std::uint64_t rng_seed) {
  auto p = NetworkParams::zeros(arch);
  Rng rng(rng_seed);
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    auto& t = p.tensors[i];
    if (t.shape.size() != 4) continue;  // bias
    const double fan_in = static_cast<double>(t.shape[1]) * t.shape[2] * t.shape[3];
    const double bound = std::sqrt(6.0 / fan_in);
    for (auto& v : t.values) v = static_cast<float>(bound * (2.0 * rng.uniform() - 1.0));
  }
  return p;
}

template <class T>
std::uint64_t param_digest(const BasicParams<T>& params) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const auto& t : params.tensors) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.values.data());
    for (std::size_t i = 0; i < t.values.size() * sizeof(T); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
  const std::size_t B = input.shape[0], cin = input.shape[1], H = input.shape[2], W = input.shape[3];
  const std::size_t cout = weight.shape[0], k = weight.shape[2];
  if (weight.shape[1] != cin || bias.numel() != cout) {
    throw std::invalid_argument("conv2d: weight " + shape_str(weight.shape) + " incompatible with input " +
                                shape_str(input.shape));
  }
  const std::size_t hw = H * W, K = cin * k * k;
  BasicTensor<T> out({input.shape[0], static_cast<std::uint32_t>(cout), input.shape[2], input.shape[3]});
  ConstMapRM<T> wm(weight.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(K));
  ConstMapVec<T> bv(bias.data(), static_cast<Eigen::Index>(cout));
  std::vector<T> col(k == 1 ? 0 : K * hw);
  for (std::size_t n = 0; n < B; ++n) {
    const T* in_n = input.data() + n * cin * hw;
    if (k != 1) im2col(in_n, cin, H, W, k, col.data());
    ConstMapRM<T> cm(k == 1 ? in_n : col.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(hw));
    MapRM<T> om(out.data() + n * cout * hw, static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(hw));
    om.noalias() = wm * cm;
    om.colwise() += bv;
  }
  return out;
}

template <class T>
void conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& grad_out,
                     BasicTensor<T>* grad_input, BasicTensor<T>& grad_weight, BasicTensor<T>& grad_bias) {
  const std::size_t B = input.shape[0], cin = input.shape[1], H = input.shape[2], W = input.shape[3];
  const std::size_t cout = weight.shape[0], k = weight.shape[2];
  const std::size_t hw = H * W, K = cin * k * k;
  if (grad_weight.shape != weight.shape || grad_bias.numel() != cout ||
      grad_out.shape != std::vector<std::uint32_t>{input.shape[0], static_cast<std::uint32_t>(cout), input.shape[2],
                                                   input.shape[3]} ||
      (grad_input && grad_input->shape != input.shape)) {
    throw std::invalid_argument("conv2d_backward: gradient buffers do not match the layer shapes");
  }
  const auto eK = static_cast<Eigen::Index>(K), eHW = static_cast<Eigen::Index>(hw),
             eC = static_cast<Eigen::Index>(cout);
  ConstMapRM<T> wm(weight.data(), eC, eK);
  MapRM<T> gw(grad_weight.data(), eC, eK);
  std::vector<T> col(k == 1 ? 0 : K * hw);
  std::vector<T> gcol(k == 1 || !grad_input ? 0 : K * hw);
  for (std::size_t n = 0; n < B; ++n) {
    const T* in_n = input.data() + n * cin * hw;
    if (k != 1) im2col(in_n, cin, H, W, k, col.data());
    ConstMapRM<T> cm(k == 1 ? in_n : col.data(), eK, eHW);
    ConstMapRM<T> go(grad_out.data() + n * cout * hw, eC, eHW);
    gw.noalias() += go * cm.transpose();
    for (std::size_t c = 0; c < cout; ++c) {
      const T* row = grad_out.data() + (n * cout + c) * hw;
      T acc = T(0);
      for (std::size_t i = 0; i < hw; ++i) acc += row[i];
      grad_bias.values[c] += acc;
    }
    if (grad_input) {
      T* gin_n = grad_input->data() + n * cin * hw;
      if (k == 1) {
        MapRM<T> gi(gin_n, eK, eHW);
        gi.noalias() += wm.transpose() * go;
      } else {
        MapRM<T> gc(gcol.data(), eK, eHW);
        gc.noalias() = wm.transpose() * go;
        col2im_add(gcol.data(), cin, H, W, k, gin_n);
      }
    }
  }
}

template <class T>
BasicTensor<T> max_pool2(const BasicTensor<T>& input, std::vector<std::uint32_t>* argmax) {
  const std::size_t planes = std::size_t{input.shape[0]} * input.shape[1];
  const std::size_t H = input.shape[2], W = input.shape[3], h = H / 2, w = W / 2;
  BasicTensor<T> out({input.shape[0], input.shape[1], static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(w)});
  if (argmax) argmax->assign(out.numel(), 0);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        std::size_t best = p * H * W + 2 * y * W + 2 * x;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = p * H * W + (2 * y + dy) * W + 2 * x + dx;
            const T v = input.values[idx], b = input.values[best];
            if (v > b || (std::isnan(v) && !std::isnan(b))) best = idx;
          }
        }
        const std::size_t o = p * h * w + y * w + x;
        out.values[o] = input.values[best];
        if (argmax) (*argmax)[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return out;
}

template <class T>
BasicTensor<T> upsample2(const BasicTensor<T>& input) {
  const std::size_t planes = std::size_t{input.shape[0]} * input.shape[1];
  const std::size_t H = input.shape[2], W = input.shape[3];
  BasicTensor<T> out({input.shape[0], input.shape[1], input.shape[2] * 2, input.shape[3] * 2});
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = input.data() + p * H * W;
    T* dst = out.data() + p * 4 * H * W;
    for (std::size_t y = 0; y < 2 * H; ++y)
      for (std::size_t x = 0; x < 2 * W; ++x) dst[y * 2 * W + x] = src[(y / 2) * W + x / 2];
  }
  return out;
}

template <class T>
BasicTensor<T> forward(const BasicParams<T>& params, const BasicTensor<T>& input, ForwardTrace<T>* trace) {
  const auto& arch = params.arch;
  arch.validate();
  check_input(arch, input);
  const std::size_t L = arch.levels();
  const Slots slot{L};
  const auto& P = params.tensors;

  ForwardTrace<T> local;
  ForwardTrace<T>& tr = trace ? *trace : local;
  tr = ForwardTrace<T>{};
  if (trace) tr.digest = param_digest(params);
  tr.input = input;
  tr.enc.resize(L);
  tr.dec.resize(L - 1);

  const BasicTensor<T>* x = &tr.input;
  for (std::size_t l = 0; l < L; ++l) {
    auto& e = tr.enc[l];
    e.a1 = conv2d(*x, P[slot.enc(l, 0)], P[slot.enc(l, 0) + 1]);
    relu_inplace(e.a1);
    e.a2 = conv2d(e.a1, P[slot.enc(l, 1)], P[slot.enc(l, 1) + 1]);
    relu_inplace(e.a2);
    if (l + 1 < L) {
      e.pooled = max_pool2(e.a2, &e.argmax);
      x = &e.pooled;
    }
  }
  const BasicTensor<T>* below = &tr.enc[L - 1].a2;
  for (std::size_t l = L - 1; l-- > 0;) {
    auto& d = tr.dec[l];
    d.cat = concat_channels(upsample2(*below), tr.enc[l].a2);
    d.a1 = conv2d(d.cat, P[slot.dec(l, 0)], P[slot.dec(l, 0) + 1]);
    relu_inplace(d.a1);
    d.a2 = conv2d(d.a1, P[slot.dec(l, 1)], P[slot.dec(l, 1) + 1]);
    relu_inplace(d.a2);
    below = &d.a2;
  }
  auto logits = conv2d(*below, P[slot.head()], P[slot.head() + 1]);
  tr.logits_shape = logits.shape;
  return logits;
}

template <class T>
BasicParams<T> backward(const BasicParams<T>& params, const ForwardTrace<T>& tr, const BasicTensor<T>& grad_logits) {
  const auto& arch = params.arch;
  const std::size_t L = arch.levels();
  if (tr.enc.size() != L || tr.digest != param_digest(params)) {
    throw std::invalid_argument("forward trace is stale or was produced with different parameters");
  }
  if (grad_logits.shape != tr.logits_shape) {
    throw std::invalid_argument("grad_logits shape " + shape_str(grad_logits.shape) + " does not match logits " +
                                shape_str(tr.logits_shape));
  }
  const Slots slot{L};
  const auto& P = params.tensors;
  auto grads = BasicParams<T>::zeros(arch);
  auto& G = grads.tensors;

  std::vector<BasicTensor<T>> g_enc(L);
  for (std::size_t l = 0; l < L; ++l) g_enc[l] = BasicTensor<T>(tr.enc[l].a2.shape);

  const BasicTensor<T>& top = L > 1 ? tr.dec[0].a2 : tr.enc[0].a2;
  BasicTensor<T> g(top.shape);
  conv2d_backward(top, P[slot.head()], grad_logits, &g, G[slot.head()], G[slot.head() + 1]);

  if (L == 1) {
    add_into(g_enc[0], g);
  } else {
    for (std::size_t l = 0; l + 1 < L; ++l) {
      const auto& d = tr.dec[l];
      relu_backward_inplace(g, d.a2);
      BasicTensor<T> g_a1(d.a1.shape);
      conv2d_backward(d.a1, P[slot.dec(l, 1)], g, &g_a1, G[slot.dec(l, 1)], G[slot.dec(l, 1) + 1]);
      relu_backward_inplace(g_a1, d.a1);
      BasicTensor<T> g_cat(d.cat.shape);
      conv2d_backward(d.cat, P[slot.dec(l, 0)], g_a1, &g_cat, G[slot.dec(l, 0)], G[slot.dec(l, 0) + 1]);
      auto g_up = split_channels(g_cat, arch.channels[l + 1], g_enc[l]);
      auto g_below = upsample2_backward(g_up);
      if (l + 2 < L) {
        g = std::move(g_below);
      } else {
        add_into(g_enc[L - 1], g_below);
      }
    }
  }

  for (std::size_t l = L; l-- > 0;) {
    const auto& e = tr.enc[l];
    auto& ga2 = g_enc[l];
    relu_backward_inplace(ga2, e.a2);
    BasicTensor<T> g_a1(e.a1.shape);
    conv2d_backward(e.a1, P[slot.enc(l, 1)], ga2, &g_a1, G[slot.enc(l, 1)], G[slot.enc(l, 1) + 1]);
    relu_backward_inplace(g_a1, e.a1);
    if (l == 0) {
      conv2d_backward(tr.input, P[slot.enc(0, 0)], g_a1, static_cast<BasicTensor<T>*>(nullptr), G[slot.enc(0, 0)],
                      G[slot.enc(0, 0) + 1]);
    } else {
      const auto& prev = tr.enc[l - 1];
      BasicTensor<T> g_pooled(prev.pooled.shape);
      conv2d_backward(prev.pooled, P[slot.enc(l, 0)], g_a1, &g_pooled, G[slot.enc(l, 0)], G[slot.enc(l, 0) + 1]);
      for (std::size_t i = 0; i < g_pooled.numel(); ++i) g_enc[l - 1].values[prev.argmax[i]] += g_pooled.values[i];
    }
  }
  return grads;
}

Tensor stack_depth(std::span<const DepthImage* const> images) {
  if (images.empty()) throw std::invalid_argument("empty batch");
  const auto d = images.front()->dims();
  Tensor out({static_cast<std::uint32_t>(images.size()), 1, d.h, d.w});
  for (std::size_t n = 0; n < images.size(); ++n) {
    if (images[n]->dims() != d) throw std::invalid_argument("depth images in a batch differ in dims");
    const auto v = images[n]->values();
    std::copy(v.begin(), v.end(), out.data() + n * d.count());
  }
  return out;
}

Tensor stack_masks(std::span<const MaskStack* const> masks) {
  if (masks.empty()) throw std::invalid_argument("empty batch");
  const auto d = masks.front()->dims();
  const std::size_t C = masks.front()->size();
  Tensor out({static_cast<std::uint32_t>(masks.size()), static_cast<std::uint32_t>(C), d.h, d.w});
  for (std::size_t n = 0; n < masks.size(); ++n) {
    if (masks[n]->dims() != d || masks[n]->size() != C) {
      throw std::invalid_argument("mask stacks in a batch differ in geometry");
    }
    for (std::size_t c = 0; c < C; ++c) {
      const auto v = masks[n]->channel(c).values();
      std::copy(v.begin(), v.end(), out.data() + (n * C + c) * d.count());
    }
  }
  return out;
}

MaskStack masks_from_logits(const Tensor& logits, std::size_t item, Spacing2 spacing) {
  if (logits.shape.size() != 4 || item >= logits.shape[0]) {
    throw std::invalid_argument("masks_from_logits: item out of range or logits not B x C x H x W");
  }
  const std::size_t C = logits.shape[1];
  const Dims2 d{logits.shape[3], logits.shape[2]};
  std::vector<std::string> names;
  std::vector<Mask2D> channels;
  for (std::size_t c = 0; c < C; ++c) {
    names.push_back(C == kOrganCount ? std::string(kOrganNames[c]) : "channel_" + std::to_string(c));
    std::vector<std::uint8_t> px(d.count());
    const float* src = logits.data() + (item * C + c) * d.count();
    for (std::size_t i = 0; i < px.size(); ++i) {
      const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(src[i])));
      px[i] = p > 0.5 ? 1 : 0;
    }
    channels.emplace_back(d, spacing, std::move(px));
  }
  return MaskStack(std::move(names), std::move(channels));
}

MaskStack predict_masks(const NetworkParams& params, const DepthImage& depth) {
  const DepthImage* batch[] = {&depth};
  const auto logits = forward(params, stack_depth(batch));
  return masks_from_logits(logits, 0, depth.spacing());
}

#define ORGANLOC_INSTANTIATE(T)                                                                                     \
  template struct BasicTensor<T>;                                                                                   \
  template struct BasicParams<T>;                                                                                   \
  template std::uint64_t param_digest(const BasicParams<T>&);                                                       \
  template BasicTensor<T> forward(const BasicParams<T>&, const BasicTensor<T>&, ForwardTrace<T>*);                  \
  template BasicParams<T> backward(const BasicParams<T>&, const ForwardTrace<T>&, const BasicTensor<T>&);          \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);              \
  template void conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, BasicTensor<T>*, \
                                BasicTensor<T>&, BasicTensor<T>&);                                                  \
  template BasicTensor<T> max_pool2(const BasicTensor<T>&, std::vector<std::uint32_t>*);                            \
  template BasicTensor<T> upsample2(const BasicTensor<T>&);

ORGANLOC_INSTANTIATE(float)
ORGANLOC_INSTANTIATE(double)
ORGANLOC_INSTANTIATE(long double)

#undef ORGANLOC_INSTANTIATE

}  // namespace organloc::net
