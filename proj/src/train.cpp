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

#include "organloc/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "binio.hpp"
#include "organloc/errors.hpp"
#include "organloc/rng.hpp"

namespace organloc::train {

using net::BasicTensor;

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

template <class T>
std::size_t plane_size(const BasicTensor<T>& t) {
  if (t.shape.size() < 2) throw std::invalid_argument("loss tensors need at least two dims");
  return std::size_t{t.shape[t.shape.size() - 1]} * t.shape[t.shape.size() - 2];
}

template <class T>
void check_pair(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape != b.shape) throw std::invalid_argument("loss inputs differ in shape");
  if (a.numel() == 0) throw std::invalid_argument("loss inputs are empty");
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double bce_term(double x, double g) { return std::max(x, 0.0) - x * g + std::log1p(std::exp(-std::abs(x))); }

void write_tensor(binio::ByteWriter& w, const std::string& name, const net::Tensor& t) {
  w.str16(name);
  w.u8(static_cast<std::uint8_t>(t.shape.size()));
  for (auto d : t.shape) w.u32(d);
  w.f32_array(t.values);
}

net::Tensor read_tensor(binio::ByteReader& r, const std::string& expected_name,
                        const std::vector<std::uint32_t>& expected_shape) {
  const std::string name = r.str16();
  const std::uint8_t ndim = r.u8();
  std::vector<std::uint32_t> shape(ndim);
  for (auto& d : shape) d = r.u32();
  if (name != expected_name || shape != expected_shape) {
    throw FormatError(FormatErrc::arch_mismatch,
                      "tensor '" + name + "' does not match expected '" + expected_name + "'");
  }
  return net::Tensor(shape, r.f32_array(net::shape_numel(shape)));
}

std::string format_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(f);
  return out;
}

}  // namespace

TrainConfig TrainConfig::reference_defaults() {
  TrainConfig c;
  c.batch_size = 16;
  return c;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(base_lr > 0.0)) throw std::invalid_argument("base_lr must be positive");
  if (total_steps < 1) throw std::invalid_argument("total_steps must be >= 1");
  if (loss_weight_dice < 0.0 || loss_weight_bce < 0.0 || !(loss_weight_dice + loss_weight_bce > 0.0)) {
    throw std::invalid_argument("loss weights must be >= 0 with a positive sum");
  }
  if (!(dice_epsilon >= 0.0)) throw std::invalid_argument("dice_epsilon must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0,1)");
  }
  if (!(adam_eps > 0.0)) throw std::invalid_argument("adam_eps must be positive");
  if (!(eta_min >= 0.0)) throw std::invalid_argument("eta_min must be >= 0");
}

std::string TrainConfig::digest() const {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%zu|%.17g|%zu|%.17g|%.17g|%.17g|%.17g|%.17g|%.17g|%llu|%.17g", batch_size, base_lr,
                total_steps, loss_weight_dice, loss_weight_bce, dice_epsilon, adam_beta1, adam_beta2, adam_eps,
                static_cast<unsigned long long>(rng_seed), eta_min);
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a(buf)));
  return hex;
}

template <class T>
net::BasicTensor<T> sigmoid(const net::BasicTensor<T>& logits) {
  net::BasicTensor<T> out = logits;
  for (auto& v : out.values) v = static_cast<T>(stable_sigmoid(static_cast<double>(v)));
  return out;
}

template <class T>
double dice_loss(const BasicTensor<T>& probs, const BasicTensor<T>& targets, double epsilon) {
  check_pair(probs, targets);
  const std::size_t plane = plane_size(probs);
  const std::size_t planes = probs.numel() / plane;
  double total = 0.0;
  for (std::size_t p = 0; p < planes; ++p) {
    double inter = 0.0, sp = 0.0, sg = 0.0;
    for (std::size_t i = p * plane; i < (p + 1) * plane; ++i) {
      const double pr = probs.values[i], g = targets.values[i];
      inter += pr * g;
      sp += pr;
      sg += g;
    }
    total += 1.0 - (2.0 * inter + epsilon) / (sp + sg + epsilon);
  }
  return total / static_cast<double>(planes);
}

template <class T>
double bce_with_logits(const BasicTensor<T>& logits, const BasicTensor<T>& targets) {
  check_pair(logits, targets);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.numel(); ++i) total += bce_term(logits.values[i], targets.values[i]);
  return total / static_cast<double>(logits.numel());
}

template <class T>
LossValue combined_loss(const BasicTensor<T>& logits, const BasicTensor<T>& targets, const TrainConfig& cfg,
                        BasicTensor<std::type_identity_t<T>>* grad) {
  check_pair(logits, targets);
  const std::size_t n = logits.numel();
  const std::size_t plane = plane_size(logits);
  const std::size_t planes = n / plane;
  const double eps = cfg.dice_epsilon;
  const double wd = cfg.loss_weight_dice, wb = cfg.loss_weight_bce;

  std::vector<double> p(n);
  double bce = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = logits.values[i];
    p[i] = stable_sigmoid(x);
    bce += bce_term(x, targets.values[i]);
  }
  bce /= static_cast<double>(n);

  if (grad) *grad = BasicTensor<T>(logits.shape);
  double dice = 0.0;
  for (std::size_t q = 0; q < planes; ++q) {
    const std::size_t lo = q * plane, hi = lo + plane;
    double inter = 0.0, sp = 0.0, sg = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const double g = targets.values[i];
      inter += p[i] * g;
      sp += p[i];
      sg += g;
    }
    const double num = 2.0 * inter + eps, den = sp + sg + eps;
    dice += 1.0 - num / den;
    if (grad) {
      const double scale_dice = wd / static_cast<double>(planes) / (den * den);
      const double scale_bce = wb / static_cast<double>(n);
      for (std::size_t i = lo; i < hi; ++i) {
        const double g = targets.values[i];
        // d(1 - num/den)/dp = -(2 g den - num) / den^2
        const double d_dice_dp = -(2.0 * g * den - num) * scale_dice;
        const double d_dice_dx = d_dice_dp * p[i] * (1.0 - p[i]);
        const double d_bce_dx = (p[i] - g) * scale_bce;
        grad->values[i] = static_cast<T>(d_dice_dx + d_bce_dx);
      }
    }
  }
  dice /= static_cast<double>(planes);
  return {wd * dice + wb * bce, dice, bce};
}

double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr, double eta_min) {
  if (total_steps == 0 || step > total_steps) {
    throw std::out_of_range("step " + std::to_string(step) + " outside [0, " + std::to_string(total_steps) + "]");
  }
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return eta_min + 0.5 * (base_lr - eta_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

OptimizerState OptimizerState::zeros_like(const net::NetworkParams& params) {
  OptimizerState s;
  for (const auto& t : params.tensors) {
    s.m.emplace_back(t.shape);
    s.v.emplace_back(t.shape);
  }
  return s;
}

void adam_step(net::NetworkParams& params, const net::NetworkParams& grads, OptimizerState& state, double lr,
               const TrainConfig& cfg) {
  const std::size_t n = params.tensors.size();
  if (grads.tensors.size() != n || state.m.size() != n || state.v.size() != n) {
    throw std::invalid_argument("adam_step: parameter, gradient and moment lists differ in length");
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (grads.tensors[k].shape != params.tensors[k].shape || state.m[k].shape != params.tensors[k].shape ||
        state.v[k].shape != params.tensors[k].shape) {
      throw std::invalid_argument("adam_step: shape mismatch for " + params.names[k]);
    }
  }
  state.step += 1;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < n; ++k) {
    auto& w = params.tensors[k].values;
    const auto& g = grads.tensors[k].values;
    auto& m = state.m[k].values;
    auto& v = state.v[k].values;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double update = lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.adam_eps);
      w[i] = static_cast<float>(w[i] - update);
    }
  }
}

void write_dataset_index(const std::vector<DatasetEntry>& entries, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kDatasetHeader << '\n';
  for (const auto& e : entries) out << e.case_id << ',' << e.depth_file << ',' << e.mask_file << '\n';
  if (!out) throw std::runtime_error("short write to " + path.string());
}

std::vector<DatasetEntry> read_dataset_index(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kDatasetHeader) {
    throw std::runtime_error(path.string() + ": unexpected dataset index header");
  }
  std::vector<DatasetEntry> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv(line);
    if (f.size() != 3) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    out.push_back({f[0], f[1], f[2]});
  }
  return out;
}

std::vector<Sample> load_dataset(const std::filesystem::path& dir) {
  std::vector<Sample> out;
  for (const auto& e : read_dataset_index(dir / kDatasetIndex)) {
    auto depth = read_depth(dir / e.depth_file);
    auto masks = read_maskstack(dir / e.mask_file);
    if (!masks.is_canonical() || masks.dims() != depth.dims()) {
      throw std::runtime_error(e.case_id + ": mask stack does not match depth image or organ order");
    }
    out.push_back({e.case_id, std::move(depth), std::move(masks)});
  }
  return out;
}

void write_log(const std::vector<LogRow>& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kLogHeader << '\n';
  for (const auto& r : log) {
    out << r.step << ',' << format_g(r.lr) << ',' << format_g(r.loss_total) << ',' << format_g(r.loss_dice) << ','
        << format_g(r.loss_bce) << '\n';
  }
  if (!out) throw std::runtime_error("short write to " + path.string());
}

TrainResult train_loop(std::span<const Sample> data, const net::Architecture& arch, const TrainConfig& cfg,
                       const ProgressFn& progress) {
  cfg.validate();
  arch.validate();
  if (data.size() < cfg.batch_size) {
    throw std::invalid_argument("dataset has " + std::to_string(data.size()) + " cases, fewer than batch_size " +
                                std::to_string(cfg.batch_size));
  }
  for (const auto& s : data) {
    if (s.depth.dims() != Dims2{arch.input_w, arch.input_h} || s.masks.dims() != s.depth.dims() ||
        s.masks.size() != arch.n_out) {
      throw std::invalid_argument(s.case_id + ": sample geometry does not match architecture " + describe(arch));
    }
  }

  TrainResult res{net::init_params(arch, mix_seed(cfg.rng_seed, 0)), {}, {}};
  res.optimizer = OptimizerState::zeros_like(res.params);
  res.log.reserve(cfg.total_steps);

  Rng shuffle(mix_seed(cfg.rng_seed, 1));
  std::vector<std::size_t> order(data.size());
  std::size_t cursor = order.size();  // forces a shuffle on the first step

  std::vector<const DepthImage*> depth_batch(cfg.batch_size);
  std::vector<const MaskStack*> mask_batch(cfg.batch_size);
  net::ForwardTrace<float> trace;
  net::Tensor grad;

  for (std::size_t step = 0; step < cfg.total_steps; ++step) {
    if (cursor + cfg.batch_size > order.size()) {
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[shuffle.below(i + 1)]);
      cursor = 0;
    }
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      depth_batch[b] = &data[order[cursor + b]].depth;
      mask_batch[b] = &data[order[cursor + b]].masks;
    }
    cursor += cfg.batch_size;

    const double lr = cosine_lr(step, cfg.total_steps, cfg.base_lr, cfg.eta_min);
    const auto input = net::stack_depth(depth_batch);
    const auto targets = net::stack_masks(mask_batch);
    const auto logits = net::forward(res.params, input, &trace);
    const auto loss = combined_loss(logits, targets, cfg, &grad);
    if (!std::isfinite(loss.total)) throw TrainingDiverged(step, "loss is not finite");
    const auto grads = net::backward(res.params, trace, grad);
    adam_step(res.params, grads, res.optimizer, lr, cfg);

    res.log.push_back({step, lr, loss.total, loss.dice, loss.bce});
    if (progress) progress(res.log.back());
  }
  return res;
}

Bytes encode_checkpoint(const Checkpoint& ckpt) {
  const auto& arch = ckpt.params.arch;
  binio::ByteWriter w;
  w.magic("DCKP");
  w.u8(kFormatVersion);
  w.u8(static_cast<std::uint8_t>(arch.levels()));
  for (auto c : arch.channels) w.u16(c);
  w.u32(arch.input_w);
  w.u32(arch.input_h);
  w.u8(arch.n_out);
  const auto& p = ckpt.params;
  w.u32(static_cast<std::uint32_t>(p.tensors.size()));
  for (std::size_t i = 0; i < p.tensors.size(); ++i) write_tensor(w, p.names[i], p.tensors[i]);
  w.u8(ckpt.optimizer ? 1 : 0);
  if (ckpt.optimizer) {
    for (std::size_t i = 0; i < p.tensors.size(); ++i) write_tensor(w, "adam.m/" + p.names[i], ckpt.optimizer->m[i]);
    for (std::size_t i = 0; i < p.tensors.size(); ++i) write_tensor(w, "adam.v/" + p.names[i], ckpt.optimizer->v[i]);
  }
  w.u64(ckpt.step);
  return std::move(w).take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::optional<net::Architecture>& expected) {
  binio::ByteReader r(bytes);
  r.expect_header("DCKP", kFormatVersion);
  net::Architecture arch;
  const std::uint8_t levels = r.u8();
  arch.channels.resize(levels);
  for (auto& c : arch.channels) c = r.u16();
  arch.input_w = r.u32();
  arch.input_h = r.u32();
  arch.n_out = r.u8();
  try {
    arch.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(FormatErrc::invalid_value, e.what());
  }
  if (expected && *expected != arch) {
    throw FormatError(FormatErrc::arch_mismatch,
                      "checkpoint holds " + describe(arch) + ", expected " + describe(*expected));
  }
  const auto layout = net::parameter_layout(arch);
  const std::uint32_t n = r.u32();
  if (n != layout.size()) {
    throw FormatError(FormatErrc::arch_mismatch, "checkpoint lists " + std::to_string(n) + " tensors, architecture has " +
                                                     std::to_string(layout.size()));
  }
  Checkpoint ck;
  ck.params.arch = arch;
  for (const auto& entry : layout) {
    ck.params.names.push_back(entry.name);
    ck.params.tensors.push_back(read_tensor(r, entry.name, entry.shape));
  }
  const std::uint8_t has_opt = r.u8();
  if (has_opt > 1) throw FormatError(FormatErrc::invalid_value, "has_optimizer flag must be 0 or 1");
  if (has_opt) {
    OptimizerState s;
    for (const auto& entry : layout) s.m.push_back(read_tensor(r, "adam.m/" + entry.name, entry.shape));
    for (const auto& entry : layout) s.v.push_back(read_tensor(r, "adam.v/" + entry.name, entry.shape));
    ck.optimizer = std::move(s);
  }
  ck.step = r.u64();
  if (ck.optimizer) ck.optimizer->step = ck.step;
  r.expect_end("checkpoint");
  return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<net::Architecture>& expected) {
  return decode_checkpoint(read_file(path), expected);
}

template double dice_loss(const BasicTensor<float>&, const BasicTensor<float>&, double);
template double dice_loss(const BasicTensor<double>&, const BasicTensor<double>&, double);
template double bce_with_logits(const BasicTensor<float>&, const BasicTensor<float>&);
template double bce_with_logits(const BasicTensor<double>&, const BasicTensor<double>&);
template BasicTensor<float> sigmoid(const BasicTensor<float>&);
template BasicTensor<double> sigmoid(const BasicTensor<double>&);
template LossValue combined_loss(const BasicTensor<float>&, const BasicTensor<float>&, const TrainConfig&,
                                 BasicTensor<float>*);
template LossValue combined_loss(const BasicTensor<double>&, const BasicTensor<double>&, const TrainConfig&,
                                 BasicTensor<double>*);

}  // namespace organloc::train
