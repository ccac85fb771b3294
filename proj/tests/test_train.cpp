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

#include <cmath>
#include <fstream>

#include "organloc/errors.hpp"
#include "organloc/train.hpp"
#include "support.hpp"

using namespace organloc;
using namespace organloc::train;
using organloc::testing::TempDir;

namespace {

using DTensor = net::BasicTensor<double>;

DTensor filled(std::vector<std::uint32_t> shape, double v) {
  DTensor t(std::move(shape));
  for (auto& x : t.values) x = v;
  return t;
}

DTensor random_tensor(Rng& rng, std::vector<std::uint32_t> shape, double lo, double hi) {
  DTensor t(std::move(shape));
  for (auto& x : t.values) x = rng.uniform(lo, hi);
  return t;
}

DTensor random_binary(Rng& rng, std::vector<std::uint32_t> shape) {
  DTensor t(std::move(shape));
  for (auto& x : t.values) x = rng.uniform() < 0.4 ? 1.0 : 0.0;
  return t;
}

// Square of side 6 at a random position; channel 0 marks the square.
Sample toy_sample(Rng& rng, int id) {
  const Dims2 d{16, 16};
  const auto x0 = static_cast<std::uint32_t>(rng.below(10)), z0 = static_cast<std::uint32_t>(rng.below(10));
  std::vector<float> depth(d.count(), 0.0f);
  std::vector<std::uint8_t> mask(d.count(), 0);
  for (std::uint32_t z = z0; z < z0 + 6; ++z)
    for (std::uint32_t x = x0; x < x0 + 6; ++x) {
      depth[x + 16 * z] = 1.0f;
      mask[x + 16 * z] = 1;
    }
  std::vector<Mask2D> ch;
  ch.emplace_back(d, Spacing2{1.0f, 1.0f}, mask);
  for (std::size_t c = 1; c < kOrganCount; ++c) ch.emplace_back(d, Spacing2{1.0f, 1.0f});
  return {"toy_" + std::to_string(id), DepthImage(d, {1.0f, 1.0f}, depth),
          MaskStack({kOrganNames.begin(), kOrganNames.end()}, std::move(ch))};
}

std::vector<Sample> toy_data(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(toy_sample(rng, static_cast<int>(i)));
  return out;
}

net::Architecture toy_arch() { return {{4, 8}, 16, 16, static_cast<std::uint8_t>(kOrganCount)}; }

TrainConfig toy_config() {
  TrainConfig c;
  c.batch_size = 4;
  c.total_steps = 60;
  c.base_lr = 0.01;
  return c;
}

FormatErrc decode_error(auto&& fn) {
  try {
    fn();
  } catch (const FormatError& e) {
    return e.code();
  }
  FAIL("expected a FormatError");
  return FormatErrc::bad_magic;
}

}  // namespace

TEST_CASE("dice loss limits") {
  CHECK(dice_loss(filled({1, 1, 4, 4}, 1.0), filled({1, 1, 4, 4}, 1.0), 1.0) == doctest::Approx(0.0));
  CHECK(dice_loss(filled({1, 1, 4, 4}, 0.0), filled({1, 1, 4, 4}, 0.0), 1.0) == doctest::Approx(0.0));
  for (std::uint32_t n : {1u, 4u, 9u, 64u}) {
    const double want = 1.0 - 1.0 / (n + 1.0);
    CHECK(dice_loss(filled({1, 1, 1, n}, 1.0), filled({1, 1, 1, n}, 0.0), 1.0) == doctest::Approx(want));
  }
}

TEST_CASE("dice loss averages per-plane values") {
  Rng rng(4);
  const auto p = random_tensor(rng, {2, 3, 4, 5}, 0.0, 1.0);
  const auto g = random_binary(rng, {2, 3, 4, 5});
  double sum = 0.0;
  for (std::size_t plane = 0; plane < 6; ++plane) {
    double pg = 0, ps = 0, gs = 0;
    for (std::size_t i = 0; i < 20; ++i) {
      pg += p.values[plane * 20 + i] * g.values[plane * 20 + i];
      ps += p.values[plane * 20 + i];
      gs += g.values[plane * 20 + i];
    }
    sum += 1.0 - (2.0 * pg + 1.0) / (ps + gs + 1.0);
  }
  CHECK(dice_loss(p, g, 1.0) == doctest::Approx(sum / 6.0).epsilon(1e-12));
}

TEST_CASE("binary cross-entropy on logits is stable") {
  CHECK(bce_with_logits(filled({1, 1, 2, 2}, 0.0), filled({1, 1, 2, 2}, 1.0)) == doctest::Approx(std::log(2.0)));
  const double hi = bce_with_logits(filled({1, 1, 1, 1}, 50.0), filled({1, 1, 1, 1}, 1.0));
  CHECK(std::isfinite(hi));
  CHECK(hi == doctest::Approx(0.0));
  const double lo = bce_with_logits(filled({1, 1, 1, 1}, -50.0), filled({1, 1, 1, 1}, 1.0));
  CHECK(std::isfinite(lo));
  CHECK(lo == doctest::Approx(50.0));
  const net::Tensor big({1, 1, 1, 2}, {1000.0f, -1000.0f});
  const net::Tensor tgt({1, 1, 1, 2}, {0.0f, 1.0f});
  CHECK(bce_with_logits(big, tgt) == doctest::Approx(1000.0));
}

TEST_CASE("combined loss reduces to either term") {
  Rng rng(6);
  const auto x = random_tensor(rng, {2, 11, 4, 4}, -3.0, 3.0);
  const auto g = random_binary(rng, {2, 11, 4, 4});
  TrainConfig c;
  c.loss_weight_dice = 1.0;
  c.loss_weight_bce = 0.0;
  CHECK(combined_loss(x, g, c, nullptr).total == doctest::Approx(dice_loss(sigmoid(x), g, 1.0)));
  c.loss_weight_dice = 0.0;
  c.loss_weight_bce = 1.0;
  CHECK(combined_loss(x, g, c, nullptr).total == doctest::Approx(bce_with_logits(x, g)));
  const auto v = combined_loss(x, g, TrainConfig{}, nullptr);
  CHECK(v.total == doctest::Approx(0.5 * v.dice + 0.5 * v.bce));
  CHECK(v.total >= 0.0);
  CHECK(v.dice >= 0.0);
  CHECK(v.dice <= 1.0);
}

TEST_CASE("combined loss gradient matches finite differences") {
  Rng rng(8);
  const auto x = random_tensor(rng, {1, 11, 8, 8}, -4.0, 4.0);
  const auto g = random_binary(rng, {1, 11, 8, 8});
  const TrainConfig c;
  DTensor grad;
  combined_loss(x, g, c, &grad);
  REQUIRE(grad.shape == x.shape);
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.values.size(); ++i) {
    auto plus = x, minus = x;
    plus.values[i] += h;
    minus.values[i] -= h;
    const double fd = (combined_loss(plus, g, c, nullptr).total - combined_loss(minus, g, c, nullptr).total) / (2 * h);
    worst = std::max(worst, std::abs(fd - grad.values[i]) / std::max({std::abs(fd), std::abs(grad.values[i]), 1e-8}));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("cosine schedule") {
  CHECK(cosine_lr(0, 1500, 0.002, 0.0) == doctest::Approx(0.002));
  CHECK(cosine_lr(1500, 1500, 0.002, 0.0) == doctest::Approx(0.0));
  CHECK(cosine_lr(750, 1500, 0.002, 0.0) == doctest::Approx(0.001));
  CHECK(cosine_lr(50, 100, 0.002, 0.0004) == doctest::Approx(0.0012));
  double prev = 1.0;
  for (std::size_t s = 0; s <= 300; ++s) {
    const double lr = cosine_lr(s, 300, 0.002, 0.0001);
    CHECK(lr <= prev);
    prev = lr;
  }
  CHECK_THROWS_AS(cosine_lr(301, 300, 0.002, 0.0), std::out_of_range);
}

TEST_CASE("first Adam step moves each parameter by the learning rate") {
  const net::Architecture arch{{2}, 4, 4, 1};
  auto p = net::init_params(arch, 1);
  const auto before = p;
  auto g = net::NetworkParams::zeros(arch);
  Rng rng(2);
  for (auto& t : g.tensors)
    for (auto& v : t.values) v = static_cast<float>(rng.uniform(-2.0, 2.0));
  auto st = OptimizerState::zeros_like(p);
  adam_step(p, g, st, 0.002, TrainConfig{});
  CHECK(st.step == 1);
  for (std::size_t t = 0; t < p.tensors.size(); ++t)
    for (std::size_t i = 0; i < p.tensors[t].values.size(); ++i) {
      const double delta = double(p.tensors[t].values[i]) - double(before.tensors[t].values[i]);
      const double sign = g.tensors[t].values[i] > 0 ? 1.0 : -1.0;
      CHECK(delta == doctest::Approx(-0.002 * sign).epsilon(1e-3));
    }
}

TEST_CASE("zero gradients leave parameters unchanged and decay moments") {
  const net::Architecture arch{{2}, 4, 4, 1};
  auto p = net::init_params(arch, 1);
  auto st = OptimizerState::zeros_like(p);
  auto g = net::NetworkParams::zeros(arch);
  for (auto& t : g.tensors)
    for (auto& v : t.values) v = 1.0f;
  adam_step(p, g, st, 0.002, TrainConfig{});
  const auto after_one = p;
  const auto m1 = st.m, v1 = st.v;
  adam_step(p, net::NetworkParams::zeros(arch), st, 0.002, TrainConfig{});
  // Momentum still moves parameters, so check the moments, then a fresh state.
  for (std::size_t t = 0; t < m1.size(); ++t)
    for (std::size_t i = 0; i < m1[t].values.size(); ++i) {
      CHECK(st.m[t].values[i] == doctest::Approx(0.9 * m1[t].values[i]));
      CHECK(st.v[t].values[i] == doctest::Approx(0.999 * v1[t].values[i]));
    }
  auto q = net::init_params(arch, 1);
  const auto q0 = q;
  auto fresh = OptimizerState::zeros_like(q);
  adam_step(q, net::NetworkParams::zeros(arch), fresh, 0.002, TrainConfig{});
  CHECK(q == q0);
  (void)after_one;
}

TEST_CASE("training reduces the loss and is reproducible") {
  const auto data = toy_data(16, 3);
  const auto a = train_loop(data, toy_arch(), toy_config());
  const auto b = train_loop(data, toy_arch(), toy_config());
  REQUIRE(a.log.size() == 60);
  CHECK(a.log.front().step == 0);
  CHECK(a.log.back().step == 59);
  CHECK(a.log.front().lr == doctest::Approx(0.01));
  double first = 0, last = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    first += a.log[i].loss_total;
    last += a.log[a.log.size() - 1 - i].loss_total;
  }
  CHECK(last < first);
  CHECK(a.log == b.log);
  CHECK(encode_checkpoint({a.params, a.optimizer, a.optimizer.step}) ==
        encode_checkpoint({b.params, b.optimizer, b.optimizer.step}));
  auto other = toy_config();
  other.rng_seed = 1;
  CHECK_FALSE(train_loop(data, toy_arch(), other).params == a.params);
}

TEST_CASE("training preconditions") {
  const auto data = toy_data(3, 1);
  CHECK_THROWS_AS(train_loop(data, toy_arch(), toy_config()), std::invalid_argument);
  auto c = toy_config();
  c.batch_size = 0;
  CHECK_THROWS_AS(train_loop(toy_data(8, 1), toy_arch(), c), std::invalid_argument);
  auto arch = toy_arch();
  arch.input_w = 32;
  CHECK_THROWS_AS(train_loop(toy_data(8, 1), arch, toy_config()), std::invalid_argument);
}

TEST_CASE("a non-finite loss stops training with the step number") {
  auto c = toy_config();
  c.base_lr = 1e30;
  try {
    train_loop(toy_data(8, 2), toy_arch(), c);
    FAIL("training should have diverged");
  } catch (const TrainingDiverged& e) {
    CHECK(e.step() >= 1);
    CHECK(e.step() < 60);
    CHECK(std::string(e.what()).find("step " + std::to_string(e.step())) != std::string::npos);
  }
}

TEST_CASE("checkpoint round-trip and error reporting") {
  TempDir dir("ckpt");
  const auto arch = toy_arch();
  auto c = toy_config();
  c.total_steps = 3;
  const auto r = train_loop(toy_data(8, 5), arch, c);
  const Checkpoint full{r.params, r.optimizer, r.optimizer.step};
  save_checkpoint(full, dir / "a.dckp");
  const auto back = load_checkpoint(dir / "a.dckp", arch);
  CHECK(back == full);
  CHECK(back.step == 3);
  save_checkpoint(back, dir / "b.dckp");
  CHECK(read_file(dir / "a.dckp") == read_file(dir / "b.dckp"));

  const Checkpoint bare{r.params, std::nullopt, 3};
  const auto bare_bytes = encode_checkpoint(bare);
  CHECK(decode_checkpoint(bare_bytes) == bare);
  CHECK(bare_bytes.size() < encode_checkpoint(full).size());

  auto other = arch;
  other.channels = {4, 16};
  CHECK(decode_error([&] { (void)load_checkpoint(dir / "a.dckp", other); }) == FormatErrc::arch_mismatch);
  auto bytes = read_file(dir / "a.dckp");
  const Bytes cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(bytes.size() / 2));
  CHECK(decode_error([&] { (void)decode_checkpoint(cut); }) == FormatErrc::truncated);
  bytes.push_back(0);
  CHECK(decode_error([&] { (void)decode_checkpoint(bytes); }) == FormatErrc::size_mismatch);
  bytes.pop_back();
  bytes[0] = 'X';
  CHECK(decode_error([&] { (void)decode_checkpoint(bytes); }) == FormatErrc::bad_magic);
}

TEST_CASE("checkpoint header layout") {
  const net::Architecture arch{{2, 4}, 8, 8, 3};
  const auto bytes = encode_checkpoint({net::init_params(arch, 0), std::nullopt, 7});
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "DCKP");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 2);  // levels
  CHECK(bytes[6] == 2);  // channels[0], u16 LE
  CHECK(bytes[7] == 0);
  CHECK(bytes[8] == 4);
  CHECK(bytes[10] == 8);  // input_w
  CHECK(bytes[14] == 8);  // input_h
  CHECK(bytes[18] == 3);  // n_out
  CHECK(bytes[bytes.size() - 8] == 7);
}

TEST_CASE("dataset index round-trip and loading") {
  TempDir dir("dataset");
  const auto data = toy_data(3, 9);
  std::vector<DatasetEntry> entries;
  for (const auto& s : data) {
    entries.push_back({s.case_id, s.case_id + ".ddep", s.case_id + ".dmsk"});
    write_depth(s.depth, dir / entries.back().depth_file);
    write_maskstack(s.masks, dir / entries.back().mask_file);
  }
  write_dataset_index(entries, dir / kDatasetIndex);
  const auto back = read_dataset_index(dir / kDatasetIndex);
  REQUIRE(back.size() == 3);
  CHECK(back[2].mask_file == "toy_2.dmsk");
  const auto loaded = load_dataset(dir.path());
  REQUIRE(loaded.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(loaded[i].case_id == data[i].case_id);
    CHECK(loaded[i].depth == data[i].depth);
    CHECK(loaded[i].masks == data[i].masks);
  }
  std::ofstream(dir / "bad.csv") << "wrong,header\n";
  CHECK_THROWS_AS(read_dataset_index(dir / "bad.csv"), std::runtime_error);
}

TEST_CASE("training log file") {
  TempDir dir("log");
  write_log({{0, 0.002, 1.5, 0.9, 0.6}, {1, 0.001, 1.25, 0.75, 0.5}}, dir / "log.csv");
  std::ifstream in(dir / "log.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == kLogHeader);
  CHECK(row == "0,0.002,1.5,0.9,0.6");
}

TEST_CASE("training configuration") {
  TrainConfig c;
  CHECK(c.batch_size == 8);
  CHECK(c.total_steps == 1500);
  CHECK(c.base_lr == 0.002);
  CHECK(TrainConfig::reference_defaults().batch_size == 16);
  CHECK(TrainConfig::reference_defaults().base_lr == 0.002);
  CHECK(c.digest() == TrainConfig{}.digest());
  auto d = c;
  d.adam_eps = 1e-7;
  CHECK(c.digest() != d.digest());
  d = c;
  d.loss_weight_dice = 0.0;
  d.loss_weight_bce = 0.0;
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
  d = c;
  d.base_lr = 0.0;
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
}
