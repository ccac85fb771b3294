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

#include "organloc/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

namespace organloc {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const char* section, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw std::invalid_argument(std::string("config section '") + section + "' must be an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw std::invalid_argument(std::string("unknown key '") + k + "' in section '" + section + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

Spacing3 spacing_from_json(const json& j) {
  if (j.is_number()) {
    const float s = j.get<float>();
    return {s, s, s};
  }
  const auto v = j.get<std::vector<float>>();
  if (v.size() != 3) throw std::invalid_argument("spacing_mm must be a number or three numbers");
  return {v[0], v[1], v[2]};
}

}  // namespace

std::string hex_digest(std::string_view text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  reject_unknown(j, "root", {"phantom", "pipeline", "train", "eval"});
  if (j.contains("phantom")) {
    const auto& p = j.at("phantom");
    reject_unknown(p, "phantom", {"n", "master_seed", "dims", "spacing_mm"});
    read(p, "n", c.phantom.n);
    read(p, "master_seed", c.phantom.master_seed);
    if (p.contains("dims")) {
      const auto d = p.at("dims").get<std::vector<std::uint32_t>>();
      if (d.size() != 3) throw std::invalid_argument("phantom.dims must have three entries");
      c.phantom.dims = {d[0], d[1], d[2]};
    }
    if (p.contains("spacing_mm")) c.phantom.spacing = spacing_from_json(p.at("spacing_mm"));
  }
  if (j.contains("pipeline")) {
    const auto& p = j.at("pipeline");
    reject_unknown(p, "pipeline", {"binarize_threshold", "far_suppress_threshold", "binary_opening_radius",
                                   "gray_opening_radius", "binary_element"});
    read(p, "binarize_threshold", c.pipeline.binarize_threshold);
    read(p, "far_suppress_threshold", c.pipeline.far_suppress_threshold);
    read(p, "binary_opening_radius", c.pipeline.binary_opening_radius);
    read(p, "gray_opening_radius", c.pipeline.gray_opening_radius);
    if (p.contains("binary_element")) {
      c.pipeline.binary_element = depthsim::element_from_string(p.at("binary_element").get<std::string>());
    }
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    reject_unknown(t, "train", {"batch_size", "base_lr", "total_steps", "loss_weight_dice", "loss_weight_bce",
                                "dice_epsilon", "adam_beta1", "adam_beta2", "adam_eps", "rng_seed", "eta_min",
                                "channels"});
    read(t, "batch_size", c.train.batch_size);
    read(t, "base_lr", c.train.base_lr);
    read(t, "total_steps", c.train.total_steps);
    read(t, "loss_weight_dice", c.train.loss_weight_dice);
    read(t, "loss_weight_bce", c.train.loss_weight_bce);
    read(t, "dice_epsilon", c.train.dice_epsilon);
    read(t, "adam_beta1", c.train.adam_beta1);
    read(t, "adam_beta2", c.train.adam_beta2);
    read(t, "adam_eps", c.train.adam_eps);
    read(t, "rng_seed", c.train.rng_seed);
    read(t, "eta_min", c.train.eta_min);
    read(t, "channels", c.channels);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    reject_unknown(e, "eval", {"train_fraction", "test_fraction", "report_csv", "aggregate_json"});
    read(e, "train_fraction", c.eval.train_fraction);
    read(e, "test_fraction", c.eval.test_fraction);
    read(e, "report_csv", c.eval.report_csv);
    read(e, "aggregate_json", c.eval.aggregate_json);
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return from_json(j);
}

json RunConfig::to_json() const {
  return {
      {"phantom",
       {{"n", phantom.n},
        {"master_seed", phantom.master_seed},
        {"dims", {phantom.dims.x, phantom.dims.y, phantom.dims.z}},
        {"spacing_mm", {phantom.spacing.x, phantom.spacing.y, phantom.spacing.z}}}},
      {"pipeline",
       {{"binarize_threshold", pipeline.binarize_threshold},
        {"far_suppress_threshold", pipeline.far_suppress_threshold},
        {"binary_opening_radius", pipeline.binary_opening_radius},
        {"gray_opening_radius", pipeline.gray_opening_radius},
        {"binary_element", depthsim::to_string(pipeline.binary_element)}}},
      {"train",
       {{"batch_size", train.batch_size},
        {"base_lr", train.base_lr},
        {"total_steps", train.total_steps},
        {"loss_weight_dice", train.loss_weight_dice},
        {"loss_weight_bce", train.loss_weight_bce},
        {"dice_epsilon", train.dice_epsilon},
        {"adam_beta1", train.adam_beta1},
        {"adam_beta2", train.adam_beta2},
        {"adam_eps", train.adam_eps},
        {"rng_seed", train.rng_seed},
        {"eta_min", train.eta_min},
        {"channels", channels}}},
      {"eval",
       {{"train_fraction", eval.train_fraction},
        {"test_fraction", eval.test_fraction},
        {"report_csv", eval.report_csv},
        {"aggregate_json", eval.aggregate_json}}},
  };
}

void RunConfig::validate() const {
  if (phantom.n < 1) throw std::invalid_argument("phantom.n must be >= 1");
  organloc::validate(phantom.dims);
  organloc::validate(phantom.spacing);
  pipeline.validate();
  train.validate();
  architecture().validate();
  const double a = eval.train_fraction, b = eval.test_fraction;
  if (!(a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0) || a + b > 1.0 + 1e-12) {
    throw std::invalid_argument("split fractions must lie in (0,1) and sum to at most 1");
  }
}

net::Architecture RunConfig::architecture() const {
  net::Architecture a;
  a.channels = channels;
  a.input_w = phantom.dims.x;
  a.input_h = phantom.dims.z;
  a.n_out = static_cast<std::uint8_t>(kOrganCount);
  return a;
}

std::string RunConfig::digest() const { return hex_digest(to_json().dump()); }

Split split_indices(std::size_t n, const EvalSection& eval) {
  const auto n_train = static_cast<std::size_t>(std::floor(eval.train_fraction * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(std::floor(eval.test_fraction * static_cast<double>(n)));
  Split s;
  for (std::size_t i = 0; i < n_train; ++i) s.train.push_back(i);
  for (std::size_t i = n - n_test; i < n; ++i) s.test.push_back(i);
  return s;
}

}  // namespace organloc
