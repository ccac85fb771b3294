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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "organloc/depthsim.hpp"
#include "organloc/net.hpp"
#include "organloc/phantom.hpp"
#include "organloc/train.hpp"

namespace organloc {

struct PhantomSection {
  std::size_t n = 250;
  std::uint64_t master_seed = 1;
  Dims3 dims = phantom::kDefaultDims;
  Spacing3 spacing = phantom::kDefaultSpacing;
};

struct EvalSection {
  /// Leading fraction of the cohort used for training.
  double train_fraction = 0.8;
  /// Trailing fraction held out for evaluation.
  double test_fraction = 0.2;
  std::string report_csv = "report.csv";
  std::string aggregate_json = "aggregate.json";
};

/// Whole-run configuration, read from JSON with sections "phantom",
/// "pipeline", "train" and "eval". Missing keys keep their defaults;
/// unknown keys are rejected.
struct RunConfig {
  PhantomSection phantom;
  depthsim::PipelineConfig pipeline;
  train::TrainConfig train;
  std::vector<std::uint16_t> channels{16, 32, 64};
  EvalSection eval;

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  void validate() const;
  /// Network layout for depth images produced from phantom.dims.
  net::Architecture architecture() const;
  /// FNV-1a of the canonical JSON serialization, as 16 hex digits.
  std::string digest() const;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// train = first floor(train_fraction * n) indices, test = last
/// floor(test_fraction * n). The two ranges are disjoint.
Split split_indices(std::size_t n, const EvalSection& eval);

std::string hex_digest(std::string_view text);

}  // namespace organloc
