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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "organloc/depthsim.hpp"
#include "organloc/evaluation.hpp"
#include "organloc/metrics.hpp"
#include "organloc/net.hpp"
#include "organloc/train.hpp"

namespace organloc::workflow {

/// Builds cases [first, first + n) of the cohort defined by master_seed and
/// runs the depth pipeline on each, without touching the disk.
std::vector<train::Sample> simulate_cohort(std::size_t n, std::uint64_t master_seed, Dims3 dims, Spacing3 spacing,
                                           const depthsim::PipelineConfig& cfg, std::size_t first = 0);

struct CaseFailure {
  std::string case_id;
  std::string message;
};

struct DepthSimReport {
  std::vector<train::DatasetEntry> written;
  std::vector<CaseFailure> failures;
};

/// Reads every case listed in a phantom manifest, writes <id>.ddep and
/// <id>.dmsk plus dataset.csv into out_dir. A failing case is recorded and
/// the remaining cases are still processed.
DepthSimReport simulate_directory(const std::filesystem::path& manifest, const std::filesystem::path& out_dir,
                                  const depthsim::PipelineConfig& cfg);

std::vector<train::Sample> select(std::span<const train::Sample> data, std::span<const std::size_t> indices);

std::vector<MaskStack> predict_all(const net::NetworkParams& params, std::span<const train::Sample> data);

eval::Evaluation evaluate_predictions(std::span<const train::Sample> data, std::span<const MaskStack> preds);
eval::Evaluation evaluate_model(const net::NetworkParams& params, std::span<const train::Sample> data);

/// Constant prediction: per organ, pixels covered in at least half of the
/// training masks.
MaskStack mean_mask_baseline(std::span<const train::Sample> data);

/// Per-case mean Dice in case order.
std::vector<double> case_mean_dice(const eval::Evaluation& ev);

struct ScalingPoint {
  std::size_t n_train = 0;
  eval::Evaluation evaluation;
  std::vector<double> case_dice;
};

struct ScalingComparison {
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  metrics::WilcoxonResult test;
};

struct ScalingStudy {
  std::vector<ScalingPoint> points;
  std::vector<ScalingComparison> comparisons;  // consecutive sizes
};

using StageFn = std::function<void(std::size_t n_train)>;

/// Trains one model per size on the leading n cases of train_pool with the
/// same configuration and evaluates each on `test`.
ScalingStudy run_scaling(std::span<const train::Sample> train_pool, std::span<const train::Sample> test,
                         std::span<const std::size_t> sizes, const net::Architecture& arch,
                         const train::TrainConfig& cfg, const StageFn& on_stage = {},
                         const train::ProgressFn& progress = {});

inline constexpr const char* kScalingHeader = "n_train,dice_mean,dice_std,assd_mean,assd_std,doe_p95";
inline constexpr const char* kComparisonHeader = "n_a,n_b,n_pairs,w_plus,w_minus,statistic,p_value,exact";

void write_scaling_csv(const ScalingStudy& study, const std::filesystem::path& path);
void write_comparison_csv(const ScalingStudy& study, const std::filesystem::path& path);

}  // namespace organloc::workflow
