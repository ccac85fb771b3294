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
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "organloc/net.hpp"
#include "organloc/voldata.hpp"

namespace organloc::train {

struct TrainConfig {
  std::size_t batch_size = 8;
  double base_lr = 0.002;
  std::size_t total_steps = 1500;
  double loss_weight_dice = 0.5;
  double loss_weight_bce = 0.5;
  double dice_epsilon = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t rng_seed = 0;
  double eta_min = 0.0;

  /// Batch 16, everything else as the defaults.
  static TrainConfig reference_defaults();

  void validate() const;
  /// Hex digest of every field, for provenance records.
  std::string digest() const;
};

// ---- losses ---------------------------------------------------------------
// Tensors are grouped into planes over their last two dims; for B x C x H x W
// that is one plane per (item, channel).

/// Mean over planes of 1 - (2 sum(p g) + eps) / (sum p + sum g + eps).
template <class T>
double dice_loss(const net::BasicTensor<T>& probs, const net::BasicTensor<T>& targets, double epsilon);

/// Mean binary cross-entropy of sigmoid(logits), evaluated as
/// max(x,0) - x g + log(1 + exp(-|x|)).
template <class T>
double bce_with_logits(const net::BasicTensor<T>& logits, const net::BasicTensor<T>& targets);

template <class T>
net::BasicTensor<T> sigmoid(const net::BasicTensor<T>& logits);

struct LossValue {
  double total = 0.0;
  double dice = 0.0;
  double bce = 0.0;
};

/// w_dice * dice_loss(sigmoid(logits)) + w_bce * bce_with_logits(logits);
/// writes d(total)/d(logits) into `grad` when non-null.
template <class T>
LossValue combined_loss(const net::BasicTensor<T>& logits, const net::BasicTensor<T>& targets,
                        const TrainConfig& cfg, net::BasicTensor<std::type_identity_t<T>>* grad = nullptr);

// ---- optimization ---------------------------------------------------------

/// eta_min + (base_lr - eta_min) * (1 + cos(pi * step / total_steps)) / 2.
double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr, double eta_min);

struct OptimizerState {
  std::vector<net::Tensor> m;
  std::vector<net::Tensor> v;
  std::uint64_t step = 0;

  static OptimizerState zeros_like(const net::NetworkParams& params);
  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

/// Bias-corrected Adam update; increments state.step.
void adam_step(net::NetworkParams& params, const net::NetworkParams& grads, OptimizerState& state, double lr,
               const TrainConfig& cfg);

// ---- data -----------------------------------------------------------------

struct Sample {
  std::string case_id;
  DepthImage depth;
  MaskStack masks;
};

/// Index written next to the simulated depth images and masks.
inline constexpr const char* kDatasetIndex = "dataset.csv";
inline constexpr const char* kDatasetHeader = "case_id,depth_file,mask_file";

struct DatasetEntry {
  std::string case_id;
  std::string depth_file;
  std::string mask_file;
};

void write_dataset_index(const std::vector<DatasetEntry>& entries, const std::filesystem::path& path);
std::vector<DatasetEntry> read_dataset_index(const std::filesystem::path& path);
/// Loads every sample listed in dir/dataset.csv, in index order.
std::vector<Sample> load_dataset(const std::filesystem::path& dir);

// ---- training loop --------------------------------------------------------

struct LogRow {
  std::size_t step = 0;
  double lr = 0.0;
  double loss_total = 0.0;
  double loss_dice = 0.0;
  double loss_bce = 0.0;

  friend bool operator==(const LogRow&, const LogRow&) = default;
};

inline constexpr const char* kLogHeader = "step,lr,loss_total,loss_dice,loss_bce";
void write_log(const std::vector<LogRow>& log, const std::filesystem::path& path);

struct TrainResult {
  net::NetworkParams params;
  OptimizerState optimizer;
  std::vector<LogRow> log;
};

using ProgressFn = std::function<void(const LogRow&)>;

/// Runs cfg.total_steps Adam steps on shuffled mini-batches. Each epoch is a
/// fresh permutation of the data; a trailing partial batch is dropped.
/// Throws TrainingDiverged when the loss becomes non-finite.
TrainResult train_loop(std::span<const Sample> data, const net::Architecture& arch, const TrainConfig& cfg,
                       const ProgressFn& progress = {});

// ---- checkpoints ----------------------------------------------------------

struct Checkpoint {
  net::NetworkParams params;
  std::optional<OptimizerState> optimizer;
  std::uint64_t step = 0;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// DCKP layout (little-endian): "DCKP", u8 version=1; architecture block
// (u8 levels, levels x u16 channels, u32 input_w, u32 input_h, u8 n_out);
// u32 n_tensors; per tensor: u16 name length, UTF-8 name, u8 ndim,
// ndim x u32 dims, f32 payload; u8 has_optimizer; if set, the first moments
// then the second moments in the same tensor encoding; u64 step.
Bytes encode_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError(arch_mismatch) when `expected` is given and differs
/// from the stored architecture.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes,
                             const std::optional<net::Architecture>& expected = std::nullopt);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<net::Architecture>& expected = std::nullopt);

}  // namespace organloc::train
