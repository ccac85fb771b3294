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

#include "organloc/workflow.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "organloc/phantom.hpp"

namespace organloc::workflow {

std::vector<train::Sample> simulate_cohort(std::size_t n, std::uint64_t master_seed, Dims3 dims, Spacing3 spacing,
                                           const depthsim::PipelineConfig& cfg, std::size_t first) {
  std::vector<train::Sample> out;
  out.reserve(n);
  for (std::size_t i = first; i < first + n; ++i) {
    const auto params = phantom::sample_params(phantom::case_seed(master_seed, i));
    const auto pc = phantom::build_phantom(params, dims, spacing, {}, phantom::case_id_for(i));
    auto sim = depthsim::simulate_case(pc, cfg);
    out.push_back({pc.case_id, std::move(sim.depth), std::move(sim.masks)});
  }
  return out;
}

DepthSimReport simulate_directory(const std::filesystem::path& manifest, const std::filesystem::path& out_dir,
                                  const depthsim::PipelineConfig& cfg) {
  cfg.validate();
  const auto rows = phantom::read_manifest(manifest);
  const auto in_dir = manifest.parent_path();
  std::filesystem::create_directories(out_dir);
  DepthSimReport report;
  for (const auto& row : rows) {
    try {
      const auto scan = read_volume(phantom::volume_path(in_dir, row.case_id));
      const auto labels = read_label_volume(phantom::labels_path(in_dir, row.case_id));
      if (labels.dims() != scan.dims()) throw std::invalid_argument("label map and volume differ in size");
      const auto depth = depthsim::simulate_depth(scan, cfg);
      const auto organs = phantom::split_label_map(labels);
      const auto masks = depthsim::project_masks(organs);
      train::DatasetEntry e{row.case_id, row.case_id + ".ddep", row.case_id + ".dmsk"};
      write_depth(depth, out_dir / e.depth_file);
      write_maskstack(masks, out_dir / e.mask_file);
      report.written.push_back(std::move(e));
    } catch (const std::exception& ex) {
      report.failures.push_back({row.case_id, ex.what()});
    }
  }
  train::write_dataset_index(report.written, out_dir / train::kDatasetIndex);
  return report;
}

std::vector<train::Sample> select(std::span<const train::Sample> data, std::span<const std::size_t> indices) {
  std::vector<train::Sample> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(data[i]);
  return out;
}

std::vector<MaskStack> predict_all(const net::NetworkParams& params, std::span<const train::Sample> data) {
  std::vector<MaskStack> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(net::predict_masks(params, s.depth));
  return out;
}

eval::Evaluation evaluate_predictions(std::span<const train::Sample> data, std::span<const MaskStack> preds) {
  std::vector<std::string> ids;
  std::vector<MaskStack> gts;
  for (const auto& s : data) {
    ids.push_back(s.case_id);
    gts.push_back(s.masks);
  }
  return eval::evaluate_cases(ids, preds, gts);
}

eval::Evaluation evaluate_model(const net::NetworkParams& params, std::span<const train::Sample> data) {
  const auto preds = predict_all(params, data);
  return evaluate_predictions(data, preds);
}

MaskStack mean_mask_baseline(std::span<const train::Sample> data) {
  if (data.empty()) throw std::invalid_argument("baseline needs at least one training case");
  const auto& ref = data.front().masks;
  std::vector<std::vector<std::uint32_t>> counts(ref.size(), std::vector<std::uint32_t>(ref.dims().w * ref.dims().h));
  for (const auto& s : data) {
    if (s.masks.dims() != ref.dims()) throw std::invalid_argument("baseline cases differ in size");
    for (std::size_t c = 0; c < ref.size(); ++c) {
      const auto v = s.masks.channel(c).values();
      for (std::size_t i = 0; i < v.size(); ++i) counts[c][i] += v[i];
    }
  }
  std::vector<Mask2D> channels;
  for (std::size_t c = 0; c < ref.size(); ++c) {
    std::vector<std::uint8_t> bits(counts[c].size());
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = 2 * counts[c][i] >= data.size() ? 1 : 0;
    channels.emplace_back(ref.dims(), ref.spacing(), std::move(bits));
  }
  return MaskStack(ref.names(), std::move(channels));
}

std::vector<double> case_mean_dice(const eval::Evaluation& ev) {
  std::vector<double> out;
  for (const auto& c : ev.cases) out.push_back(c.mean_dice());
  return out;
}

ScalingStudy run_scaling(std::span<const train::Sample> train_pool, std::span<const train::Sample> test,
                         std::span<const std::size_t> sizes, const net::Architecture& arch,
                         const train::TrainConfig& cfg, const StageFn& on_stage,
                         const train::ProgressFn& progress) {
  if (sizes.empty()) throw std::invalid_argument("scaling study needs at least one size");
  ScalingStudy study;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    const std::size_t n = sizes[k];
    if (n > train_pool.size()) {
      throw std::invalid_argument("training size " + std::to_string(n) + " exceeds the " +
                                  std::to_string(train_pool.size()) + " available cases");
    }
    if (k > 0 && n <= sizes[k - 1]) throw std::invalid_argument("training sizes must increase");
    if (on_stage) on_stage(n);
    const auto result = train::train_loop(train_pool.first(n), arch, cfg, progress);
    ScalingPoint p;
    p.n_train = n;
    p.evaluation = evaluate_model(result.params, test);
    p.case_dice = case_mean_dice(p.evaluation);
    study.points.push_back(std::move(p));
  }
  for (std::size_t k = 1; k < study.points.size(); ++k) {
    const auto& a = study.points[k - 1];
    const auto& b = study.points[k];
    study.comparisons.push_back({a.n_train, b.n_train, metrics::wilcoxon_signed_rank(b.case_dice, a.case_dice)});
  }
  return study;
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path, const char* header) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << header << '\n';
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

void write_scaling_csv(const ScalingStudy& study, const std::filesystem::path& path) {
  auto out = open_csv(path, kScalingHeader);
  for (const auto& p : study.points) {
    const auto& r = p.evaluation.table.pooled;
    out << p.n_train << ',' << fmt(r.dice_mean) << ',' << fmt(r.dice_std) << ',' << fmt(r.assd_mean_mm) << ','
        << fmt(r.assd_std_mm) << ',' << fmt(p.evaluation.table.doe_p95_organ_mean_mm) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_comparison_csv(const ScalingStudy& study, const std::filesystem::path& path) {
  auto out = open_csv(path, kComparisonHeader);
  for (const auto& c : study.comparisons) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", c.test.p_value);
    out << c.n_a << ',' << c.n_b << ',' << c.test.n << ',' << fmt(c.test.w_plus) << ',' << fmt(c.test.w_minus)
        << ',' << fmt(c.test.statistic) << ',' << buf << ',' << (c.test.exact ? 1 : 0) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace organloc::workflow
