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

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "organloc/config.hpp"
#include "organloc/errors.hpp"
#include "organloc/evaluation.hpp"
#include "organloc/phantom.hpp"
#include "organloc/train.hpp"
#include "organloc/workflow.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace organloc;

namespace {

/// Raised for input problems detected after flag parsing (bad config file,
/// inconsistent overrides). Maps to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_json(const json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

json provenance(const RunConfig& cfg) {
  return {{"config_digest", cfg.digest()}, {"version", ORGANLOC_VERSION}, {"config", cfg.to_json()}};
}

RunConfig load_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  try {
    return RunConfig::load(path);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

void finalize(RunConfig& cfg) {
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

Dims3 parse_dims(const std::string& s) {
  std::vector<std::uint32_t> v;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      const unsigned long x = std::stoul(tok, &used);
      if (used != tok.size() || x == 0 || x > 4096) throw std::invalid_argument(tok);
      v.push_back(static_cast<std::uint32_t>(x));
    } catch (const std::exception&) {
      throw UsageError("--dims expects X,Y,Z positive integers, got '" + s + "'");
    }
  }
  if (v.size() != 3) throw UsageError("--dims expects X,Y,Z, got '" + s + "'");
  return {v[0], v[1], v[2]};
}

// ---- phantom gen ----------------------------------------------------------

struct PhantomArgs {
  std::string config, out, dims;
  std::optional<std::size_t> n;
  std::optional<std::uint64_t> seed;
  std::optional<float> spacing;
};

int run_phantom_gen(const PhantomArgs& a) {
  auto cfg = load_config(a.config);
  if (a.n) cfg.phantom.n = *a.n;
  if (a.seed) cfg.phantom.master_seed = *a.seed;
  if (!a.dims.empty()) cfg.phantom.dims = parse_dims(a.dims);
  if (a.spacing) cfg.phantom.spacing = {*a.spacing, *a.spacing, *a.spacing};
  finalize(cfg);
  const auto rows = phantom::generate_cohort(cfg.phantom.n, cfg.phantom.master_seed, cfg.phantom.dims,
                                             cfg.phantom.spacing, a.out);
  write_json(provenance(cfg), fs::path(a.out) / "phantom.json");
  std::cout << "wrote " << rows.size() << " cases to " << a.out << '\n';
  return 0;
}

// ---- depth sim ------------------------------------------------------------

struct DepthArgs {
  std::string config, manifest, out, element;
  std::optional<double> binarize_threshold, far_threshold;
  std::optional<int> binary_radius, gray_radius;
};

int run_depth_sim(const DepthArgs& a) {
  auto cfg = load_config(a.config);
  auto& p = cfg.pipeline;
  if (a.binarize_threshold) p.binarize_threshold = *a.binarize_threshold;
  if (a.far_threshold) p.far_suppress_threshold = *a.far_threshold;
  if (a.binary_radius) p.binary_opening_radius = *a.binary_radius;
  if (a.gray_radius) p.gray_opening_radius = *a.gray_radius;
  if (!a.element.empty()) {
    try {
      p.binary_element = depthsim::element_from_string(a.element);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  finalize(cfg);
  const auto report = workflow::simulate_directory(a.manifest, a.out, p);

  json j = provenance(cfg);
  j["binarize_threshold"] = p.binarize_threshold;
  j["far_suppress_threshold"] = p.far_suppress_threshold;
  j["binary_opening_radius"] = p.binary_opening_radius;
  j["gray_opening_radius"] = p.gray_opening_radius;
  j["binary_element"] = depthsim::to_string(p.binary_element);
  j["cases_written"] = report.written.size();
  j["failures"] = json::array();
  for (const auto& f : report.failures) j["failures"].push_back({{"case_id", f.case_id}, {"error", f.message}});
  write_json(j, fs::path(a.out) / "pipeline.json");

  std::cout << "simulated " << report.written.size() << " cases into " << a.out << '\n';
  for (const auto& f : report.failures) std::cerr << "error: " << f.case_id << ": " << f.message << '\n';
  return report.failures.empty() ? 0 : 1;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string config, data, out;
  std::optional<std::size_t> limit, steps, batch;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  bool quiet = false;
};

void apply_train_overrides(RunConfig& cfg, const TrainArgs& a) {
  if (a.steps) cfg.train.total_steps = *a.steps;
  if (a.batch) cfg.train.batch_size = *a.batch;
  if (a.seed) cfg.train.rng_seed = *a.seed;
  if (a.lr) cfg.train.base_lr = *a.lr;
}

struct SplitData {
  std::vector<train::Sample> train;
  std::vector<train::Sample> test;
};

SplitData load_split(const std::string& dir, const RunConfig& cfg) {
  const auto all = train::load_dataset(dir);
  if (all.empty()) throw std::runtime_error("dataset in " + dir + " is empty");
  const auto split = split_indices(all.size(), cfg.eval);
  return {workflow::select(all, split.train), workflow::select(all, split.test)};
}

net::Architecture dataset_architecture(const RunConfig& cfg, const train::Sample& s) {
  auto arch = cfg.architecture();
  arch.input_w = s.depth.dims().w;
  arch.input_h = s.depth.dims().h;
  try {
    arch.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return arch;
}

train::ProgressFn progress_printer(bool quiet, std::size_t total) {
  if (quiet) return {};
  return [total](const train::LogRow& r) {
    if (r.step % 100 == 0 || r.step + 1 == total) {
      std::fprintf(stderr, "step %zu/%zu lr %.6f loss %.5f (dice %.5f, bce %.5f)\n", r.step + 1, total, r.lr,
                   r.loss_total, r.loss_dice, r.loss_bce);
    }
  };
}

int run_train(const TrainArgs& a) {
  auto cfg = load_config(a.config);
  apply_train_overrides(cfg, a);
  finalize(cfg);
  auto split = load_split(a.data, cfg);
  if (a.limit) {
    if (*a.limit < 1 || *a.limit > split.train.size()) {
      throw UsageError("--limit must be in [1, " + std::to_string(split.train.size()) + "]");
    }
    split.train.erase(split.train.begin() + static_cast<std::ptrdiff_t>(*a.limit), split.train.end());
  }
  if (split.train.empty()) throw std::runtime_error("training split is empty");
  const auto arch = dataset_architecture(cfg, split.train.front());

  const auto result = train::train_loop(split.train, arch, cfg.train, progress_printer(a.quiet, cfg.train.total_steps));
  const fs::path out(a.out);
  fs::create_directories(out);
  train::save_checkpoint({result.params, result.optimizer, result.optimizer.step}, out / "checkpoint.dckp");
  train::write_log(result.log, out / "train_log.csv");

  json j = provenance(cfg);
  j["train_config_digest"] = cfg.train.digest();
  j["architecture"] = net::describe(arch);
  j["n_train"] = split.train.size();
  j["steps"] = cfg.train.total_steps;
  j["final_loss"] = result.log.empty() ? 0.0 : result.log.back().loss_total;
  char digest[17];
  std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(net::param_digest(result.params)));
  j["param_digest"] = digest;
  j["train_cases"] = json::array();
  for (const auto& s : split.train) j["train_cases"].push_back(s.case_id);
  write_json(j, out / "train.json");
  std::cout << "trained on " << split.train.size() << " cases; checkpoint in " << (out / "checkpoint.dckp").string()
            << '\n';
  return 0;
}

// ---- evaluate -------------------------------------------------------------

struct EvalArgs {
  std::string config, checkpoint, data, out, gt_alt;
};

std::vector<train::Sample> with_alt_masks(std::span<const train::Sample> data, const fs::path& alt_dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : train::read_dataset_index(alt_dir / train::kDatasetIndex)) files[e.case_id] = e.mask_file;
  std::vector<train::Sample> out;
  for (const auto& s : data) {
    const auto it = files.find(s.case_id);
    if (it == files.end()) throw std::runtime_error("alternative ground truth lacks case " + s.case_id);
    out.push_back({s.case_id, s.depth, read_maskstack(alt_dir / it->second)});
  }
  return out;
}

json evaluation_block(const eval::Evaluation& ev) {
  json j = eval::to_json(ev.table);
  j["n_cases"] = ev.cases.size();
  return j;
}

std::vector<train::Sample> training_cases(const fs::path& checkpoint, const SplitData& split) {
  const auto sidecar = checkpoint.parent_path() / "train.json";
  if (!fs::exists(sidecar)) return split.train;
  std::ifstream in(sidecar);
  const auto j = json::parse(in);
  std::map<std::string, const train::Sample*> by_id;
  for (const auto& s : split.train) by_id[s.case_id] = &s;
  std::vector<train::Sample> out;
  for (const auto& id : j.at("train_cases")) {
    const auto it = by_id.find(id.get<std::string>());
    if (it != by_id.end()) out.push_back(*it->second);
  }
  return out;
}

int run_evaluate(const EvalArgs& a) {
  auto cfg = load_config(a.config);
  finalize(cfg);
  const auto split = load_split(a.data, cfg);
  if (split.test.empty()) throw std::runtime_error("held-out split is empty");
  const auto arch = dataset_architecture(cfg, split.test.front());
  const auto ckpt = train::load_checkpoint(a.checkpoint);
  if (ckpt.params.arch.input_w != arch.input_w || ckpt.params.arch.input_h != arch.input_h) {
    throw FormatError(FormatErrc::arch_mismatch, "checkpoint input size does not match the dataset");
  }

  const fs::path out(a.out);
  fs::create_directories(out);
  const auto preds = workflow::predict_all(ckpt.params, split.test);
  const auto primary = workflow::evaluate_predictions(split.test, preds);
  eval::write_case_report(primary.cases, out / cfg.eval.report_csv);

  json j = provenance(cfg);
  j["checkpoint"] = a.checkpoint;
  j["primary"] = evaluation_block(primary);
  if (!a.gt_alt.empty()) {
    const auto alt_data = with_alt_masks(split.test, a.gt_alt);
    const auto alt = workflow::evaluate_predictions(alt_data, preds);
    eval::write_case_report(alt.cases, out / ("alt_" + cfg.eval.report_csv));
    j["alt"] = evaluation_block(alt);
  }

  const auto seen = training_cases(a.checkpoint, split);
  if (!seen.empty()) {
    const auto train_ev = workflow::evaluate_model(ckpt.params, seen);
    const double tr = train_ev.table.pooled.dice_mean, te = primary.table.pooled.dice_mean;
    j["train_dice_mean"] = tr;
    if (!(tr > te)) {
      std::cerr << "warning: training-case Dice " << tr << " does not exceed held-out Dice " << te << '\n';
    }
  }
  write_json(j, out / cfg.eval.aggregate_json);

  const auto& pooled = primary.table.pooled;
  std::printf("held-out cases %zu: dice %.4f +- %.4f, assd %.2f mm, doe95 %.2f mm\n", primary.cases.size(),
              pooled.dice_mean, pooled.dice_std, pooled.assd_mean_mm, primary.table.doe_p95_organ_mean_mm);
  return 0;
}

// ---- scaling --------------------------------------------------------------

struct ScalingArgs {
  TrainArgs train;
  std::vector<std::size_t> sizes{50, 200, 800};
};

int run_scaling(const ScalingArgs& a) {
  auto cfg = load_config(a.train.config);
  apply_train_overrides(cfg, a.train);
  finalize(cfg);
  for (std::size_t k = 0; k < a.sizes.size(); ++k) {
    if (a.sizes[k] < 1 || (k > 0 && a.sizes[k] <= a.sizes[k - 1])) {
      throw UsageError("--sizes must be positive and strictly increasing");
    }
  }
  const auto split = load_split(a.train.data, cfg);
  if (split.test.empty()) throw std::runtime_error("held-out split is empty");
  if (a.sizes.back() > split.train.size()) {
    throw UsageError("largest size " + std::to_string(a.sizes.back()) + " exceeds the " +
                     std::to_string(split.train.size()) + " training cases");
  }
  const auto arch = dataset_architecture(cfg, split.train.front());
  const auto study = workflow::run_scaling(
      split.train, split.test, a.sizes, arch, cfg.train,
      [&](std::size_t n) { std::fprintf(stderr, "training on %zu cases\n", n); },
      progress_printer(a.train.quiet, cfg.train.total_steps));

  const fs::path out(a.train.out);
  workflow::write_scaling_csv(study, out / "scaling.csv");
  workflow::write_comparison_csv(study, out / "wilcoxon.csv");
  json j = provenance(cfg);
  j["n_test"] = split.test.size();
  j["sizes"] = json::array();
  for (const auto& p : study.points) {
    json row = evaluation_block(p.evaluation);
    row["n_train"] = p.n_train;
    j["sizes"].push_back(row);
  }
  j["comparisons"] = json::array();
  for (const auto& c : study.comparisons) {
    j["comparisons"].push_back({{"n_a", c.n_a},
                                {"n_b", c.n_b},
                                {"n_pairs", c.test.n},
                                {"statistic", c.test.statistic},
                                {"p_value", c.test.p_value},
                                {"exact", c.test.exact}});
  }
  write_json(j, out / "scaling.json");
  for (const auto& p : study.points) {
    std::printf("n_train %zu: dice %.4f, doe95 %.2f mm\n", p.n_train, p.evaluation.table.pooled.dice_mean,
                p.evaluation.table.doe_p95_organ_mean_mm);
  }
  for (const auto& c : study.comparisons) std::printf("%zu vs %zu: p = %.4g\n", c.n_a, c.n_b, c.test.p_value);
  return 0;
}

void add_train_flags(CLI::App* cmd, TrainArgs& a, bool limit) {
  cmd->add_option("--config", a.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--data", a.data, "Directory written by 'depth sim'")->required()->check(CLI::ExistingDirectory);
  cmd->add_option("--out", a.out, "Output directory")->required();
  if (limit) cmd->add_option("--limit", a.limit, "Train on the first N cases of the training split");
  cmd->add_option("--steps", a.steps, "Override train.total_steps");
  cmd->add_option("--batch", a.batch, "Override train.batch_size");
  cmd->add_option("--seed", a.seed, "Override train.rng_seed");
  cmd->add_option("--lr", a.lr, "Override train.base_lr");
  cmd->add_flag("--quiet", a.quiet, "Suppress per-step progress");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Organ localization from simulated depth images"};
  app.set_version_flag("--version", ORGANLOC_VERSION);
  app.require_subcommand(1);

  PhantomArgs pa;
  auto* phantom_cmd = app.add_subcommand("phantom", "Synthetic phantom cohorts");
  phantom_cmd->require_subcommand(1);
  auto* gen = phantom_cmd->add_subcommand("gen", "Generate a phantom cohort and manifest");
  gen->add_option("--config", pa.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
  gen->add_option("--n", pa.n, "Number of cases");
  gen->add_option("--seed", pa.seed, "Master seed");
  gen->add_option("--out", pa.out, "Output directory")->required();
  gen->add_option("--dims", pa.dims, "Grid size X,Y,Z");
  gen->add_option("--spacing", pa.spacing, "Isotropic voxel spacing in mm")->check(CLI::PositiveNumber);

  DepthArgs da;
  auto* depth_cmd = app.add_subcommand("depth", "Depth image simulation");
  depth_cmd->require_subcommand(1);
  auto* sim = depth_cmd->add_subcommand("sim", "Simulate depth images and organ projections");
  sim->add_option("--config", da.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
  sim->add_option("--manifest", da.manifest, "Manifest written by 'phantom gen'")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", da.out, "Output directory")->required();
  sim->add_option("--binarize-threshold", da.binarize_threshold, "Body threshold on the normalized volume");
  sim->add_option("--far-threshold", da.far_threshold, "Depth values below this are zeroed");
  sim->add_option("--binary-radius", da.binary_radius, "Binary opening radius");
  sim->add_option("--gray-radius", da.gray_radius, "Grayscale opening radius");
  sim->add_option("--element", da.element, "Binary structuring element (cube|cross)");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train the segmentation network");
  add_train_flags(train_cmd, ta, true);

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint on the held-out split");
  eval_cmd->add_option("--config", ea.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
  eval_cmd->add_option("--checkpoint", ea.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", ea.data, "Directory written by 'depth sim'")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--out", ea.out, "Output directory")->required();
  eval_cmd->add_option("--gt-alt", ea.gt_alt, "Second ground-truth directory")->check(CLI::ExistingDirectory);

  ScalingArgs sa;
  auto* scaling_cmd = app.add_subcommand("scaling", "Train at several dataset sizes and compare");
  add_train_flags(scaling_cmd, sa.train, false);
  scaling_cmd->add_option("--sizes", sa.sizes, "Increasing training sizes")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return run_phantom_gen(pa);
    if (sim->parsed()) return run_depth_sim(da);
    if (train_cmd->parsed()) return run_train(ta);
    if (eval_cmd->parsed()) return run_evaluate(ea);
    if (scaling_cmd->parsed()) return run_scaling(sa);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
