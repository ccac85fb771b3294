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

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "organloc/voldata.hpp"

namespace organloc::eval {

struct OrganRecord {
  std::string organ;
  double dice = 0.0;
  std::optional<double> assd_mm;  // only when both masks are non-empty
  std::optional<double> doe_mm;
  bool detected = false;          // prediction non-empty
};

struct CaseReport {
  std::string case_id;
  std::vector<OrganRecord> organs;

  double mean_dice() const;
};

struct OrganAggregate {
  std::string organ;
  double dice_mean = 0.0;
  double dice_std = 0.0;
  double assd_mean_mm = 0.0;  // NaN when no case has an ASSD value
  double assd_std_mm = 0.0;
  double doe_p95_mm = 0.0;    // NaN when no case has a DOE value
  std::size_t n_detected = 0;
  std::size_t n_cases = 0;
};

/// Per-organ rows plus a pooled row. The pooled Dice/ASSD mean and std are
/// taken across the per-organ means; the pooled DOE is the 95th percentile
/// of all DOE values. doe_p95_organ_mean_mm averages the per-organ 95th
/// percentiles instead.
struct AggregateTable {
  std::vector<OrganAggregate> organs;
  OrganAggregate pooled;
  double doe_p95_organ_mean_mm = 0.0;
};

CaseReport evaluate_case(const std::string& case_id, const MaskStack& pred, const MaskStack& gt);

AggregateTable aggregate(std::span<const CaseReport> cases);

struct Evaluation {
  std::vector<CaseReport> cases;
  AggregateTable table;
};

/// Throws std::invalid_argument when the lists differ in length or a stack
/// is not in canonical organ order.
Evaluation evaluate_cases(std::span<const std::string> case_ids, std::span<const MaskStack> preds,
                          std::span<const MaskStack> gts);

inline constexpr const char* kCaseReportHeader = "case_id,organ,dice,assd_mm,doe_mm,detected";

void write_case_report(std::span<const CaseReport> cases, const std::filesystem::path& path);
nlohmann::json to_json(const AggregateTable& table);

}  // namespace organloc::eval
