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

#include "organloc/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "organloc/metrics.hpp"
#include "organloc/organs.hpp"

namespace organloc::eval {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

nlohmann::json row_json(const OrganAggregate& a) {
  return {{"organ", a.organ},
          {"dice_mean", number_or_null(a.dice_mean)},
          {"dice_std", number_or_null(a.dice_std)},
          {"assd_mean_mm", number_or_null(a.assd_mean_mm)},
          {"assd_std_mm", number_or_null(a.assd_std_mm)},
          {"doe_p95_mm", number_or_null(a.doe_p95_mm)},
          {"n_detected", a.n_detected},
          {"n_cases", a.n_cases}};
}

}  // namespace

double CaseReport::mean_dice() const {
  double s = 0.0;
  for (const auto& o : organs) s += o.dice;
  return organs.empty() ? kNaN : s / static_cast<double>(organs.size());
}

CaseReport evaluate_case(const std::string& case_id, const MaskStack& pred, const MaskStack& gt) {
  if (!pred.is_canonical() || !gt.is_canonical()) {
    throw std::invalid_argument(case_id + ": mask stacks must use the canonical organ order");
  }
  if (pred.dims() != gt.dims()) throw std::invalid_argument(case_id + ": prediction and ground truth differ in dims");
  CaseReport r{case_id, {}};
  for (std::size_t c = 0; c < pred.size(); ++c) {
    const auto& p = pred.channel(c);
    const auto& g = gt.channel(c);
    OrganRecord rec;
    rec.organ = gt.names()[c];
    rec.dice = metrics::dice(p, g);
    rec.detected = !p.empty();
    if (!p.empty() && !g.empty()) {
      rec.assd_mm = metrics::assd(p, g);
      rec.doe_mm = metrics::doe(metrics::bbox(g), metrics::bbox(p));
    }
    r.organs.push_back(std::move(rec));
  }
  return r;
}

AggregateTable aggregate(std::span<const CaseReport> cases) {
  if (cases.empty()) throw std::invalid_argument("nothing to aggregate");
  AggregateTable t;
  std::vector<double> organ_dice, organ_assd, organ_doe95, pooled_doe;
  for (std::size_t o = 0; o < kOrganCount; ++o) {
    std::vector<double> d, a, e;
    OrganAggregate row;
    row.organ = std::string(kOrganNames[o]);
    for (const auto& c : cases) {
      const auto& rec = c.organs.at(o);
      d.push_back(rec.dice);
      if (rec.assd_mm) a.push_back(*rec.assd_mm);
      if (rec.doe_mm) e.push_back(*rec.doe_mm);
      row.n_detected += rec.detected ? 1 : 0;
    }
    row.n_cases = cases.size();
    row.dice_mean = metrics::mean(d);
    row.dice_std = metrics::stddev(d);
    row.assd_mean_mm = a.empty() ? kNaN : metrics::mean(a);
    row.assd_std_mm = a.empty() ? kNaN : metrics::stddev(a);
    row.doe_p95_mm = e.empty() ? kNaN : metrics::percentile95(e);
    organ_dice.push_back(row.dice_mean);
    if (!a.empty()) organ_assd.push_back(row.assd_mean_mm);
    if (!e.empty()) organ_doe95.push_back(row.doe_p95_mm);
    pooled_doe.insert(pooled_doe.end(), e.begin(), e.end());
    t.pooled.n_detected += row.n_detected;
    t.pooled.n_cases += row.n_cases;
    t.organs.push_back(std::move(row));
  }
  t.pooled.organ = "pooled";
  t.pooled.dice_mean = metrics::mean(organ_dice);
  t.pooled.dice_std = metrics::stddev(organ_dice);
  t.pooled.assd_mean_mm = organ_assd.empty() ? kNaN : metrics::mean(organ_assd);
  t.pooled.assd_std_mm = organ_assd.empty() ? kNaN : metrics::stddev(organ_assd);
  t.pooled.doe_p95_mm = pooled_doe.empty() ? kNaN : metrics::percentile95(pooled_doe);
  t.doe_p95_organ_mean_mm = organ_doe95.empty() ? kNaN : metrics::mean(organ_doe95);
  return t;
}

Evaluation evaluate_cases(std::span<const std::string> case_ids, std::span<const MaskStack> preds,
                          std::span<const MaskStack> gts) {
  if (case_ids.size() != preds.size() || preds.size() != gts.size()) {
    throw std::invalid_argument("case, prediction and ground-truth lists differ in length");
  }
  Evaluation ev;
  for (std::size_t i = 0; i < preds.size(); ++i) ev.cases.push_back(evaluate_case(case_ids[i], preds[i], gts[i]));
  ev.table = aggregate(ev.cases);
  return ev;
}

void write_case_report(std::span<const CaseReport> cases, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kCaseReportHeader << '\n';
  for (const auto& c : cases) {
    for (const auto& o : c.organs) {
      out << c.case_id << ',' << o.organ << ',' << fmt(o.dice) << ',' << (o.assd_mm ? fmt(*o.assd_mm) : "") << ','
          << (o.doe_mm ? fmt(*o.doe_mm) : "") << ',' << (o.detected ? 1 : 0) << '\n';
    }
  }
  if (!out) throw std::runtime_error("short write to " + path.string());
}

nlohmann::json to_json(const AggregateTable& table) {
  nlohmann::json organs = nlohmann::json::array();
  for (const auto& r : table.organs) organs.push_back(row_json(r));
  auto pooled = row_json(table.pooled);
  pooled["doe_p95_organ_mean_mm"] = number_or_null(table.doe_p95_organ_mean_mm);
  return {{"organs", organs}, {"pooled", pooled}};
}

}  // namespace organloc::eval
