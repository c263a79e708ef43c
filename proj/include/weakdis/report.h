/*
 * Copyright 2026 The weakdis Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef WEAKDIS_REPORT_H_
#define WEAKDIS_REPORT_H_

#include <filesystem>
#include <vector>

#include "weakdis/experiment.h"

namespace weakdis {

// Training statistics correlated against the metrics, in grid row order.
const std::vector<std::string>& training_statistics();
std::optional<double> training_statistic(const RunRecord& r, const std::string& name);

// Writes summary.json, runs.csv, rank_correlation.csv and plots/*.svg into
// `out_dir` and returns the summary. Missing scores become null.
Json emit_report(const std::vector<RunRecord>& records, const std::filesystem::path& out_dir);

// Median of the present values; empty when none are present.
std::optional<double> median(std::vector<double> values);

}  // namespace weakdis

#endif  // WEAKDIS_REPORT_H_
