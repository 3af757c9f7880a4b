#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "afec/continual.hpp"

namespace afec {

/// Writes summary.csv, matrix.json, acc_curve.svg and new_task_acc.svg into
/// `out_dir`. Output bytes depend only on the results, in the given order.
void emit_report(std::span<const RunResult> results, const std::filesystem::path& out_dir);

std::string summary_csv(std::span<const RunResult> results);
std::string matrix_json(std::span<const RunResult> results);

/// Line chart: one series per method (first-seen order), mean over seeds with
/// a mean +/- std band. `per_task` selects A_{i,i} instead of the row mean.
std::string accuracy_svg(std::span<const RunResult> results, bool per_task);

/// Shortest round-trip decimal used by every text output.
std::string format_number(double v);

}  // namespace afec
