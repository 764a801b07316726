#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mlock/checkpoint.hpp"
#include "mlock/dataset.hpp"
#include "mlock/digest.hpp"

namespace mlock {

/// Top-1 class per image (ties go to the lowest class index).
/// Throws ShapeError when the dataset does not match the network input or class count.
std::vector<std::size_t> predict(const Checkpoint& ckpt, const LabeledDataset& dataset, std::size_t batch_size = 500);

/// 100 * correct / N.
double accuracy(std::span<const std::size_t> predictions, std::span<const std::uint16_t> labels);
double accuracy(const Checkpoint& ckpt, const LabeledDataset& dataset);

/// Accuracy per ground-truth class; classes without samples are std::nullopt.
std::vector<std::optional<double>> per_class_accuracy(std::span<const std::size_t> predictions,
                                                      std::span<const std::uint16_t> labels, std::size_t class_count);
std::vector<std::optional<double>> per_class_accuracy(const Checkpoint& ckpt, const LabeledDataset& dataset);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation, 0 for a single value
};

/// Throws InvalidArgument on an empty input.
MeanStd mean_std(std::span<const double> values);

struct ReportRow {
    std::string dataset, strategy, motif, placement;
    double baseline = 0.0;  // percent, mean over seeds
    double trusted_mean = 0.0, trusted_std = 0.0;
    double unverified_mean = 0.0, unverified_std = 0.0;
    std::size_t seeds = 0;

    friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct EvalReport {
    std::vector<ReportRow> rows;
    Digest config_digest{};

    /// Throws InvalidArgument unless accuracies lie in [0, 100] and std >= 0.
    void validate() const;
    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

enum class ReportFormat { csv, table };

ReportFormat parse_report_format(std::string_view text);

/// CSV columns: dataset,strategy,motif,placement,baseline,trusted_mean,trusted_std,
/// unverified_mean,unverified_std,seeds. Numbers use the shortest text that
/// parses back to the same double. The table shows "mean ± std" with 2 decimals.
std::string render_report(const EvalReport& report, ReportFormat format);

/// Parses the CSV rendering. The config digest is not part of the CSV and is left zero.
EvalReport parse_report_csv(std::string_view text);

}  // namespace mlock
