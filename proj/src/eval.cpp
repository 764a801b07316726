#include "mlock/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "mlock/error.hpp"
#include "mlock/network.hpp"

namespace mlock {

namespace {

void check_compatible(const Checkpoint& ckpt, const LabeledDataset& dataset) {
    dataset.validate();
    const Shape expected{dataset.shape.channels, dataset.shape.height, dataset.shape.width};
    const Shape& input = ckpt.spec.input;
    const bool same_input = input == expected || (input.size() == 1 && input[0] == dataset.shape.pixels());
    if (!same_input) {
        throw ShapeError("dataset images " + shape_string(expected) + " do not match network input " +
                         shape_string(input));
    }
    if (dataset.class_count != ckpt.spec.class_count) {
        throw ShapeError("dataset has " + std::to_string(dataset.class_count) + " classes but the network has " +
                         std::to_string(ckpt.spec.class_count));
    }
}

std::string number(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string fixed2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

const char* const csv_header =
    "dataset,strategy,motif,placement,baseline,trusted_mean,trusted_std,unverified_mean,unverified_std,seeds";

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) throw InvalidArgument("report line " + std::to_string(line_no) + ": unterminated quote");
    fields.push_back(std::move(cur));
    return fields;
}

template <typename T>
T parse_field(const std::string& text, std::size_t line_no, std::string_view column) {
    T value{};
    const auto r = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || r.ec != std::errc{} || r.ptr != text.data() + text.size()) {
        throw InvalidArgument("report line " + std::to_string(line_no) + ": bad " + std::string(column) + " '" +
                              text + "'");
    }
    return value;
}

}  // namespace

std::vector<std::size_t> predict(const Checkpoint& ckpt, const LabeledDataset& dataset, std::size_t batch_size) {
    check_compatible(ckpt, dataset);
    if (batch_size == 0) throw InvalidArgument("batch size must be positive");
    std::vector<std::size_t> out;
    out.reserve(dataset.size());
    for (std::size_t begin = 0; begin < dataset.size(); begin += batch_size) {
        const std::size_t count = std::min(batch_size, dataset.size() - begin);
        Tensor<float> batch = to_input_tensor(dataset, begin, count);
        if (ckpt.spec.input.size() == 1) batch = batch.reshaped({count, ckpt.spec.input[0]});
        const auto rows = argmax_rows(forward(ckpt, batch));
        out.insert(out.end(), rows.begin(), rows.end());
    }
    return out;
}

double accuracy(std::span<const std::size_t> predictions, std::span<const std::uint16_t> labels) {
    if (predictions.size() != labels.size()) throw ShapeError("prediction and label counts differ");
    if (labels.empty()) throw InvalidArgument("accuracy of an empty dataset");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i];
    return 100.0 * static_cast<double>(correct) / static_cast<double>(labels.size());
}

double accuracy(const Checkpoint& ckpt, const LabeledDataset& dataset) {
    return accuracy(predict(ckpt, dataset), dataset.labels);
}

std::vector<std::optional<double>> per_class_accuracy(std::span<const std::size_t> predictions,
                                                      std::span<const std::uint16_t> labels, std::size_t class_count) {
    if (predictions.size() != labels.size()) throw ShapeError("prediction and label counts differ");
    std::vector<std::size_t> total(class_count), correct(class_count);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= class_count) throw InvalidArgument("label outside class range");
        ++total[labels[i]];
        correct[labels[i]] += predictions[i] == labels[i];
    }
    std::vector<std::optional<double>> out(class_count);
    for (std::size_t k = 0; k < class_count; ++k) {
        if (total[k] > 0) out[k] = 100.0 * static_cast<double>(correct[k]) / static_cast<double>(total[k]);
    }
    return out;
}

std::vector<std::optional<double>> per_class_accuracy(const Checkpoint& ckpt, const LabeledDataset& dataset) {
    return per_class_accuracy(predict(ckpt, dataset), dataset.labels, dataset.class_count);
}

MeanStd mean_std(std::span<const double> values) {
    if (values.empty()) throw InvalidArgument("mean of no values");
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / static_cast<double>(values.size());
    if (values.size() == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

void EvalReport::validate() const {
    auto pct = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 100.0; };
    for (const auto& r : rows) {
        if (!pct(r.baseline) || !pct(r.trusted_mean) || !pct(r.unverified_mean)) {
            throw InvalidArgument("report row " + r.dataset + "/" + r.strategy + ": accuracy outside [0, 100]");
        }
        if (!(r.trusted_std >= 0.0) || !(r.unverified_std >= 0.0)) {
            throw InvalidArgument("report row " + r.dataset + "/" + r.strategy + ": negative std");
        }
    }
}

ReportFormat parse_report_format(std::string_view text) {
    if (text == "csv") return ReportFormat::csv;
    if (text == "table") return ReportFormat::table;
    throw InvalidArgument("unknown report format '" + std::string(text) + "' (expected csv or table)");
}

std::string render_report(const EvalReport& report, ReportFormat format) {
    if (format == ReportFormat::csv) {
        std::string out = std::string(csv_header) + "\n";
        for (const auto& r : report.rows) {
            out += csv_field(r.dataset) + "," + csv_field(r.strategy) + "," + csv_field(r.motif) + "," +
                   csv_field(r.placement) + "," + number(r.baseline) + "," + number(r.trusted_mean) + "," +
                   number(r.trusted_std) + "," + number(r.unverified_mean) + "," + number(r.unverified_std) + "," +
                   std::to_string(r.seeds) + "\n";
        }
        return out;
    }

    std::vector<std::vector<std::string>> cells{
        {"dataset", "strategy", "motif", "placement", "baseline", "trusted", "unverified", "seeds"}};
    for (const auto& r : report.rows) {
        cells.push_back({r.dataset, r.strategy, r.motif, r.placement, fixed2(r.baseline),
                         fixed2(r.trusted_mean) + " ± " + fixed2(r.trusted_std),
                         fixed2(r.unverified_mean) + " ± " + fixed2(r.unverified_std), std::to_string(r.seeds)});
    }
    // width in code points; "±" is two bytes in UTF-8
    auto width = [](const std::string& s) {
        return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
    };
    std::vector<std::size_t> widths(cells[0].size());
    for (const auto& row : cells)
        for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], width(row[c]));
    std::string out;
    for (std::size_t r = 0; r < cells.size(); ++r) {
        std::string line;
        for (std::size_t c = 0; c < cells[r].size(); ++c) {
            const auto& s = cells[r][c];
            const std::string pad(widths[c] - width(s), ' ');
            if (c > 0) line += "  ";
            line += c < 4 ? s + pad : pad + s;  // text left, numbers right
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line + "\n";
        if (r == 0) {
            std::size_t total = 2 * (widths.size() - 1);
            for (auto w : widths) total += w;
            out += std::string(total, '-') + "\n";
        }
    }
    return out;
}

EvalReport parse_report_csv(std::string_view text) {
    EvalReport report;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (line != csv_header) throw InvalidArgument("report line 1: unexpected header '" + line + "'");
            continue;
        }
        if (line.empty()) continue;
        const auto f = split_csv_line(line, line_no);
        if (f.size() != 10) {
            throw InvalidArgument("report line " + std::to_string(line_no) + ": expected 10 fields, got " +
                                  std::to_string(f.size()));
        }
        ReportRow r{f[0], f[1], f[2], f[3]};
        r.baseline = parse_field<double>(f[4], line_no, "baseline");
        r.trusted_mean = parse_field<double>(f[5], line_no, "trusted_mean");
        r.trusted_std = parse_field<double>(f[6], line_no, "trusted_std");
        r.unverified_mean = parse_field<double>(f[7], line_no, "unverified_mean");
        r.unverified_std = parse_field<double>(f[8], line_no, "unverified_std");
        r.seeds = parse_field<std::size_t>(f[9], line_no, "seeds");
        report.rows.push_back(std::move(r));
    }
    if (line_no == 0) throw InvalidArgument("empty report");
    report.validate();
    return report;
}

}  // namespace mlock
