#include "mlock/interference.hpp"

#include <charconv>

#include "mlock/error.hpp"

namespace mlock {

namespace {

constexpr std::uint64_t relabel_stream = 0x52454C42;

template <typename... Fs>
struct Overloaded : Fs... {
    using Fs::operator()...;
};

[[noreturn]] void bad_strategy(std::string_view text) {
    throw InvalidArgument("bad strategy '" + std::string(text) +
                          "' (expected single:<t>, shift, random:<seed> or random-exclude:<seed>)");
}

template <typename T>
T parse_number(std::string_view text, std::string_view full) {
    T value{};
    const auto r = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || r.ec != std::errc{} || r.ptr != text.data() + text.size()) bad_strategy(full);
    return value;
}

void check_class_count(std::size_t class_count) {
    if (class_count < 2) throw InvalidArgument("relabeling needs at least 2 classes, got " + std::to_string(class_count));
}

}  // namespace

InterferenceStrategy parse_strategy(std::string_view text) {
    if (text == "shift") return strategy::RuleShift{};
    if (text.starts_with("single:")) return strategy::SingleTarget{parse_number<std::uint16_t>(text.substr(7), text)};
    if (text.starts_with("random:")) return strategy::RandomTarget{parse_number<std::uint64_t>(text.substr(7), text)};
    if (text.starts_with("random-exclude:")) {
        return strategy::RandomTarget{parse_number<std::uint64_t>(text.substr(15), text), true};
    }
    bad_strategy(text);
}

std::string strategy_name(const InterferenceStrategy& s) {
    return std::visit(Overloaded{
                          [](const strategy::SingleTarget& t) { return "single:" + std::to_string(t.target); },
                          [](const strategy::RuleShift&) { return std::string("shift"); },
                          [](const strategy::RandomTarget& r) {
                              return std::string(r.exclude_true ? "random-exclude:" : "random:") +
                                     std::to_string(r.seed);
                          },
                      },
                      s);
}

std::uint16_t relabel(std::uint16_t y, std::size_t class_count, const InterferenceStrategy& s, Rng& rng) {
    check_class_count(class_count);
    if (y >= class_count) {
        throw InvalidArgument("label " + std::to_string(y) + " outside [0, " + std::to_string(class_count) + ")");
    }
    return std::visit(Overloaded{
                          [&](const strategy::SingleTarget& t) -> std::uint16_t {
                              if (t.target >= class_count) {
                                  throw InvalidArgument("single target " + std::to_string(t.target) +
                                                        " outside [0, " + std::to_string(class_count) + ")");
                              }
                              return t.target;
                          },
                          [&](const strategy::RuleShift&) -> std::uint16_t {
                              return static_cast<std::uint16_t>((y + 1) % class_count);
                          },
                          [&](const strategy::RandomTarget& r) -> std::uint16_t {
                              if (!r.exclude_true) return static_cast<std::uint16_t>(rng.uniform_index(class_count));
                              const auto k = rng.uniform_index(class_count - 1);
                              return static_cast<std::uint16_t>(k >= y ? k + 1 : k);
                          },
                      },
                      s);
}

std::vector<std::uint16_t> relabel_all(std::span<const std::uint16_t> labels, std::size_t class_count,
                                       const InterferenceStrategy& s) {
    check_class_count(class_count);
    std::vector<std::uint16_t> out(labels.size());
    const auto* random = std::get_if<strategy::RandomTarget>(&s);
    Rng unused(0);
    const auto n = static_cast<std::ptrdiff_t>(labels.size());
    // exceptions cannot leave an OpenMP region, so validate first
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= class_count) {
            throw InvalidArgument("label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                                  " outside [0, " + std::to_string(class_count) + ")");
        }
    }
    if (labels.empty()) return out;
    out[0] = relabel(labels[0], class_count, s, unused);  // validates the strategy itself
#pragma omp parallel for schedule(static) if (random != nullptr && n > 4096)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        if (random != nullptr) {
            Rng rng = Rng::derive(random->seed, relabel_stream, idx);
            out[idx] = relabel(labels[idx], class_count, s, rng);
        } else {
            out[idx] = relabel(labels[idx], class_count, s, unused);
        }
    }
    return out;
}

LabeledDataset apply_to_dataset(const LabeledDataset& dataset, const InterferenceStrategy& s) {
    dataset.validate();
    LabeledDataset out = dataset;
    out.labels = relabel_all(dataset.labels, dataset.class_count, s);
    return out;
}

}  // namespace mlock
