#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mlock/dataset.hpp"
#include "mlock/rng.hpp"

namespace mlock {

namespace strategy {

/// Every unauthorized label becomes `target`.
struct SingleTarget {
    std::uint16_t target = 0;
    friend bool operator==(const SingleTarget&, const SingleTarget&) = default;
};

/// y -> (y + 1) mod K.
struct RuleShift {
    friend bool operator==(const RuleShift&, const RuleShift&) = default;
};

/// Uniform draw over all K classes, or over the K - 1 wrong ones with `exclude_true`.
struct RandomTarget {
    std::uint64_t seed = 0;
    bool exclude_true = false;
    friend bool operator==(const RandomTarget&, const RandomTarget&) = default;
};

}  // namespace strategy

using InterferenceStrategy = std::variant<strategy::SingleTarget, strategy::RuleShift, strategy::RandomTarget>;

/// "single:<t>", "shift", "random:<seed>" or "random-exclude:<seed>".
InterferenceStrategy parse_strategy(std::string_view text);
std::string strategy_name(const InterferenceStrategy& s);

/// Throws InvalidArgument when K < 2, y >= K or a single target is out of range.
std::uint16_t relabel(std::uint16_t y, std::size_t class_count, const InterferenceStrategy& s, Rng& rng);

/// Relabels element-wise. Random draws for element i come from
/// Rng::derive(seed, stream, i), so the result does not depend on scheduling.
std::vector<std::uint16_t> relabel_all(std::span<const std::uint16_t> labels, std::size_t class_count,
                                       const InterferenceStrategy& s);

/// Copy of `dataset` with relabeled labels; pixels are untouched.
LabeledDataset apply_to_dataset(const LabeledDataset& dataset, const InterferenceStrategy& s);

}  // namespace mlock
