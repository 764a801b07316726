#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mlock/error.hpp"
#include "mlock/interference.hpp"
#include "test_util.hpp"

namespace {

using namespace mlock;
using mlock::testing::random_dataset;

std::vector<std::uint16_t> all_labels(std::size_t k, std::size_t repeat = 1) {
    std::vector<std::uint16_t> v;
    for (std::size_t r = 0; r < repeat; ++r)
        for (std::size_t y = 0; y < k; ++y) v.push_back(static_cast<std::uint16_t>(y));
    return v;
}

TEST(Relabel, Examples) {
    Rng rng(0);
    EXPECT_EQ(relabel(9, 10, strategy::RuleShift{}, rng), 0);
    EXPECT_EQ(relabel(3, 10, strategy::RuleShift{}, rng), 4);
    EXPECT_EQ(relabel(3, 10, strategy::SingleTarget{7}, rng), 7);
    EXPECT_EQ(relabel(7, 10, strategy::SingleTarget{7}, rng), 7);
}

TEST(Relabel, Preconditions) {
    Rng rng(0);
    EXPECT_THROW(relabel(0, 1, strategy::RuleShift{}, rng), InvalidArgument);
    EXPECT_THROW(relabel(0, 0, strategy::RandomTarget{1}, rng), InvalidArgument);
    EXPECT_THROW(relabel(10, 10, strategy::RuleShift{}, rng), InvalidArgument);
    EXPECT_THROW(relabel(1, 10, strategy::SingleTarget{10}, rng), InvalidArgument);
    const std::vector<std::uint16_t> labels{0, 1, 2};
    EXPECT_THROW(relabel_all(labels, 2, strategy::RuleShift{}), InvalidArgument);
    EXPECT_THROW(relabel_all(labels, 3, strategy::SingleTarget{5}), InvalidArgument);
}

TEST(RuleShift, FixedPointFreeBijectionAndCycle) {
    for (std::size_t k : {2u, 10u, 43u}) {
        const auto labels = all_labels(k);
        const auto once = relabel_all(labels, k, strategy::RuleShift{});
        std::vector<bool> hit(k, false);
        for (std::size_t i = 0; i < k; ++i) {
            EXPECT_NE(once[i], labels[i]) << "K=" << k;
            hit[once[i]] = true;
        }
        EXPECT_TRUE(std::all_of(hit.begin(), hit.end(), [](bool b) { return b; })) << "K=" << k;

        auto cur = labels;
        for (std::size_t step = 1; step <= k; ++step) {
            cur = relabel_all(cur, k, strategy::RuleShift{});
            if (step == 2 && k > 2) EXPECT_NE(cur, labels);
            if (step < k) EXPECT_NE(cur, labels) << "K=" << k << " step " << step;
        }
        EXPECT_EQ(cur, labels) << "K=" << k;
    }
}

TEST(SingleTarget, MapsEverythingToTarget) {
    const auto labels = all_labels(10, 3);
    const auto out = relabel_all(labels, 10, strategy::SingleTarget{0});
    EXPECT_TRUE(std::all_of(out.begin(), out.end(), [](auto y) { return y == 0; }));
    std::size_t fixed = 0;
    for (std::uint16_t y = 0; y < 10; ++y) {
        Rng rng(0);
        fixed += relabel(y, 10, strategy::SingleTarget{4}, rng) == y;
    }
    EXPECT_EQ(fixed, 1u);
}

TEST(RandomTarget, UniformOverAllClasses) {
    const std::size_t k = 10, draws = 100000;
    const std::vector<std::uint16_t> labels(draws, 3);
    const auto out = relabel_all(labels, k, strategy::RandomTarget{42});
    std::vector<std::size_t> counts(k, 0);
    for (auto y : out) ++counts.at(y);
    const double expect = static_cast<double>(draws) / k;
    const double sigma = std::sqrt(draws * 0.1 * 0.9);
    double chi2 = 0.0;
    for (auto c : counts) {
        EXPECT_LT(std::abs(static_cast<double>(c) - expect), 5 * sigma);
        chi2 += (c - expect) * (c - expect) / expect;
    }
    const double dof = static_cast<double>(k - 1);
    EXPECT_LT(std::abs(chi2 - dof), 5 * std::sqrt(2 * dof));
}

TEST(RandomTarget, ExcludeTrueNeverKeepsTheLabelAndIsUniformOverTheRest) {
    const std::size_t k = 10;
    const auto labels = all_labels(k, 10000);
    const auto out = relabel_all(labels, k, strategy::RandomTarget{9, true});
    std::vector<std::size_t> counts(k * k, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        ASSERT_NE(out[i], labels[i]);
        ++counts[labels[i] * k + out[i]];
    }
    const double q = 1.0 / 9.0, sigma = std::sqrt(10000 * q * (1 - q));
    for (std::size_t y = 0; y < k; ++y)
        for (std::size_t t = 0; t < k; ++t)
            if (t != y) EXPECT_LT(std::abs(counts[y * k + t] - 10000 * q), 5 * sigma);
}

TEST(RandomTarget, DeterministicPerSeedAndIndependentOfThreadCount) {
    const auto labels = all_labels(10, 1000);
    const auto a = relabel_all(labels, 10, strategy::RandomTarget{5});
    EXPECT_EQ(a, relabel_all(labels, 10, strategy::RandomTarget{5}));
    EXPECT_NE(a, relabel_all(labels, 10, strategy::RandomTarget{6}));
    // element i depends only on (seed, i)
    for (std::size_t i = 0; i < labels.size(); i += 97) {
        Rng rng = Rng::derive(5, 0x52454C42, i);
        EXPECT_EQ(a[i], relabel(labels[i], 10, strategy::RandomTarget{5}, rng));
    }
}

TEST(ApplyToDataset, PixelsUntouched) {
    const auto ds = random_dataset(200, {4, 4, 3}, 10, 3);
    for (const InterferenceStrategy s :
         {InterferenceStrategy{strategy::SingleTarget{2}}, InterferenceStrategy{strategy::RuleShift{}},
          InterferenceStrategy{strategy::RandomTarget{1}}}) {
        const auto out = apply_to_dataset(ds, s);
        EXPECT_EQ(out.pixels, ds.pixels);
        EXPECT_EQ(out.shape, ds.shape);
        EXPECT_EQ(out.class_count, ds.class_count);
        EXPECT_EQ(out.labels, relabel_all(ds.labels, 10, s));
    }
}

TEST(Strategy, ParseAndName) {
    EXPECT_EQ(parse_strategy("shift"), InterferenceStrategy{strategy::RuleShift{}});
    EXPECT_EQ(parse_strategy("single:7"), InterferenceStrategy{strategy::SingleTarget{7}});
    EXPECT_EQ(parse_strategy("random:123"), InterferenceStrategy{strategy::RandomTarget{123}});
    EXPECT_EQ(parse_strategy("random-exclude:4"), InterferenceStrategy(strategy::RandomTarget{4, true}));
    for (const char* text : {"shift", "single:0", "random:18446744073709551615", "random-exclude:0"}) {
        EXPECT_EQ(strategy_name(parse_strategy(text)), text);
    }
    for (const char* bad : {"", "single", "single:", "single:x", "single:-1", "single:70000", "random:1.5", "Shift",
                            "random:"}) {
        EXPECT_THROW(parse_strategy(bad), InvalidArgument) << bad;
    }
}

}  // namespace
