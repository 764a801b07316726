#pragma once

#include <gtest/gtest.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mlock/dataset.hpp"
#include "mlock/rng.hpp"

namespace mlock::testing {

inline std::filesystem::path scratch_dir(const std::string& tag) {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = tag;
    if (info) name += std::string("_") + info->test_suite_name() + "_" + info->name();
    for (auto& ch : name) {
        if (ch == '/') ch = '_';
    }
    const auto dir = std::filesystem::temp_directory_path() / "mlock_tests" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline LabeledDataset random_dataset(std::size_t n, ImageShape shape, std::size_t classes, std::uint64_t seed,
                                     std::string name = "rand") {
    LabeledDataset ds;
    ds.name = std::move(name);
    ds.class_count = classes;
    ds.shape = shape;
    Rng rng(seed);
    ds.pixels.resize(n * shape.pixels());
    for (auto& p : ds.pixels) p = static_cast<std::uint8_t>(rng.uniform_index(256));
    ds.labels.resize(n);
    for (auto& y : ds.labels) y = static_cast<std::uint16_t>(rng.uniform_index(classes));
    return ds;
}

inline LabeledDataset constant_dataset(std::size_t n, ImageShape shape, std::size_t classes, std::uint8_t value) {
    LabeledDataset ds;
    ds.name = "const";
    ds.class_count = classes;
    ds.shape = shape;
    ds.pixels.assign(n * shape.pixels(), value);
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<std::uint16_t>(i % classes);
    return ds;
}

}  // namespace mlock::testing
