#include <gtest/gtest.h>

#include <filesystem>
#include <string>
#include <vector>

#include "mlock/checkpoint.hpp"
#include "mlock/error.hpp"
#include "mlock/train.hpp"

namespace {

using namespace mlock;
namespace fs = std::filesystem;

Checkpoint sample_checkpoint(const NetworkSpec& spec, std::uint64_t seed) {
    Digest d{};
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<std::uint8_t>(i * 7 + seed);
    return {spec, init_parameters<float>(spec, seed), {seed, 30, d}};
}

fs::path temp_dir() {
    const auto dir = fs::temp_directory_path() / ("mlock_ckpt_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
    fs::create_directories(dir);
    return dir;
}

TEST(Checkpoint, ExactByteLayoutOfTinyNetwork) {
    const NetworkSpec spec{{1}, {layer::Dense{1, 2}}, 2};
    Checkpoint ckpt{spec, {{Tensor<float>({2, 1}, std::vector<float>{1.0f, -2.0f}), Tensor<float>({2}, std::vector<float>{0.5f, 0.0f})}}, {}};
    ckpt.metadata.seed = 0x0102030405060708ULL;
    ckpt.metadata.epochs = 3;
    const auto bytes = serialize_checkpoint(ckpt);
    const std::vector<std::uint8_t> head{'M', 'L', 'C', 'K', 1, 0,  // magic, version
                                         2, 0, 0, 0,                // class count
                                         1, 0, 0, 0, 1, 0, 0, 0,    // input rank 1, dim 1
                                         1, 0, 0, 0,                // one layer
                                         1, 1, 0, 0, 0, 2, 0, 0, 0,  // Dense(1, 2)
                                         0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0,  // 1.0f, -2.0f
                                         0x00, 0x00, 0x00, 0x3f, 0x00, 0x00, 0x00, 0x00,  // 0.5f, 0.0f
                                         8, 7, 6, 5, 4, 3, 2, 1, 3, 0, 0, 0};
    ASSERT_EQ(bytes.size(), head.size() + 32);
    EXPECT_TRUE(std::equal(head.begin(), head.end(), bytes.begin()));
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
    for (const auto& spec : {mlp_mini(), cnn_mini(), cnn_preset({3, 32, 32}, 43, 4, 8)}) {
        const auto ckpt = sample_checkpoint(spec, 9);
        const auto bytes = serialize_checkpoint(ckpt);
        const auto back = deserialize_checkpoint(bytes);
        EXPECT_EQ(back, ckpt);
        EXPECT_EQ(serialize_checkpoint(back), bytes);
    }
}

TEST(Checkpoint, FileRoundTripPreservesDigest) {
    const auto dir = temp_dir();
    const auto ckpt = sample_checkpoint(mlp_preset({1, 28, 28}, 10, 32, 2), 4);
    save_checkpoint(ckpt, dir / "a.mlck");
    const auto back = load_checkpoint(dir / "a.mlck");
    EXPECT_EQ(checkpoint_digest(back), checkpoint_digest(ckpt));
    EXPECT_FALSE(fs::exists(dir / "a.mlck.tmp"));
    fs::remove_all(dir);
}

TEST(Checkpoint, WrongMagicIsNotACheckpoint) {
    auto bytes = serialize_checkpoint(sample_checkpoint(mlp_mini(), 1));
    bytes[0] = 'X';
    try {
        deserialize_checkpoint(bytes);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("not a checkpoint"), std::string::npos);
        EXPECT_EQ(e.offset(), 0u);
    }
}

TEST(Checkpoint, UnsupportedVersionReportsItsOffset) {
    auto bytes = serialize_checkpoint(sample_checkpoint(mlp_mini(), 1));
    bytes[4] = 2;
    try {
        deserialize_checkpoint(bytes);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), 4u);
    }
}

TEST(Checkpoint, TruncationReportsOffsetOfMissingField) {
    const auto full = serialize_checkpoint(sample_checkpoint(mlp_mini(), 1));
    // cut inside the 32-byte digest: the failed read starts where the digest does
    std::vector<std::uint8_t> cut(full.begin(), full.end() - 10);
    try {
        deserialize_checkpoint(cut);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), full.size() - 32);
    }
    // cut inside the parameters: detected before any parameter is read
    const std::size_t spec_end = serialize_spec(mlp_mini()).size() + 6;
    std::vector<std::uint8_t> cut2(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(spec_end + 100));
    try {
        deserialize_checkpoint(cut2);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), spec_end);
    }
    // every prefix is rejected
    for (std::size_t n = 0; n < full.size(); n += 97) {
        EXPECT_THROW(deserialize_checkpoint(std::span(full.data(), n)), FormatError) << n;
    }
}

TEST(Checkpoint, TrailingBytesAndBadLayersAreRejected) {
    auto bytes = serialize_checkpoint(sample_checkpoint(mlp_mini(), 1));
    bytes.push_back(0);
    EXPECT_THROW(deserialize_checkpoint(bytes), FormatError);

    const NetworkSpec spec{{1}, {layer::Dense{1, 2}}, 2};
    auto tiny = serialize_checkpoint(sample_checkpoint(spec, 0));
    tiny[22] = 9;  // layer tag
    EXPECT_THROW(deserialize_checkpoint(tiny), FormatError);
    tiny[22] = 1;
    tiny[27] = 3;  // Dense out = 3, no longer matches class count
    EXPECT_THROW(deserialize_checkpoint(tiny), FormatError);
}

TEST(Checkpoint, MissingFileIsIoError) {
    EXPECT_THROW(load_checkpoint("/nonexistent/dir/x.mlck"), IoError);
    EXPECT_THROW(save_checkpoint(sample_checkpoint(mlp_mini(), 0), "/nonexistent/dir/x.mlck"), IoError);
}

}  // namespace
