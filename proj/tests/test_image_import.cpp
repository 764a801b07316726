#include <gtest/gtest.h>

#include <fstream>
#include <string>

#include "mlock/error.hpp"
#include "mlock/image_import.hpp"
#include "test_util.hpp"

namespace {

using namespace mlock;
using Bytes = std::vector<std::uint8_t>;

Bytes pnm(char kind, std::size_t w, std::size_t h, const Bytes& pixels, std::size_t maxval = 255) {
    const std::string head = std::string("P") + kind + "\n# comment\n" + std::to_string(w) + " " + std::to_string(h) +
                             "\n" + std::to_string(maxval) + "\n";
    Bytes b(head.begin(), head.end());
    b.insert(b.end(), pixels.begin(), pixels.end());
    return b;
}

void write_bytes(const std::filesystem::path& p, const Bytes& b) {
    std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

TEST(Pnm, ParsesGrayAndColor) {
    const auto g = parse_pnm(pnm('5', 3, 2, {1, 2, 3, 4, 5, 6}));
    EXPECT_EQ(g.shape, (ImageShape{2, 3, 1}));
    EXPECT_EQ(g.pixels, (Bytes{1, 2, 3, 4, 5, 6}));
    const auto c = parse_pnm(pnm('6', 1, 2, {10, 20, 30, 40, 50, 60}));
    EXPECT_EQ(c.shape, (ImageShape{2, 1, 3}));
    EXPECT_EQ(c.pixels[5], 60);
}

TEST(Pnm, RescalesSmallMaxval) {
    const auto g = parse_pnm(pnm('5', 2, 1, {15, 5}, 15));
    EXPECT_EQ(g.pixels, (Bytes{255, 85}));
}

TEST(Pnm, RejectsMalformedInput) {
    EXPECT_THROW(parse_pnm(pnm('2', 1, 1, {0})), FormatError);
    EXPECT_THROW(parse_pnm(pnm('5', 2, 2, {0, 0, 0})), FormatError);
    EXPECT_THROW(parse_pnm(pnm('5', 1, 1, {0}, 65535)), FormatError);
    EXPECT_THROW(parse_pnm(pnm('5', 0, 1, {})), FormatError);
    const std::string junk = "P5 x";
    EXPECT_THROW(parse_pnm(Bytes(junk.begin(), junk.end())), FormatError);
}

TEST(Resize, IdentityWhenSizeMatches) {
    Image img{{2, 3, 1}, {0, 10, 20, 30, 40, 50}};
    EXPECT_EQ(resize_bilinear(img, 2, 3).pixels, img.pixels);
}

TEST(Resize, ConstantImageStaysConstant) {
    Image img{{5, 7, 3}, Bytes(105, 123)};
    const auto out = resize_bilinear(img, 32, 32);
    EXPECT_EQ(out.shape, (ImageShape{32, 32, 3}));
    for (auto v : out.pixels) EXPECT_EQ(v, 123);
}

TEST(Resize, DownscaleByTwoAveragesBlocks) {
    Image img{{2, 2, 1}, {0, 100, 200, 60}};
    const auto out = resize_bilinear(img, 1, 1);
    EXPECT_EQ(out.pixels[0], 90);
}

TEST(Resize, UpscaleInterpolatesBetweenNeighbours) {
    Image img{{1, 2, 1}, {0, 200}};
    const auto out = resize_bilinear(img, 1, 4);
    EXPECT_EQ(out.pixels, (Bytes{0, 50, 150, 200}));
}

TEST(Channels, GrayToRgbReplicatesAndRgbToGrayUsesLuma) {
    Image g{{1, 1, 1}, {77}};
    EXPECT_EQ(convert_channels(g, 3).pixels, (Bytes{77, 77, 77}));
    Image c{{1, 1, 3}, {255, 0, 0}};
    EXPECT_EQ(convert_channels(c, 1).pixels, (Bytes{76}));
    EXPECT_THROW(convert_channels(c, 2), InvalidArgument);
}

TEST(Manifest, ImportsResizesAndLabels) {
    const auto dir = mlock::testing::scratch_dir("manifest");
    std::filesystem::create_directories(dir / "imgs");
    write_bytes(dir / "imgs" / "a.ppm", pnm('6', 2, 2, Bytes(12, 200)));
    write_bytes(dir / "imgs" / "b.pgm", pnm('5', 3, 3, Bytes(9, 40)));
    std::ofstream(dir / "GT.csv") << "Filename;Width;Height;ClassId\r\nimgs/a.ppm;2;2;42\r\nimgs/b.pgm;3;3;0\r\n";
    const auto ds = import_manifest(dir / "GT.csv", {4, 4, 3, 43}, "signs");
    EXPECT_EQ(ds.class_count, 43u);
    EXPECT_EQ(ds.shape, (ImageShape{4, 4, 3}));
    EXPECT_EQ(ds.labels, (std::vector<std::uint16_t>{42, 0}));
    EXPECT_EQ(ds.pixels.front(), 200);
    EXPECT_EQ(ds.pixels.back(), 40);
    EXPECT_NO_THROW(ds.validate());
}

TEST(Manifest, ReportsBadRows) {
    const auto dir = mlock::testing::scratch_dir("manifest_bad");
    write_bytes(dir / "a.pgm", pnm('5', 1, 1, {0}));
    std::ofstream(dir / "range.csv") << "Filename,ClassId\na.pgm,43\n";
    EXPECT_THROW(import_manifest(dir / "range.csv", {}), InvalidArgument);
    std::ofstream(dir / "header.csv") << "File,Class\na.pgm,1\n";
    EXPECT_THROW(import_manifest(dir / "header.csv", {}), FormatError);
    std::ofstream(dir / "missing.csv") << "Filename,ClassId\nnope.pgm,1\n";
    EXPECT_THROW(import_manifest(dir / "missing.csv", {}), IoError);
    EXPECT_THROW(import_manifest(dir / "absent.csv", {}), IoError);
}

}  // namespace
