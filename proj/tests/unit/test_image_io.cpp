#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "leakscope/image_io.hpp"
#include "oracles.hpp"

using namespace leakscope;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("leakscope_io_" + name); }

RawImage rgb_image() {
  RawImage img;
  img.width = 7;
  img.height = 5;
  img.channels = 3;
  Rng rng(1);
  for (int i = 0; i < 105; ++i) img.samples.push_back(static_cast<std::uint8_t>(uniform_index(rng, 256)));
  return img;
}

}  // namespace

TEST(ImageIo, PngRoundTripGrayAndRgb) {
  const auto gray = oracle::random_plane(9, 4, 3);
  write_gray(temp_file("g.png"), gray);
  EXPECT_EQ(read_gray(temp_file("g.png")), gray);
  const auto rgb = rgb_image();
  write_image(temp_file("c.png"), rgb);
  const auto back = read_image(temp_file("c.png"));
  EXPECT_EQ(back.channels, 3);
  EXPECT_EQ(back.samples, rgb.samples);
}

TEST(ImageIo, PnmRoundTrip) {
  const auto gray = oracle::random_plane(6, 3, 4);
  write_gray(temp_file("g.pgm"), gray);
  EXPECT_EQ(read_gray(temp_file("g.pgm")), gray);
  const auto rgb = rgb_image();
  write_image(temp_file("c.ppm"), rgb);
  EXPECT_EQ(read_image(temp_file("c.ppm")).samples, rgb.samples);
}

TEST(ImageIo, PnmHeaderComments) {
  std::ofstream(temp_file("h.pgm"), std::ios::binary) << "P5\n# comment\n2 1\n255\n" << '\x05' << '\xfa';
  const auto img = read_gray(temp_file("h.pgm"));
  EXPECT_EQ(img(0, 0), 5);
  EXPECT_EQ(img(0, 1), 250);
}

TEST(ImageIo, PnmSixteenBitRejected) {
  std::ofstream(temp_file("w.pgm"), std::ios::binary) << "P5 1 1 65535\n" << '\0' << '\0';
  try {
    read_gray(temp_file("w.pgm"));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("bit depth"), std::string::npos);
  }
}

TEST(ImageIo, TruncatedPnm) {
  std::ofstream(temp_file("t.pgm"), std::ios::binary) << "P5 4 4 255\n" << "abc";
  EXPECT_THROW(read_gray(temp_file("t.pgm")), FormatError);
}

TEST(ImageIo, GrayscaleConversion) {
  RawImage img;
  img.width = 2;
  img.height = 1;
  img.channels = 3;
  img.samples = {255, 0, 0, 10, 20, 30};
  const auto g = to_grayscale(img);
  EXPECT_EQ(g(0, 0), 76);  // round(0.299 * 255)
  EXPECT_EQ(g(0, 1), 18);  // round(2.99 + 11.74 + 3.42)
}

TEST(ImageIo, UnknownExtension) {
  EXPECT_FALSE(is_image_path("a.txt"));
  EXPECT_TRUE(is_image_path("a.PNG"));
  EXPECT_THROW(read_image(temp_file("x.txt")), Error);
}

TEST(ImageIo, FixturesDecode) {
  const fs::path dir = fs::path(LEAKSCOPE_TEST_DATA) / "natural";
  std::size_t count = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!is_image_path(e.path())) continue;
    const auto img = read_image(e.path());
    EXPECT_EQ(img.width, 512u);
    EXPECT_EQ(img.height, 512u);
    ++count;
  }
  EXPECT_EQ(count, 10u);
}
