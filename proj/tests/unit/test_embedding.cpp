#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "leakscope/embedding.hpp"
#include "oracles.hpp"

using namespace leakscope;

namespace {

EmbeddingSet sample_set(std::size_t n, std::size_t dim) {
  EmbeddingSet set;
  set.dim = dim;
  set.encoder_id = "test-encoder";
  set.source_image = "img.png";
  set.s_level = 3;
  set.patch_size = 224;
  set.seed = 12345678901234ull;
  set.extra["normalized"] = true;
  Rng rng(1);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<float> v(dim);
    for (auto& c : v) c = static_cast<float>(standard_normal(rng));
    set.vectors.push_back(std::move(v));
  }
  return set;
}

EmbeddingFileErrorKind decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_embeddings(bytes);
  } catch (const EmbeddingFileError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "decode succeeded";
  return EmbeddingFileErrorKind::Io;
}

}  // namespace

TEST(PatchCoords, InsideImageBounds) {
  const PatchSpec spec{224, 500, 7};
  const auto coords = sample_patch_coords(4000, 3000, spec);
  ASSERT_EQ(coords.size(), 500u);
  for (const auto& c : coords) {
    EXPECT_LE(c.x + c.side, 4000u);
    EXPECT_LE(c.y + c.side, 3000u);
    EXPECT_EQ(c.side, 224u);
  }
}

TEST(PatchCoords, FullImagePatch) {
  const auto coords = sample_patch_coords(224, 224, {224, 5, 1});
  for (const auto& c : coords) EXPECT_EQ(c, (PatchCoord{0, 0, 224}));
}

TEST(PatchCoords, TooSmallImageNamesSizes) {
  try {
    sample_patch_coords(100, 300, {224, 1, 1});
    FAIL() << "expected an exception";
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("100x300"), std::string::npos);
    EXPECT_NE(msg.find("224"), std::string::npos);
  }
}

TEST(PatchCoords, DeterministicPerSeed) {
  EXPECT_EQ(sample_patch_coords(500, 400, {32, 20, 3}), sample_patch_coords(500, 400, {32, 20, 3}));
  EXPECT_NE(sample_patch_coords(500, 400, {32, 20, 3}), sample_patch_coords(500, 400, {32, 20, 4}));
}

TEST(Patches, CropsMatchCoordinates) {
  const std::vector<ImagePlane> planes{oracle::random_plane(40, 30, 1)};
  const std::vector<PatchCoord> coords{{5, 7, 10}};
  const auto patches = extract_patches(planes, coords);
  ASSERT_EQ(patches.size(), 1u);
  EXPECT_EQ(patches[0][0](0, 0), planes[0](7, 5));
  EXPECT_EQ(patches[0][0](9, 9), planes[0](16, 14));
}

TEST(Encoder, ZeroPatchGivesZeroVector) {
  const BuiltinEncoder enc(1);
  const auto v = enc.encode(Patch{ImagePlane(32, 32)});
  ASSERT_EQ(v.size(), BuiltinEncoder::kOutputDim);
  for (float c : v) EXPECT_EQ(c, 0.0f);
}

TEST(Encoder, SensitiveToSinglePixel) {
  const BuiltinEncoder enc(1);
  auto img = oracle::random_plane(32, 32, 2);
  const auto a = enc.encode(Patch{img});
  img(16, 16) ^= 0x80;
  const auto b = enc.encode(Patch{img});
  EXPECT_NE(a, b);
}

TEST(Encoder, GrayEqualsReplicatedRgb) {
  const BuiltinEncoder enc(3);
  const auto img = oracle::random_plane(24, 24, 4);
  EXPECT_EQ(enc.encode(Patch{img}), enc.encode(Patch{img, img, img}));
}

TEST(Encoder, RejectsTinyOrNonSquarePatches) {
  const BuiltinEncoder enc(1);
  EXPECT_THROW(enc.encode(Patch{ImagePlane(4, 4)}), InvalidArgument);
  EXPECT_THROW(enc.encode(Patch{ImagePlane(16, 12)}), InvalidArgument);
}

TEST(Cosine, KnownAngle) {
  const std::vector<double> u{1, 0}, v{1, 1};
  EXPECT_NEAR(cosine_similarity(u, v), 0.7071068, 1e-7);
  EXPECT_DOUBLE_EQ(cosine_similarity(u, u), 1.0);
  const std::vector<double> z{0, 0};
  EXPECT_THROW(cosine_similarity(u, z), InvalidArgument);
}

TEST(Lke, RoundTripIsBitExact) {
  const auto set = sample_set(7, 13);
  EXPECT_TRUE(decode_embeddings(encode_embeddings(set)) == set);
  const auto path = std::filesystem::temp_directory_path() / "leakscope_test.lke";
  write_embeddings(set, path);
  EXPECT_TRUE(read_embeddings(path) == set);
  std::filesystem::remove(path);
}

TEST(Lke, PayloadSize) {
  const auto set = sample_set(50, 512);
  const auto bytes = encode_embeddings(set);
  const std::size_t meta_len = bytes[16] | bytes[17] << 8 | bytes[18] << 16 | bytes[19] << 24;
  EXPECT_EQ(bytes.size() - kLkeHeaderSize - meta_len, 102400u);
}

TEST(Lke, CorruptionCategories) {
  const auto good = encode_embeddings(sample_set(4, 8));
  auto bad = good;
  bad[0] = 'X';
  EXPECT_EQ(decode_error(bad), EmbeddingFileErrorKind::BadMagic);
  bad = good;
  bad[4] = 2;
  EXPECT_EQ(decode_error(bad), EmbeddingFileErrorKind::UnsupportedVersion);
  bad = good;
  bad[6] = 1;
  EXPECT_EQ(decode_error(bad), EmbeddingFileErrorKind::UnsupportedDtype);
  EXPECT_EQ(decode_error({good.begin(), good.begin() + 10}), EmbeddingFileErrorKind::TruncatedHeader);
  bad = good;
  bad[kLkeHeaderSize] = '[';
  EXPECT_EQ(decode_error(bad), EmbeddingFileErrorKind::BadMetadata);
  EXPECT_EQ(decode_error({good.begin(), good.end() - 1}), EmbeddingFileErrorKind::TruncatedPayload);
  bad = good;
  bad.insert(bad.end(), {0, 0, 0, 0});
  EXPECT_EQ(decode_error(bad), EmbeddingFileErrorKind::DimensionMismatch);
}

TEST(Lke, TruncatedPayloadMessage) {
  const auto good = encode_embeddings(sample_set(2, 4));
  try {
    decode_embeddings(std::vector<std::uint8_t>(good.begin(), good.end() - 3));
    FAIL();
  } catch (const EmbeddingFileError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("truncated payload", 0), 0u);
  }
}

TEST(Lke, MissingFileIsIoError) {
  try {
    read_embeddings("/nonexistent/leakscope.lke");
    FAIL();
  } catch (const EmbeddingFileError& e) {
    EXPECT_EQ(e.kind(), EmbeddingFileErrorKind::Io);
  }
}

TEST(EmbedPatches, MetadataAndSimilarity) {
  const BuiltinEncoder enc(5);
  const std::vector<ImagePlane> planes{oracle::random_plane(64, 64, 8)};
  const auto patches = sample_patches(planes, {32, 6, 2});
  const auto set = embed_patches(patches, enc, "x.png", 0, 32);
  EXPECT_EQ(set.size(), 6u);
  EXPECT_EQ(set.encoder_id, BuiltinEncoder::kId);
  EXPECT_EQ(set.extra["channel_rule"], "gray-replicated");
  EXPECT_DOUBLE_EQ(mean_patch_similarity(set, set), 1.0);
}

TEST(Manifest, Layout) {
  const std::vector<ManifestEntry> entries{{"a.png", {{1, 2, 32}, {3, 4, 32}}}};
  const auto j = coordinate_manifest({32, 2, 9}, entries);
  EXPECT_EQ(j["patch_size"], 32);
  EXPECT_EQ(j["seed"], 9);
  EXPECT_EQ(j["images"][0]["image"], "a.png");
  EXPECT_EQ(j["images"][0]["patches"][1], nlohmann::json({3, 4, 32}));
}
