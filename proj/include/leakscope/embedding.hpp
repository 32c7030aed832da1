#pragma once

// Patch sampling, the frozen built-in convolutional encoder, embedding-space
// metrics and the LKE1 embedding file format.

#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "leakscope/error.hpp"
#include "leakscope/image.hpp"
#include "leakscope/random.hpp"

namespace leakscope {

struct PatchSpec {
  std::size_t patch_size = 224;
  std::size_t n_patches = 50;
  std::uint64_t seed = 0;

  void validate() const {
    if (patch_size < 1) throw InvalidArgument("patch size must be at least 1");
    if (n_patches < 1) throw InvalidArgument("need at least one patch");
  }
};

struct PatchCoord {
  std::size_t x = 0;  // column of the top-left corner
  std::size_t y = 0;  // row of the top-left corner
  std::size_t side = 0;

  friend bool operator==(const PatchCoord&, const PatchCoord&) = default;
};

// Uniform random top-left corners. The same list is applied to the plain
// image and to its encrypted counterpart.
inline std::vector<PatchCoord> sample_patch_coords(std::size_t width, std::size_t height,
                                                   const PatchSpec& spec) {
  spec.validate();
  if (width < spec.patch_size || height < spec.patch_size) {
    throw InvalidArgument("image " + std::to_string(width) + "x" + std::to_string(height) +
                          " is smaller than the patch size " + std::to_string(spec.patch_size) + "x" +
                          std::to_string(spec.patch_size));
  }
  Rng rng(spec.seed);
  std::vector<PatchCoord> coords;
  coords.reserve(spec.n_patches);
  for (std::size_t i = 0; i < spec.n_patches; ++i) {
    const auto x = static_cast<std::size_t>(uniform_index(rng, width - spec.patch_size + 1));
    const auto y = static_cast<std::size_t>(uniform_index(rng, height - spec.patch_size + 1));
    coords.push_back({x, y, spec.patch_size});
  }
  return coords;
}

// A patch is one plane per channel (1 or 3), all square and equally sized.
using Patch = std::vector<ImagePlane>;

inline std::vector<Patch> extract_patches(std::span<const ImagePlane> channels,
                                          std::span<const PatchCoord> coords) {
  std::vector<Patch> patches;
  patches.reserve(coords.size());
  for (const auto& c : coords) {
    Patch p;
    for (const auto& plane : channels) p.push_back(crop(plane, c.y, c.x, c.side, c.side));
    patches.push_back(std::move(p));
  }
  return patches;
}

inline std::vector<Patch> sample_patches(std::span<const ImagePlane> channels, const PatchSpec& spec) {
  if (channels.empty()) throw InvalidArgument("image has no channels");
  const auto coords = sample_patch_coords(channels[0].width(), channels[0].height(), spec);
  return extract_patches(channels, coords);
}

// Three frozen 3x3 stride-2 convolutions (zero padding 1) with 16, 32 and 64
// output channels, ReLU after each, then a global average pool. Weights are
// He-uniform draws from the seed; biases are zero. Grayscale input is
// replicated to three channels.
class BuiltinEncoder {
 public:
  static constexpr std::array<std::size_t, 4> kChannels{3, 16, 32, 64};
  static constexpr std::size_t kOutputDim = 64;
  static constexpr std::size_t kMinSide = 8;
  static constexpr const char* kId = "builtin-conv-v1";

  explicit BuiltinEncoder(std::uint64_t seed = 0) : seed_(seed) {
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < kChannels.size(); ++l) {
      const std::size_t fan_in = kChannels[l] * 9;
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
      std::vector<float> w(kChannels[l + 1] * fan_in);
      for (auto& v : w) v = static_cast<float>(uniform_real(rng, -limit, limit));
      weights_.push_back(std::move(w));
    }
  }

  std::uint64_t seed() const noexcept { return seed_; }

  std::vector<float> encode(const Patch& patch) const {
    if (patch.size() != 1 && patch.size() != 3) throw InvalidArgument("patch must have 1 or 3 channels");
    const std::size_t side = patch[0].width();
    for (const auto& p : patch) {
      if (p.width() != side || p.height() != side) throw InvalidArgument("patch must be square");
    }
    if (side < kMinSide) {
      throw InvalidArgument("patch side " + std::to_string(side) + " is below the encoder minimum of " +
                            std::to_string(kMinSide));
    }
    // CHW, scaled to [0, 1].
    std::vector<float> act(3 * side * side);
    for (std::size_t c = 0; c < 3; ++c) {
      const auto px = patch[patch.size() == 1 ? 0 : c].pixels();
      for (std::size_t i = 0; i < px.size(); ++i) act[c * side * side + i] = px[i] / 255.0f;
    }
    std::size_t size = side;
    for (std::size_t l = 0; l + 1 < kChannels.size(); ++l) {
      act = conv_relu(act, size, kChannels[l], kChannels[l + 1], weights_[l]);
      size = (size + 1) / 2;
    }
    std::vector<float> out(kOutputDim, 0.0f);
    const std::size_t area = size * size;
    for (std::size_t c = 0; c < kOutputDim; ++c) {
      double sum = 0.0;
      for (std::size_t i = 0; i < area; ++i) sum += act[c * area + i];
      out[c] = static_cast<float>(sum / static_cast<double>(area));
    }
    return out;
  }

 private:
  static std::vector<float> conv_relu(const std::vector<float>& in, std::size_t side, std::size_t cin,
                                      std::size_t cout, const std::vector<float>& w) {
    const std::size_t out_side = (side + 1) / 2;
    std::vector<float> out(cout * out_side * out_side, 0.0f);
    for (std::size_t o = 0; o < cout; ++o) {
      for (std::size_t oy = 0; oy < out_side; ++oy) {
        for (std::size_t ox = 0; ox < out_side; ++ox) {
          float acc = 0.0f;
          for (std::size_t i = 0; i < cin; ++i) {
            const float* kernel = &w[(o * cin + i) * 9];
            const float* plane = &in[i * side * side];
            for (std::size_t ky = 0; ky < 3; ++ky) {
              const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(2 * oy + ky) - 1;
              if (y < 0 || y >= static_cast<std::ptrdiff_t>(side)) continue;
              for (std::size_t kx = 0; kx < 3; ++kx) {
                const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(2 * ox + kx) - 1;
                if (x < 0 || x >= static_cast<std::ptrdiff_t>(side)) continue;
                acc += kernel[ky * 3 + kx] * plane[static_cast<std::size_t>(y) * side + static_cast<std::size_t>(x)];
              }
            }
          }
          out[(o * out_side + oy) * out_side + ox] = std::max(acc, 0.0f);
        }
      }
    }
    return out;
  }

  std::uint64_t seed_;
  std::vector<std::vector<float>> weights_;
};

inline std::vector<float> encode_builtin(const Patch& patch, const BuiltinEncoder& encoder) {
  return encoder.encode(patch);
}

template <typename A, typename B>
double cosine_similarity(const A& u, const B& v) {
  if (std::ranges::size(u) != std::ranges::size(v)) throw InvalidArgument("vector dimensions differ");
  double dot = 0.0, uu = 0.0, vv = 0.0;
  auto iu = std::ranges::begin(u);
  auto iv = std::ranges::begin(v);
  for (; iu != std::ranges::end(u); ++iu, ++iv) {
    const auto a = static_cast<double>(*iu);
    const auto b = static_cast<double>(*iv);
    dot += a * b;
    uu += a * a;
    vv += b * b;
  }
  if (uu == 0.0 || vv == 0.0) throw InvalidArgument("cosine similarity of a zero-norm vector");
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

struct EmbeddingSet {
  std::size_t dim = 0;
  std::vector<std::vector<float>> vectors;
  std::string encoder_id;
  std::string source_image;
  int s_level = 0;
  std::size_t patch_size = 0;
  std::uint64_t seed = 0;
  // Any further metadata keys (normalisation state, channel rule, ...).
  nlohmann::json extra = nlohmann::json::object();

  std::size_t size() const noexcept { return vectors.size(); }

  void validate() const {
    for (const auto& v : vectors) {
      if (v.size() != dim) throw InvalidArgument("embedding vector length differs from dim");
      for (float c : v) {
        if (!std::isfinite(c)) throw InvalidArgument("non-finite embedding component");
      }
    }
  }

  friend bool operator==(const EmbeddingSet& a, const EmbeddingSet& b) {
    if (a.dim != b.dim || a.encoder_id != b.encoder_id || a.source_image != b.source_image ||
        a.s_level != b.s_level || a.patch_size != b.patch_size || a.seed != b.seed || a.extra != b.extra ||
        a.vectors.size() != b.vectors.size()) {
      return false;
    }
    // Bitwise payload comparison.
    for (std::size_t i = 0; i < a.vectors.size(); ++i) {
      if (a.vectors[i].size() != b.vectors[i].size() ||
          std::memcmp(a.vectors[i].data(), b.vectors[i].data(), a.vectors[i].size() * sizeof(float)) != 0) {
        return false;
      }
    }
    return true;
  }
};

struct SimilarityPoint {
  int bits = 0;
  double mean = 0.0;
};

inline double mean_patch_similarity(const EmbeddingSet& plain, const EmbeddingSet& encrypted) {
  if (plain.size() != encrypted.size() || plain.size() == 0) {
    throw InvalidArgument("embedding sets are not patch-aligned");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < plain.size(); ++i) sum += cosine_similarity(plain.vectors[i], encrypted.vectors[i]);
  return sum / static_cast<double>(plain.size());
}

struct EmbeddingPair {
  int bits = 0;
  EmbeddingSet plain;
  EmbeddingSet encrypted;
};

inline std::vector<SimilarityPoint> similarity_curve(std::span<const EmbeddingPair> pairs) {
  std::vector<SimilarityPoint> curve;
  curve.reserve(pairs.size());
  for (const auto& p : pairs) curve.push_back({p.bits, mean_patch_similarity(p.plain, p.encrypted)});
  return curve;
}

// ---------------------------------------------------------------------------
// LKE1 file format, little-endian:
//   "LKE1" | u16 version=1 | u8 dtype=0 (float32) | u8 reserved=0 |
//   u32 n_vectors | u32 dim | u32 metadata_length | metadata (UTF-8 JSON) |
//   n_vectors * dim float32 payload

enum class EmbeddingFileErrorKind {
  Io,
  BadMagic,
  UnsupportedVersion,
  UnsupportedDtype,
  TruncatedHeader,
  BadMetadata,
  TruncatedPayload,
  DimensionMismatch,
};

inline const char* to_string(EmbeddingFileErrorKind kind) {
  switch (kind) {
    case EmbeddingFileErrorKind::Io: return "io error";
    case EmbeddingFileErrorKind::BadMagic: return "bad magic";
    case EmbeddingFileErrorKind::UnsupportedVersion: return "unsupported version";
    case EmbeddingFileErrorKind::UnsupportedDtype: return "unsupported dtype";
    case EmbeddingFileErrorKind::TruncatedHeader: return "truncated header";
    case EmbeddingFileErrorKind::BadMetadata: return "bad metadata";
    case EmbeddingFileErrorKind::TruncatedPayload: return "truncated payload";
    case EmbeddingFileErrorKind::DimensionMismatch: return "dimension mismatch";
  }
  return "?";
}

class EmbeddingFileError : public FormatError {
 public:
  EmbeddingFileError(EmbeddingFileErrorKind kind, const std::string& detail)
      : FormatError(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

  EmbeddingFileErrorKind kind() const noexcept { return kind_; }

 private:
  EmbeddingFileErrorKind kind_;
};

inline constexpr std::array<char, 4> kLkeMagic{'L', 'K', 'E', '1'};
inline constexpr std::uint16_t kLkeVersion = 1;
inline constexpr std::size_t kLkeHeaderSize = 4 + 2 + 1 + 1 + 4 + 4 + 4;

namespace detail {

inline void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_le(std::span<const std::uint8_t> in, std::size_t pos, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in[pos + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

}  // namespace detail

inline nlohmann::json embedding_metadata(const EmbeddingSet& set) {
  nlohmann::json meta = set.extra;
  meta["encoder_id"] = set.encoder_id;
  meta["source_image"] = set.source_image;
  meta["s_level"] = set.s_level;
  meta["patch_size"] = set.patch_size;
  meta["seed"] = set.seed;
  return meta;
}

inline std::vector<std::uint8_t> encode_embeddings(const EmbeddingSet& set) {
  for (const auto& v : set.vectors) {
    if (v.size() != set.dim) {
      throw EmbeddingFileError(EmbeddingFileErrorKind::DimensionMismatch,
                               "vector of length " + std::to_string(v.size()) + " in a set of dim " +
                                   std::to_string(set.dim));
    }
  }
  const std::string meta = embedding_metadata(set).dump();
  std::vector<std::uint8_t> out;
  out.reserve(kLkeHeaderSize + meta.size() + set.vectors.size() * set.dim * 4);
  out.insert(out.end(), kLkeMagic.begin(), kLkeMagic.end());
  detail::put_le(out, kLkeVersion, 2);
  detail::put_le(out, 0, 1);  // dtype float32
  detail::put_le(out, 0, 1);  // reserved
  detail::put_le(out, set.vectors.size(), 4);
  detail::put_le(out, set.dim, 4);
  detail::put_le(out, meta.size(), 4);
  out.insert(out.end(), meta.begin(), meta.end());
  for (const auto& v : set.vectors) {
    for (float c : v) detail::put_le(out, std::bit_cast<std::uint32_t>(c), 4);
  }
  return out;
}

inline EmbeddingSet decode_embeddings(std::span<const std::uint8_t> bytes) {
  using Kind = EmbeddingFileErrorKind;
  if (bytes.size() < 4 || !std::equal(kLkeMagic.begin(), kLkeMagic.end(), bytes.begin())) {
    throw EmbeddingFileError(Kind::BadMagic, "expected \"LKE1\"");
  }
  if (bytes.size() < kLkeHeaderSize) throw EmbeddingFileError(Kind::TruncatedHeader, "header is incomplete");
  const auto version = detail::get_le(bytes, 4, 2);
  if (version != kLkeVersion) {
    throw EmbeddingFileError(Kind::UnsupportedVersion, "version " + std::to_string(version));
  }
  const auto dtype = detail::get_le(bytes, 6, 1);
  if (dtype != 0) throw EmbeddingFileError(Kind::UnsupportedDtype, "dtype " + std::to_string(dtype));
  const auto n = static_cast<std::size_t>(detail::get_le(bytes, 8, 4));
  const auto dim = static_cast<std::size_t>(detail::get_le(bytes, 12, 4));
  const auto meta_len = static_cast<std::size_t>(detail::get_le(bytes, 16, 4));
  if (bytes.size() - kLkeHeaderSize < meta_len) {
    throw EmbeddingFileError(Kind::TruncatedHeader, "metadata runs past end of file");
  }
  if (n > 0 && dim == 0) throw EmbeddingFileError(Kind::DimensionMismatch, "vectors of dimension 0");

  EmbeddingSet set;
  set.dim = dim;
  try {
    const auto* meta_begin = reinterpret_cast<const char*>(bytes.data() + kLkeHeaderSize);
    nlohmann::json meta = nlohmann::json::parse(meta_begin, meta_begin + meta_len);
    if (!meta.is_object()) throw EmbeddingFileError(Kind::BadMetadata, "metadata is not a JSON object");
    set.encoder_id = meta.at("encoder_id").get<std::string>();
    set.source_image = meta.at("source_image").get<std::string>();
    set.s_level = meta.at("s_level").get<int>();
    set.patch_size = meta.at("patch_size").get<std::size_t>();
    set.seed = meta.at("seed").get<std::uint64_t>();
    for (const char* key : {"encoder_id", "source_image", "s_level", "patch_size", "seed"}) meta.erase(key);
    set.extra = std::move(meta);
  } catch (const nlohmann::json::exception& e) {
    throw EmbeddingFileError(Kind::BadMetadata, e.what());
  }

  const std::size_t payload_pos = kLkeHeaderSize + meta_len;
  const std::size_t payload = bytes.size() - payload_pos;
  const std::size_t expected = n * dim * 4;
  if (payload < expected) {
    throw EmbeddingFileError(Kind::TruncatedPayload, "payload has " + std::to_string(payload) + " of " +
                                                         std::to_string(expected) + " bytes");
  }
  if (payload > expected) {
    throw EmbeddingFileError(Kind::DimensionMismatch, std::to_string(payload - expected) +
                                                          " bytes beyond " + std::to_string(n) + " x " +
                                                          std::to_string(dim) + " payload");
  }
  set.vectors.assign(n, std::vector<float>(dim));
  std::size_t pos = payload_pos;
  for (auto& v : set.vectors) {
    for (auto& c : v) {
      c = std::bit_cast<float>(static_cast<std::uint32_t>(detail::get_le(bytes, pos, 4)));
      pos += 4;
    }
  }
  return set;
}

inline void write_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
  const auto bytes = encode_embeddings(set);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EmbeddingFileError(EmbeddingFileErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw EmbeddingFileError(EmbeddingFileErrorKind::Io, "cannot write " + path.string());
}

inline EmbeddingSet read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EmbeddingFileError(EmbeddingFileErrorKind::Io, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_embeddings(bytes);
}

// Embeds every patch with the built-in encoder.
inline EmbeddingSet embed_patches(const std::vector<Patch>& patches, const BuiltinEncoder& encoder,
                                  const std::string& source_image, int s_level, std::size_t patch_size) {
  EmbeddingSet set;
  set.dim = BuiltinEncoder::kOutputDim;
  set.encoder_id = BuiltinEncoder::kId;
  set.source_image = source_image;
  set.s_level = s_level;
  set.patch_size = patch_size;
  set.seed = encoder.seed();
  set.extra["normalized"] = false;
  if (!patches.empty()) set.extra["channel_rule"] = patches[0].size() == 1 ? "gray-replicated" : "rgb";
  set.vectors.reserve(patches.size());
  for (const auto& p : patches) set.vectors.push_back(encoder.encode(p));
  return set;
}

// Coordinate manifest consumed by external feature exporters:
// {"patch_size": N, "seed": S, "images": [{"image": path, "patches": [[x, y, side], ...]}]}
struct ManifestEntry {
  std::string image;
  std::vector<PatchCoord> patches;
};

inline nlohmann::json coordinate_manifest(const PatchSpec& spec, std::span<const ManifestEntry> entries) {
  nlohmann::json images = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json coords = nlohmann::json::array();
    for (const auto& c : e.patches) coords.push_back({c.x, c.y, c.side});
    images.push_back({{"image", e.image}, {"patches", coords}});
  }
  return {{"patch_size", spec.patch_size}, {"seed", spec.seed}, {"images", images}};
}

}  // namespace leakscope
