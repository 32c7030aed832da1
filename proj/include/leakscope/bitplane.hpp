#pragma once

// Selective encryption of the s most significant bit-planes.
//
// Keystream bits come from ChaCha20 (zero nonce, counter from 0) keyed by a
// SplitMix64 expansion of the 64-bit seed. Bits are read MSB-first out of
// each keystream byte and assigned plane by plane: channel-major, then
// k = 7, 6, ..., 8-s, then row-major pixels.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "leakscope/chacha20.hpp"
#include "leakscope/error.hpp"
#include "leakscope/image.hpp"
#include "leakscope/random.hpp"

namespace leakscope {

enum class ShiftMode {
  MaskedLow,    // (p_E << s) >> s: top s bits zeroed
  ShiftedHigh,  // p_E << s: clear bits moved to the top
};

inline std::string to_string(ShiftMode mode) {
  return mode == ShiftMode::MaskedLow ? "masked" : "shifted";
}

inline ShiftMode parse_shift_mode(const std::string& text) {
  if (text == "masked" || text == "MaskedLow") return ShiftMode::MaskedLow;
  if (text == "shifted" || text == "ShiftedHigh") return ShiftMode::ShiftedHigh;
  throw InvalidArgument("unknown shift mode '" + text + "' (masked|shifted)");
}

struct EncryptionParams {
  int bits = 0;  // s, number of encrypted leading bits
  std::uint64_t seed = 0;
  ShiftMode mode = ShiftMode::MaskedLow;

  void validate() const {
    if (bits < 0 || bits > 8) {
      throw InvalidArgument("encrypted bit count must be in [0, 8], got " + std::to_string(bits));
    }
  }
};

inline ChaCha20::Key derive_key(std::uint64_t seed) {
  ChaCha20::Key key{};
  std::uint64_t state = seed;
  for (int i = 0; i < 4; ++i) {
    const std::uint64_t word = splitmix64(state);
    key[2 * i] = static_cast<std::uint32_t>(word);
    key[2 * i + 1] = static_cast<std::uint32_t>(word >> 32);
  }
  return key;
}

struct KeystreamOrigin {
  std::uint64_t seed = 0;
  ChaCha20::Nonce nonce{};
  std::uint32_t first_counter = 0;
};

class Keystream {
 public:
  Keystream() = default;

  Keystream(std::size_t width, std::size_t height, int bits, int channels,
            KeystreamOrigin origin, std::vector<std::uint8_t> bytes)
      : width_(width),
        height_(height),
        bits_(bits),
        channels_(channels),
        origin_(origin),
        bytes_(std::move(bytes)) {}

  std::size_t size() const noexcept {
    return width_ * height_ * static_cast<std::size_t>(bits_) * static_cast<std::size_t>(channels_);
  }
  bool empty() const noexcept { return size() == 0; }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  int bits() const noexcept { return bits_; }
  int channels() const noexcept { return channels_; }
  const KeystreamOrigin& origin() const noexcept { return origin_; }

  // Bit by flat index in consumption order.
  bool bit(std::size_t index) const { return (bytes_[index >> 3] >> (7 - (index & 7))) & 1u; }

  // Bit XORed into bit index k = 7 - plane of pixel (row, col) in `channel`.
  bool bit(int channel, int plane, std::size_t row, std::size_t col) const {
    const std::size_t p = static_cast<std::size_t>(channel) * static_cast<std::size_t>(bits_) +
                          static_cast<std::size_t>(plane);
    return bit((p * height_ + row) * width_ + col);
  }

  std::span<const std::uint8_t> bytes() const noexcept { return bytes_; }

  friend bool operator==(const Keystream& a, const Keystream& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.bits_ == b.bits_ &&
           a.channels_ == b.channels_ && a.bytes_ == b.bytes_;
  }

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  int bits_ = 0;
  int channels_ = 1;
  KeystreamOrigin origin_;
  std::vector<std::uint8_t> bytes_;
};

inline Keystream generate_keystream(std::size_t width, std::size_t height,
                                    const EncryptionParams& params, int channels = 1) {
  params.validate();
  if (width < 1 || height < 1) throw InvalidArgument("keystream needs a non-empty image");
  if (channels < 1) throw InvalidArgument("keystream needs at least one channel");
  const std::size_t nbits = width * height * static_cast<std::size_t>(params.bits) *
                            static_cast<std::size_t>(channels);
  KeystreamOrigin origin{params.seed, {}, 0};
  std::vector<std::uint8_t> bytes((nbits + 7) / 8);
  ChaCha20 cipher(derive_key(params.seed), origin.nonce, origin.first_counter);
  cipher.generate(bytes);
  return Keystream(width, height, params.bits, channels, origin, std::move(bytes));
}

// XORs bit-planes k = 7 .. 8-s of `img` with the keystream segment for `channel`.
inline ImagePlane apply_keystream(const ImagePlane& img, const Keystream& ks, int channel = 0) {
  if (ks.width() != img.width() || ks.height() != img.height()) {
    throw InvalidArgument("keystream dimensions do not match the image");
  }
  if (channel < 0 || channel >= ks.channels()) throw InvalidArgument("channel out of range");
  ImagePlane out = img;
  for (std::size_t row = 0; row < img.height(); ++row) {
    for (std::size_t col = 0; col < img.width(); ++col) {
      std::uint8_t mask = 0;
      for (int q = 0; q < ks.bits(); ++q) {
        if (ks.bit(channel, q, row, col)) mask |= static_cast<std::uint8_t>(1u << (7 - q));
      }
      out(row, col) ^= mask;
    }
  }
  return out;
}

inline ImagePlane encrypt(const ImagePlane& img, const EncryptionParams& params) {
  params.validate();
  if (params.bits == 0) return img;
  return apply_keystream(img, generate_keystream(img.width(), img.height(), params));
}

// XOR is an involution, so decryption replays the keystream.
inline ImagePlane decrypt(const ImagePlane& img, const EncryptionParams& params) {
  return encrypt(img, params);
}

inline std::uint8_t clear_part(std::uint8_t encrypted, int bits, ShiftMode mode) {
  if (bits >= 8) return 0;
  if (mode == ShiftMode::MaskedLow) return static_cast<std::uint8_t>(encrypted & (0xFFu >> bits));
  return static_cast<std::uint8_t>((static_cast<unsigned>(encrypted) << bits) & 0xFFu);
}

inline ImagePlane extract_clear(const ImagePlane& encrypted, const EncryptionParams& params) {
  params.validate();
  ImagePlane out = encrypted;
  for (auto& p : out.pixels()) p = clear_part(p, params.bits, params.mode);
  return out;
}

// Each channel takes the next segment of one continuous keystream.
inline std::vector<ImagePlane> encrypt_planes(std::span<const ImagePlane> planes,
                                              const EncryptionParams& params) {
  params.validate();
  if (planes.empty()) return {};
  std::vector<ImagePlane> out;
  out.reserve(planes.size());
  if (params.bits == 0) {
    out.assign(planes.begin(), planes.end());
    return out;
  }
  const auto ks = generate_keystream(planes[0].width(), planes[0].height(), params,
                                     static_cast<int>(planes.size()));
  for (std::size_t c = 0; c < planes.size(); ++c) {
    out.push_back(apply_keystream(planes[c], ks, static_cast<int>(c)));
  }
  return out;
}

inline RawImage encrypt_image(const RawImage& img, const EncryptionParams& params) {
  const auto planes = split_channels(img);
  const auto enc = encrypt_planes(planes, params);
  return merge_channels(enc);
}

inline RawImage decrypt_image(const RawImage& img, const EncryptionParams& params) {
  return encrypt_image(img, params);
}

}  // namespace leakscope
