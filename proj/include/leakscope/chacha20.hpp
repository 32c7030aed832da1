#pragma once

// ChaCha20 block function (RFC 8439 layout: 4 constant words, 8 key words,
// 1 counter word, 3 nonce words) used as a deterministic keystream source.

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>

namespace leakscope {

class ChaCha20 {
 public:
  using Key = std::array<std::uint32_t, 8>;
  using Nonce = std::array<std::uint32_t, 3>;

  explicit ChaCha20(const Key& key, const Nonce& nonce = {}, std::uint32_t counter = 0)
      : counter_(counter) {
    state_[0] = 0x61707865u;
    state_[1] = 0x3320646eu;
    state_[2] = 0x79622d32u;
    state_[3] = 0x6b206574u;
    for (int i = 0; i < 8; ++i) state_[4 + i] = key[i];
    state_[12] = counter;
    for (int i = 0; i < 3; ++i) state_[13 + i] = nonce[i];
  }

  // Serialised (little-endian) 64-byte block for the given counter.
  std::array<std::uint8_t, 64> block(std::uint32_t counter) const {
    std::array<std::uint32_t, 16> x = state_;
    x[12] = counter;
    const std::array<std::uint32_t, 16> input = x;
    for (int round = 0; round < 10; ++round) {
      quarter(x, 0, 4, 8, 12);
      quarter(x, 1, 5, 9, 13);
      quarter(x, 2, 6, 10, 14);
      quarter(x, 3, 7, 11, 15);
      quarter(x, 0, 5, 10, 15);
      quarter(x, 1, 6, 11, 12);
      quarter(x, 2, 7, 8, 13);
      quarter(x, 3, 4, 9, 14);
    }
    std::array<std::uint8_t, 64> out{};
    for (int i = 0; i < 16; ++i) {
      const std::uint32_t w = x[i] + input[i];
      out[4 * i + 0] = static_cast<std::uint8_t>(w);
      out[4 * i + 1] = static_cast<std::uint8_t>(w >> 8);
      out[4 * i + 2] = static_cast<std::uint8_t>(w >> 16);
      out[4 * i + 3] = static_cast<std::uint8_t>(w >> 24);
    }
    return out;
  }

  // Fills `out` with consecutive keystream bytes, advancing the counter.
  void generate(std::span<std::uint8_t> out) {
    std::size_t pos = 0;
    while (pos < out.size()) {
      const auto b = block(counter_++);
      const std::size_t n = std::min<std::size_t>(64, out.size() - pos);
      for (std::size_t i = 0; i < n; ++i) out[pos + i] = b[i];
      pos += n;
    }
  }

 private:
  static constexpr std::uint32_t rotl(std::uint32_t v, int c) {
    return (v << c) | (v >> (32 - c));
  }

  static void quarter(std::array<std::uint32_t, 16>& x, int a, int b, int c, int d) {
    x[a] += x[b]; x[d] ^= x[a]; x[d] = rotl(x[d], 16);
    x[c] += x[d]; x[b] ^= x[c]; x[b] = rotl(x[b], 12);
    x[a] += x[b]; x[d] ^= x[a]; x[d] = rotl(x[d], 8);
    x[c] += x[d]; x[b] ^= x[c]; x[b] = rotl(x[b], 7);
  }

  std::array<std::uint32_t, 16> state_{};
  std::uint32_t counter_ = 0;
};

}  // namespace leakscope
