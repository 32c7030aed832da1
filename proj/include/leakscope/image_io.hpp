#pragma once

// PNG (via libpng) and binary PGM/PPM codecs. Only lossless formats are
// written, so ciphertext bits survive a round trip through disk.

#include <png.h>

#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>
#include <vector>

#include "leakscope/error.hpp"
#include "leakscope/image.hpp"

namespace leakscope {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return ext;
}

// libpng reports through callbacks; keep the message for the exception
// instead of letting the default handler print it.
struct PngMessage {
  char text[200] = {};
};

inline void png_error_to_buffer(png_structp png, png_const_charp message) {
  if (auto* m = static_cast<PngMessage*>(png_get_error_ptr(png))) {
    std::snprintf(m->text, sizeof m->text, "%s", message ? message : "");
  }
  png_longjmp(png, 1);
}

inline void png_ignore_warning(png_structp, png_const_charp) {}

inline RawImage read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw FormatError("cannot open " + path.string());

  PngMessage message;
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_to_buffer, png_ignore_warning);
  if (!png) throw FormatError("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw FormatError("libpng initialisation failed");
  }

  RawImage img;
  std::string failure;
  std::vector<png_bytep> rows;
  // Nothing with a non-trivial destructor may be constructed between setjmp
  // and the last libpng call.
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("corrupt PNG: " + path.string() + (message.text[0] ? std::string(" (") + message.text + ")" : ""));
  }
  png_init_io(png, file.get());
  png_read_info(png, info);

  png_uint_32 width = 0, height = 0;
  int bit_depth = 0, color_type = 0;
  png_get_IHDR(png, info, &width, &height, &bit_depth, &color_type, nullptr, nullptr, nullptr);

  if (bit_depth != 8) {
    failure = "unsupported bit depth: " + std::to_string(bit_depth) + " in " + path.string();
  } else if (color_type == PNG_COLOR_TYPE_GRAY) {
    img.channels = 1;
  } else if (color_type == PNG_COLOR_TYPE_RGB) {
    img.channels = 3;
  } else if (color_type == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) {
      failure = "unsupported channel count: palette with transparency in " + path.string();
    }
    img.channels = 3;
  } else {
    failure = "unsupported channel count: alpha channel in " + path.string();
  }
  if (!failure.empty()) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(failure);
  }

  png_read_update_info(png, info);
  img.width = width;
  img.height = height;
  img.bit_depth = 8;
  const std::size_t stride = img.width * static_cast<std::size_t>(img.channels);
  img.samples.resize(stride * img.height);
  rows.resize(img.height);
  for (std::size_t r = 0; r < img.height; ++r) rows[r] = img.samples.data() + r * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline void write_png(const std::filesystem::path& path, const RawImage& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.samples.data(), 0,
                               nullptr)) {
    throw FormatError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

// Skips whitespace and '#' comments, then reads an unsigned decimal.
inline std::size_t pnm_field(const std::vector<char>& buf, std::size_t& pos,
                             const std::string& path) {
  while (pos < buf.size()) {
    if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= buf.size() || !std::isdigit(static_cast<unsigned char>(buf[pos]))) {
    throw FormatError("malformed PNM header in " + path);
  }
  std::size_t value = 0;
  while (pos < buf.size() && std::isdigit(static_cast<unsigned char>(buf[pos]))) {
    value = value * 10 + static_cast<std::size_t>(buf[pos] - '0');
    if (value > (1u << 30)) throw FormatError("PNM dimension out of range in " + path);
    ++pos;
  }
  return value;
}

inline RawImage read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  const std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (buf.size() < 2 || buf[0] != 'P' || (buf[1] != '5' && buf[1] != '6')) {
    throw FormatError("not a binary PGM/PPM file: " + name);
  }
  std::size_t pos = 2;
  RawImage img;
  img.channels = buf[1] == '5' ? 1 : 3;
  img.width = pnm_field(buf, pos, name);
  img.height = pnm_field(buf, pos, name);
  const std::size_t maxval = pnm_field(buf, pos, name);
  if (maxval > 255) {
    throw FormatError("unsupported bit depth: maxval " + std::to_string(maxval) + " in " + name);
  }
  if (maxval != 255) {
    throw FormatError("unsupported maxval " + std::to_string(maxval) + " (expected 255) in " + name);
  }
  if (img.width < 1 || img.height < 1) throw FormatError("image must be at least 1x1: " + name);
  if (pos >= buf.size() || !std::isspace(static_cast<unsigned char>(buf[pos]))) {
    throw FormatError("malformed PNM header in " + name);
  }
  ++pos;
  const std::size_t need = img.width * img.height * static_cast<std::size_t>(img.channels);
  if (buf.size() - pos < need) throw FormatError("truncated PNM payload in " + name);
  img.samples.assign(buf.begin() + static_cast<std::ptrdiff_t>(pos),
                     buf.begin() + static_cast<std::ptrdiff_t>(pos + need));
  return img;
}

inline void write_pnm(const std::filesystem::path& path, const RawImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << (img.channels == 1 ? "P5" : "P6") << '\n'
      << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.samples.data()),
            static_cast<std::streamsize>(img.samples.size()));
  if (!out) throw FormatError("cannot write " + path.string());
}

}  // namespace detail

inline bool is_image_path(const std::filesystem::path& path) {
  const auto ext = detail::lower_extension(path);
  return ext == ".png" || ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

inline RawImage read_image(const std::filesystem::path& path) {
  const auto ext = detail::lower_extension(path);
  if (ext == ".png") return detail::read_png(path);
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return detail::read_pnm(path);
  throw FormatError("unsupported image format: " + path.string() + " (PNG, PGM or PPM)");
}

// Extension picks the codec. PGM/PPM channel count must agree with the extension.
inline void write_image(const std::filesystem::path& path, const RawImage& img) {
  require_8bit(img);
  const auto ext = detail::lower_extension(path);
  if (ext == ".png") return detail::write_png(path, img);
  if (ext == ".pgm" && img.channels != 1) throw FormatError("PGM output needs a single channel");
  if (ext == ".ppm" && img.channels != 3) throw FormatError("PPM output needs three channels");
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return detail::write_pnm(path, img);
  throw FormatError("unsupported output format: " + path.string() +
                    " (lossless PNG, PGM or PPM only)");
}

inline ImagePlane read_gray(const std::filesystem::path& path) {
  return to_grayscale(read_image(path));
}

inline void write_gray(const std::filesystem::path& path, const ImagePlane& plane) {
  write_image(path, merge_channels(std::span<const ImagePlane>(&plane, 1)));
}

}  // namespace leakscope
