#pragma once

#include <png.h>

#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "scenegen/error.hpp"
#include "scenegen/image.hpp"

namespace scenegen {

namespace detail {

struct PngWriteBuffer {
  std::vector<std::uint8_t>* out;
};

inline void png_write_cb(png_structp png, png_bytep data, png_size_t len) {
  auto* buf = static_cast<PngWriteBuffer*>(png_get_io_ptr(png));
  buf->out->insert(buf->out->end(), data, data + len);
}

inline void png_flush_cb(png_structp) {}

struct PngReadBuffer {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos;
};

inline void png_read_cb(png_structp png, png_bytep out, png_size_t len) {
  auto* buf = static_cast<PngReadBuffer*>(png_get_io_ptr(png));
  if (buf->pos + len > buf->size) png_error(png, "truncated PNG data");
  std::memcpy(out, buf->data + buf->pos, len);
  buf->pos += len;
}

// libpng reports errors by longjmp; the message is parked here first.
inline std::string& png_last_error() {
  thread_local std::string msg;
  return msg;
}

[[noreturn]] inline void png_error_cb(png_structp png, png_const_charp msg) {
  png_last_error() = msg ? msg : "libpng error";
  png_longjmp(png, 1);
}
inline void png_warning_cb(png_structp, png_const_charp) {}

}  // namespace detail

// 8-bit PNG (gray for 1 channel, RGB for 3). Values are clamped to [0,1]
// and rounded; no timestamp or text chunks, so equal images give equal bytes.
inline std::vector<std::uint8_t> encode_png(const ImageBuffer& img) {
  require(img.channels == 1 || img.channels == 3, Errc::precondition, "encode_png: need 1 or 3 channels");
  require(img.width > 0 && img.height > 0, Errc::precondition, "encode_png: empty image");
  std::vector<std::uint8_t> out;
  detail::PngWriteBuffer buf{&out};
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_error_cb,
                                            detail::png_warning_cb);
  if (!png) throw Error(Errc::io_error, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<png_byte> row(static_cast<std::size_t>(img.width) * img.channels);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error(Errc::io_error, "png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(Errc::io_error, "PNG encode: " + detail::png_last_error());
  }
  {
    png_set_write_fn(png, &buf, detail::png_write_cb, detail::png_flush_cb);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x)
        for (int c = 0; c < img.channels; ++c)
          row[static_cast<std::size_t>(x) * img.channels + c] = to_u8(img.at(c, y, x));
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

// Decodes 8-bit or 16-bit gray/RGB(A) PNG into [0,1]; alpha is dropped.
inline ImageBuffer decode_png(const std::uint8_t* data, std::size_t size) {
  if (size < 8 || png_sig_cmp(data, 0, 8) != 0) throw Error(Errc::io_error, "not a PNG stream");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_error_cb,
                                           detail::png_warning_cb);
  if (!png) throw Error(Errc::io_error, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  detail::PngReadBuffer buf{data, size, 0};
  ImageBuffer img;
  std::vector<png_byte> row;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error(Errc::io_error, "png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(Errc::io_error, "PNG decode: " + detail::png_last_error());
  }
  {
    png_set_read_fn(png, &buf, detail::png_read_cb);
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int ch = png_get_channels(png, info);
    if (ch != 1 && ch != 3) png_error(png, "unsupported channel count");
    img = ImageBuffer(ch, h, w);
    row.resize(png_get_rowbytes(png, info));
    for (int y = 0; y < h; ++y) {
      png_read_row(png, row.data(), nullptr);
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < ch; ++c) img.at(c, y, x) = row[static_cast<std::size_t>(x) * ch + c] / 255.0;
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline ImageBuffer decode_png(const std::vector<std::uint8_t>& bytes) { return decode_png(bytes.data(), bytes.size()); }

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::io_error, "cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(Errc::io_error, "write failed: " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::io_error, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_png(const std::filesystem::path& path, const ImageBuffer& img) {
  const auto bytes = encode_png(img);
  write_file(path, std::string(bytes.begin(), bytes.end()));
}

inline ImageBuffer read_png(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  return decode_png(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size());
}

}  // namespace scenegen
