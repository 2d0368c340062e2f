#include "semfuse/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

namespace semfuse {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_handler(png_structp png, png_const_charp message) {
  throw InputError(std::string("png: ") + message + " (" +
                   static_cast<const char*>(png_get_error_ptr(png)) + ")");
}

void png_warning_handler(png_structp, png_const_charp) {}

struct Decoded {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint8_t> rows;  // tightly packed, big-endian samples for 16 bit
};

Decoded decode(const std::filesystem::path& path, bool want_rgb8) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw InputError("cannot open " + path.string());
  const std::string name = path.string();
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, const_cast<char*>(name.c_str()),
                                           png_error_handler, png_warning_handler);
  if (png == nullptr) throw InputError("png: out of memory");
  png_infop info = png_create_info_struct(png);
  Decoded out;
  try {
    png_init_io(png, file.get());
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (want_rgb8) {
      if (depth == 16) png_set_strip_16(png);
      if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
      if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
        if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
        png_set_gray_to_rgb(png);
      }
      if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    } else {
      if (color != PNG_COLOR_TYPE_GRAY) throw InputError(name + ": expected a grayscale PNG");
      if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    }
    png_read_update_info(png, info);
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.channels = png_get_channels(png, info);
    out.bit_depth = png_get_bit_depth(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    out.rows.resize(stride * static_cast<std::size_t>(out.height));
    std::vector<png_bytep> pointers(static_cast<std::size_t>(out.height));
    for (int y = 0; y < out.height; ++y) pointers[y] = out.rows.data() + stride * y;
    png_read_image(png, pointers.data());
    png_read_end(png, nullptr);
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

using Sink = std::vector<std::uint8_t>;

void write_to_sink(png_structp png, png_bytep data, png_size_t length) {
  auto* sink = static_cast<Sink*>(png_get_io_ptr(png));
  sink->insert(sink->end(), data, data + length);
}

void flush_sink(png_structp) {}

// Encodes rows of `bytes_per_row` bytes; samples already in PNG byte order.
Sink encode(int width, int height, int color_type, int bit_depth,
            const std::vector<std::uint8_t>& rows, std::size_t bytes_per_row) {
  static const char kContext[] = "encode";
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, const_cast<char*>(kContext),
                                            png_error_handler, png_warning_handler);
  if (png == nullptr) throw InputError("png: out of memory");
  png_infop info = png_create_info_struct(png);
  Sink sink;
  try {
    png_set_write_fn(png, &sink, write_to_sink, flush_sink);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y) {
      png_write_row(png, rows.data() + bytes_per_row * static_cast<std::size_t>(y));
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return sink;
}

void write_file(const std::filesystem::path& path, const Sink& bytes) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw InputError("cannot write " + path.string());
  if (std::fwrite(bytes.data(), 1, bytes.size(), file.get()) != bytes.size()) {
    throw InputError("short write to " + path.string());
  }
}

}  // namespace

RgbImage read_rgb_png(const std::filesystem::path& path) {
  const Decoded d = decode(path, true);
  RgbImage img(d.width, d.height);
  for (std::size_t i = 0; i < img.size(); ++i) {
    img[i] = Rgb8{d.rows[3 * i], d.rows[3 * i + 1], d.rows[3 * i + 2]};
  }
  return img;
}

Gray16Image read_gray16_png(const std::filesystem::path& path) {
  const Decoded d = decode(path, false);
  Gray16Image img(d.width, d.height);
  for (std::size_t i = 0; i < img.size(); ++i) {
    img[i] = d.bit_depth == 16
                 ? static_cast<std::uint16_t>((d.rows[2 * i] << 8) | d.rows[2 * i + 1])
                 : d.rows[i];
  }
  return img;
}

std::vector<std::uint8_t> encode_rgb_png(const RgbImage& image) {
  std::vector<std::uint8_t> rows(image.size() * 3);
  for (std::size_t i = 0; i < image.size(); ++i) {
    rows[3 * i] = image[i].r;
    rows[3 * i + 1] = image[i].g;
    rows[3 * i + 2] = image[i].b;
  }
  return encode(image.width(), image.height(), PNG_COLOR_TYPE_RGB, 8, rows,
                static_cast<std::size_t>(image.width()) * 3);
}

void write_rgb_png(const std::filesystem::path& path, const RgbImage& image) {
  write_file(path, encode_rgb_png(image));
}

void write_gray16_png(const std::filesystem::path& path, const Gray16Image& image) {
  std::vector<std::uint8_t> rows(image.size() * 2);
  for (std::size_t i = 0; i < image.size(); ++i) {
    rows[2 * i] = static_cast<std::uint8_t>(image[i] >> 8);
    rows[2 * i + 1] = static_cast<std::uint8_t>(image[i] & 0xff);
  }
  write_file(path, encode(image.width(), image.height(), PNG_COLOR_TYPE_GRAY, 16, rows,
                          static_cast<std::size_t>(image.width()) * 2));
}

}  // namespace semfuse
