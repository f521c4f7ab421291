#include "cityalign/image_io.hpp"

#include <png.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "cityalign/errors.hpp"

namespace cityalign {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp, png_const_charp msg) { throw FormatError(std::string("png: ") + msg); }
void png_warn(png_structp, png_const_charp) {}

void write_png_generic(png_structp png, png_infop info, int width, int height, int bit_depth, int color_type,
                       const std::vector<png_bytep>& rows) {
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
}

class PngWriter {
 public:
  PngWriter() {
    png_ = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    if (!png_) throw FormatError("png: cannot create writer");
    info_ = png_create_info_struct(png_);
  }
  ~PngWriter() { png_destroy_write_struct(&png_, &info_); }
  PngWriter(const PngWriter&) = delete;
  PngWriter& operator=(const PngWriter&) = delete;
  png_structp png() { return png_; }
  png_infop info() { return info_; }

 private:
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

class PngReader {
 public:
  PngReader() {
    png_ = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    if (!png_) throw FormatError("png: cannot create reader");
    info_ = png_create_info_struct(png_);
  }
  ~PngReader() { png_destroy_read_struct(&png_, &info_, nullptr); }
  PngReader(const PngReader&) = delete;
  PngReader& operator=(const PngReader&) = delete;
  png_structp png() { return png_; }
  png_infop info() { return info_; }

 private:
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw FormatError("cannot open " + path.string());
  return f;
}

std::vector<png_bytep> row_pointers(const Image& image) {
  std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
  for (int y = 0; y < image.height; ++y) rows[y] = const_cast<png_bytep>(image.pixel(0, y));
  return rows;
}

int color_type_for(int channels) {
  switch (channels) {
    case 1: return PNG_COLOR_TYPE_GRAY;
    case 3: return PNG_COLOR_TYPE_RGB;
    case 4: return PNG_COLOR_TYPE_RGBA;
    default: throw FormatError("unsupported channel count " + std::to_string(channels));
  }
}

}  // namespace

Image read_png(const std::filesystem::path& path) {
  auto file = open_file(path, "rb");
  PngReader r;
  png_init_io(r.png(), file.get());
  png_read_info(r.png(), r.info());
  png_set_expand(r.png());
  png_set_strip_16(r.png());
  png_set_strip_alpha(r.png());
  png_set_gray_to_rgb(r.png());
  png_read_update_info(r.png(), r.info());
  Image img(static_cast<int>(png_get_image_width(r.png(), r.info())),
            static_cast<int>(png_get_image_height(r.png(), r.info())), 3);
  if (png_get_rowbytes(r.png(), r.info()) != static_cast<std::size_t>(img.width) * 3) {
    throw FormatError("png: unexpected row layout in " + path.string());
  }
  auto rows = row_pointers(img);
  png_read_image(r.png(), rows.data());
  png_read_end(r.png(), nullptr);
  return img;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  auto file = open_file(path, "wb");
  PngWriter w;
  png_init_io(w.png(), file.get());
  write_png_generic(w.png(), w.info(), image.width, image.height, 8, color_type_for(image.channels),
                    row_pointers(image));
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  std::vector<std::uint8_t> out;
  PngWriter w;
  png_set_write_fn(
      w.png(), &out,
      [](png_structp p, png_bytep data, png_size_t n) {
        auto* buf = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
        buf->insert(buf->end(), data, data + n);
      },
      nullptr);
  write_png_generic(w.png(), w.info(), image.width, image.height, 8, color_type_for(image.channels),
                    row_pointers(image));
  return out;
}

void write_png_gray16(const std::filesystem::path& path, int width, int height,
                      const std::vector<std::uint16_t>& data) {
  if (data.size() != static_cast<std::size_t>(width) * height) throw FormatError("gray16 buffer size mismatch");
  auto file = open_file(path, "wb");
  PngWriter w;
  png_init_io(w.png(), file.get());
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) {
    rows[y] = reinterpret_cast<png_bytep>(const_cast<std::uint16_t*>(data.data() + static_cast<std::size_t>(y) * width));
  }
  write_png_generic(w.png(), w.info(), width, height, 16, PNG_COLOR_TYPE_GRAY, rows);
}

std::vector<std::uint16_t> read_png_gray16(const std::filesystem::path& path, int& width, int& height) {
  auto file = open_file(path, "rb");
  PngReader r;
  png_init_io(r.png(), file.get());
  png_read_info(r.png(), r.info());
  if (png_get_bit_depth(r.png(), r.info()) != 16 || png_get_color_type(r.png(), r.info()) != PNG_COLOR_TYPE_GRAY) {
    throw FormatError("expected a 16-bit grayscale png: " + path.string());
  }
  if (std::endian::native == std::endian::little) png_set_swap(r.png());
  width = static_cast<int>(png_get_image_width(r.png(), r.info()));
  height = static_cast<int>(png_get_image_height(r.png(), r.info()));
  std::vector<std::uint16_t> data(static_cast<std::size_t>(width) * height);
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) rows[y] = reinterpret_cast<png_bytep>(data.data() + static_cast<std::size_t>(y) * width);
  png_read_image(r.png(), rows.data());
  png_read_end(r.png(), nullptr);
  return data;
}

void write_pfm(const std::filesystem::path& path, int width, int height, int channels, const std::vector<float>& data) {
  if (channels != 1 && channels != 3) throw FormatError("pfm supports 1 or 3 channels");
  if (data.size() != static_cast<std::size_t>(width) * height * channels) throw FormatError("pfm buffer size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string());
  out << (channels == 3 ? "PF" : "Pf") << '\n' << width << ' ' << height << '\n' << "-1.0" << '\n';
  static_assert(std::endian::native == std::endian::little, "pfm writer assumes a little-endian host");
  const std::size_t row = static_cast<std::size_t>(width) * channels;
  for (int y = height - 1; y >= 0; --y) {
    out.write(reinterpret_cast<const char*>(data.data() + static_cast<std::size_t>(y) * row),
              static_cast<std::streamsize>(row * sizeof(float)));
  }
}

std::vector<float> read_pfm(const std::filesystem::path& path, int& width, int& height, int& channels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string magic;
  double scale = 0.0;
  in >> magic >> width >> height >> scale;
  in.get();
  if (magic == "PF") {
    channels = 3;
  } else if (magic == "Pf") {
    channels = 1;
  } else {
    throw FormatError("not a pfm file: " + path.string());
  }
  if (!(scale < 0.0)) throw FormatError("only little-endian pfm is supported");
  const std::size_t row = static_cast<std::size_t>(width) * channels;
  std::vector<float> data(row * height);
  for (int y = height - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(data.data() + static_cast<std::size_t>(y) * row),
            static_cast<std::streamsize>(row * sizeof(float)));
  }
  if (!in) throw FormatError("truncated pfm file: " + path.string());
  return data;
}

}  // namespace cityalign
