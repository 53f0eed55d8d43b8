#include "saml/png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>

#include "saml/error.hpp"

namespace saml::png_io {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) throw InputError("cannot open " + path.string());
  return f;
}

// libpng reports errors through longjmp; the message is stashed here and
// rethrown as InputError once control is back in the C++ frame.
struct PngCtx {
  std::string error_msg;
};

void error_fn(png_structp png, png_const_charp msg) {
  auto* ctx = static_cast<PngCtx*>(png_get_error_ptr(png));
  if (ctx) ctx->error_msg = msg ? msg : "unknown";
  png_longjmp(png, 1);
}

void warn_fn(png_structp, png_const_charp) {}

struct Reader {
  png_structp png = nullptr;
  png_infop info = nullptr;

  explicit Reader(PngCtx* ctx) {
    png = png_create_read_struct(PNG_LIBPNG_VER_STRING, ctx, error_fn, warn_fn);
    if (png) info = png_create_info_struct(png);
    if (!png || !info) throw InputError("libpng allocation failed");
  }
  ~Reader() { png_destroy_read_struct(&png, &info, nullptr); }
  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;
};

struct Writer {
  png_structp png = nullptr;
  png_infop info = nullptr;

  explicit Writer(PngCtx* ctx) {
    png = png_create_write_struct(PNG_LIBPNG_VER_STRING, ctx, error_fn, warn_fn);
    if (png) info = png_create_info_struct(png);
    if (!png || !info) throw InputError("libpng allocation failed");
  }
  ~Writer() { png_destroy_write_struct(&png, &info); }
  Writer(const Writer&) = delete;
  Writer& operator=(const Writer&) = delete;
};

void check_dims(png_uint_32 w, png_uint_32 h, const std::filesystem::path& path) {
  if (w < 1 || h < 1 || w > (1u << 24) || h > (1u << 24)) {
    throw InputError("unreasonable PNG dimensions in " + path.string());
  }
}

enum class ReadMode { rgb, gray, index };

// Shared read path. `out` is sized H x W x channels on return.
void read_png(const std::filesystem::path& path, ReadMode mode, int& out_h, int& out_w,
              std::vector<uint8_t>& out) {
  auto file = open_file(path, "rb");
  PngCtx ctx;
  Reader r(&ctx);

  if (setjmp(png_jmpbuf(r.png))) {
    throw InputError("libpng: " + ctx.error_msg + " (" + path.string() + ")");
  }

  png_init_io(r.png, file.get());
  png_read_info(r.png, r.info);

  png_uint_32 w = png_get_image_width(r.png, r.info);
  png_uint_32 h = png_get_image_height(r.png, r.info);
  check_dims(w, h, path);
  int color = png_get_color_type(r.png, r.info);
  int depth = png_get_bit_depth(r.png, r.info);

  size_t channels = 1;
  switch (mode) {
    case ReadMode::rgb:
      channels = 3;
      if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
      if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(r.png);
      if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
      if (depth == 16) png_set_strip_16(r.png);
      png_set_strip_alpha(r.png);
      if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_gray_to_rgb(r.png);
      }
      break;
    case ReadMode::gray:
      if (color != PNG_COLOR_TYPE_GRAY) {
        throw InputError("expected grayscale PNG: " + path.string());
      }
      if (depth < 8) png_set_expand_gray_1_2_4_to_8(r.png);
      if (depth == 16) png_set_strip_16(r.png);
      break;
    case ReadMode::index:
      if (color != PNG_COLOR_TYPE_PALETTE && color != PNG_COLOR_TYPE_GRAY) {
        throw InputError("expected indexed or grayscale PNG: " + path.string());
      }
      // Keep raw palette indices; just unpack sub-byte depths.
      if (depth < 8) png_set_packing(r.png);
      if (depth == 16) png_set_strip_16(r.png);
      break;
  }

  png_read_update_info(r.png, r.info);
  if (png_get_rowbytes(r.png, r.info) != w * channels) {
    throw InputError("unexpected row size reading " + path.string());
  }

  out_h = int(h);
  out_w = int(w);
  out.assign(size_t(h) * w * channels, 0);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = out.data() + size_t(y) * w * channels;
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
}

void write_png(const std::filesystem::path& path, int color_type, int h, int w,
               const uint8_t* data, const std::vector<std::array<uint8_t, 3>>* palette) {
  auto file = open_file(path, "wb");
  PngCtx ctx;
  Writer wr(&ctx);

  if (setjmp(png_jmpbuf(wr.png))) {
    throw InputError("libpng: " + ctx.error_msg + " (" + path.string() + ")");
  }

  png_init_io(wr.png, file.get());
  png_set_IHDR(wr.png, wr.info, png_uint_32(w), png_uint_32(h), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);

  std::vector<png_color> pal;
  if (palette) {
    pal.resize(palette->size());
    for (size_t i = 0; i < palette->size(); ++i) {
      pal[i].red = (*palette)[i][0];
      pal[i].green = (*palette)[i][1];
      pal[i].blue = (*palette)[i][2];
    }
    png_set_PLTE(wr.png, wr.info, pal.data(), int(pal.size()));
  }

  png_write_info(wr.png, wr.info);
  size_t channels = (color_type == PNG_COLOR_TYPE_RGB) ? 3 : 1;
  for (int y = 0; y < h; ++y) {
    png_write_row(wr.png, const_cast<png_bytep>(data + size_t(y) * w * channels));
  }
  png_write_end(wr.png, nullptr);
}

}  // namespace

RgbImage read_rgb8(const std::filesystem::path& path) {
  int h = 0, w = 0;
  std::vector<uint8_t> raw;
  read_png(path, ReadMode::rgb, h, w, raw);
  RgbImage img(h, w);
  std::memcpy(img.data().data(), raw.data(), raw.size());
  return img;
}

Grid<uint8_t> read_gray8(const std::filesystem::path& path) {
  int h = 0, w = 0;
  std::vector<uint8_t> raw;
  read_png(path, ReadMode::gray, h, w, raw);
  Grid<uint8_t> img(h, w);
  img.data() = std::move(raw);
  return img;
}

Grid<uint8_t> read_index8(const std::filesystem::path& path) {
  int h = 0, w = 0;
  std::vector<uint8_t> raw;
  read_png(path, ReadMode::index, h, w, raw);
  Grid<uint8_t> img(h, w);
  img.data() = std::move(raw);
  return img;
}

void write_rgb8(const std::filesystem::path& path, const RgbImage& img) {
  if (img.empty()) throw InputError("refusing to write empty image: " + path.string());
  static_assert(sizeof(Rgb) == 3);
  write_png(path, PNG_COLOR_TYPE_RGB, img.height(), img.width(),
            reinterpret_cast<const uint8_t*>(img.data().data()), nullptr);
}

void write_gray8(const std::filesystem::path& path, const Grid<uint8_t>& img) {
  if (img.empty()) throw InputError("refusing to write empty image: " + path.string());
  write_png(path, PNG_COLOR_TYPE_GRAY, img.height(), img.width(), img.data().data(), nullptr);
}

void write_indexed8(const std::filesystem::path& path, const Grid<uint8_t>& img,
                    const std::vector<std::array<uint8_t, 3>>& palette) {
  if (img.empty()) throw InputError("refusing to write empty image: " + path.string());
  if (palette.empty() || palette.size() > 256) throw InputError("bad palette size");
  for (uint8_t v : img.data()) {
    if (v >= palette.size()) {
      throw InputError("pixel value " + std::to_string(int(v)) + " outside palette in " +
                       path.string());
    }
  }
  write_png(path, PNG_COLOR_TYPE_PALETTE, img.height(), img.width(), img.data().data(),
            &palette);
}

const std::vector<std::array<uint8_t, 3>>& labelmap_palette() {
  static const std::vector<std::array<uint8_t, 3>> pal = {
      {0, 0, 0},       // background
      {220, 60, 50},   // podocyte
      {60, 120, 220},  // mesangial
  };
  return pal;
}

}  // namespace saml::png_io
