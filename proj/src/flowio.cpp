#include "lfn/flowio.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace lfn {
namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host expected");

std::string extension(const std::string& path) {
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos) return "";
  std::string e = path.substr(dot + 1);
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const std::string& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode));
  if (!f) throw IOError("cannot open " + path);
  return f;
}

// Decoded PNG rows with 1 or 2 bytes per sample.
struct RawPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  int depth = 0;
  std::vector<unsigned char> data;

  unsigned sample(int y, int x, int c) const {
    const std::size_t i = (static_cast<std::size_t>(y) * width + x) * channels + c;
    if (depth == 16) return (unsigned(data[2 * i]) << 8) | data[2 * i + 1];
    return data[i];
  }
};

void png_fail(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err != nullptr) *err = msg;
  png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

bool png_read_core(png_structp png, png_infop info, std::FILE* f, RawPng* out,
                   std::vector<png_bytep>* rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, f);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_read_update_info(png, info);
  out->width = static_cast<int>(png_get_image_width(png, info));
  out->height = static_cast<int>(png_get_image_height(png, info));
  out->channels = png_get_channels(png, info);
  out->depth = png_get_bit_depth(png, info);
  const std::size_t row = png_get_rowbytes(png, info);
  out->data.resize(row * out->height);
  rows->resize(out->height);
  for (int y = 0; y < out->height; ++y) (*rows)[y] = out->data.data() + y * row;
  png_read_image(png, rows->data());
  png_read_end(png, nullptr);
  return true;
}

// Reads a PNG as stored (no gamma handling). Palette and sub-byte gray are
// expanded to 8 bits; 16-bit samples stay big-endian.
RawPng read_png_raw(const std::string& path) {
  File f = open_file(path, "rb");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw FormatError(path + ": not a PNG file");
  }
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  RawPng out;
  std::vector<png_bytep> rows;
  const bool ok = png_read_core(png, info, f.get(), &out, &rows);
  png_destroy_read_struct(&png, &info, nullptr);
  if (!ok) throw FormatError(path + ": " + err);
  return out;
}

bool png_write_core(png_structp png, png_infop info, std::FILE* f, int width, int height,
                    int channels, int depth, const unsigned char* data) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, f);
  png_set_IHDR(png, info, width, height, depth,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t row = static_cast<std::size_t>(width) * channels * (depth / 8);
  for (int y = 0; y < height; ++y) png_write_row(png, const_cast<png_bytep>(data + y * row));
  png_write_end(png, nullptr);
  return true;
}

void write_png_raw(const std::string& path, int width, int height, int channels, int depth,
                   const std::vector<unsigned char>& data) {
  File f = open_file(path, "wb");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  const bool ok = png_write_core(png, info, f.get(), width, height, channels, depth, data.data());
  png_destroy_write_struct(&png, &info);
  if (!ok) throw IOError(path + ": " + err);
}

void require_flow(const Tensor& flow, const char* what) {
  if (flow.c() != 2 || flow.n() < 1) throw DimensionError(std::string(what) + ": expected N x 2 x H x W flow");
  if (flow.h() <= 0 || flow.w() <= 0) throw DimensionError(std::string(what) + ": empty flow");
}

// Next whitespace-separated token of a PNM header, skipping comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

Tensor read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open " + path);
  const std::string magic = pnm_token(in);
  if (magic != "P6" && magic != "P5") throw FormatError(path + ": only binary PPM/PGM is supported");
  const int channels = magic == "P6" ? 3 : 1;
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(pnm_token(in));
    h = std::stoi(pnm_token(in));
    maxval = std::stoi(pnm_token(in));
  } catch (const std::exception&) {
    throw FormatError(path + ": malformed PNM header");
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) throw FormatError(path + ": bad PNM header");
  const int bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * channels * bytes);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw IOError(path + ": truncated PNM data");
  Tensor img({1, 3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const std::size_t i = (static_cast<std::size_t>(y) * w + x) * channels + (channels == 3 ? c : 0);
        const unsigned v = bytes == 2 ? (unsigned(raw[2 * i]) << 8) | raw[2 * i + 1] : raw[i];
        img.at(0, c, y, x) = static_cast<double>(v) / maxval;
      }
  return img;
}

}  // namespace

Tensor read_flo(const std::string& path) {
  File f = open_file(path, "rb");
  float magic = 0.0f;
  if (std::fread(&magic, sizeof magic, 1, f.get()) != 1) throw IOError(path + ": truncated header");
  if (magic != kFloMagic) throw FormatError(path + ": bad .flo magic");
  int32_t dims[2] = {0, 0};
  if (std::fread(dims, sizeof(int32_t), 2, f.get()) != 2) throw IOError(path + ": truncated header");
  const int w = dims[0];
  const int h = dims[1];
  if (w <= 0 || h <= 0 || w > (1 << 16) || h > (1 << 16)) {
    throw FormatError(path + ": bad .flo extent " + std::to_string(w) + "x" + std::to_string(h));
  }
  const std::size_t n = 2 * static_cast<std::size_t>(w) * h;
  std::vector<float> buf(n);
  if (std::fread(buf.data(), sizeof(float), n, f.get()) != n) throw IOError(path + ": truncated payload");
  Tensor flow({1, 2, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = 2 * (static_cast<std::size_t>(y) * w + x);
      flow.at(0, 0, y, x) = buf[i];
      flow.at(0, 1, y, x) = buf[i + 1];
    }
  return flow;
}

void write_flo(const std::string& path, const Tensor& flow) {
  require_flow(flow, "write_flo");
  const int w = flow.w();
  const int h = flow.h();
  std::vector<float> buf(2 * static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = 2 * (static_cast<std::size_t>(y) * w + x);
      buf[i] = static_cast<float>(flow.at(0, 0, y, x));
      buf[i + 1] = static_cast<float>(flow.at(0, 1, y, x));
    }
  File f = open_file(path, "wb");
  const int32_t dims[2] = {w, h};
  if (std::fwrite(&kFloMagic, sizeof kFloMagic, 1, f.get()) != 1 ||
      std::fwrite(dims, sizeof(int32_t), 2, f.get()) != 2 ||
      std::fwrite(buf.data(), sizeof(float), buf.size(), f.get()) != buf.size()) {
    throw IOError("write failed: " + path);
  }
}

uint16_t kitti_encode(double component) {
  const double raw = std::round(component * 64.0 + 32768.0);
  return static_cast<uint16_t>(std::clamp(raw, 0.0, 65535.0));
}

double kitti_decode(uint16_t raw) { return (static_cast<double>(raw) - 32768.0) / 64.0; }

KittiFlow read_kitti_png(const std::string& path) {
  const RawPng png = read_png_raw(path);
  if (png.depth != 16 || png.channels != 3) {
    throw FormatError(path + ": KITTI flow must be a 16-bit RGB PNG (got " +
                      std::to_string(png.depth) + "-bit, " + std::to_string(png.channels) +
                      " channels)");
  }
  KittiFlow out{Tensor({1, 2, png.height, png.width}), Tensor({1, 1, png.height, png.width})};
  for (int y = 0; y < png.height; ++y)
    for (int x = 0; x < png.width; ++x) {
      out.flow.at(0, 0, y, x) = kitti_decode(static_cast<uint16_t>(png.sample(y, x, 0)));
      out.flow.at(0, 1, y, x) = kitti_decode(static_cast<uint16_t>(png.sample(y, x, 1)));
      out.valid.at(0, 0, y, x) = png.sample(y, x, 2) > 0 ? 1.0 : 0.0;
    }
  return out;
}

void write_kitti_png(const std::string& path, const Tensor& flow, const Tensor& valid) {
  require_flow(flow, "write_kitti_png");
  const int w = flow.w();
  const int h = flow.h();
  if (!valid.empty()) require_same_spatial(flow.shape(), valid.shape(), "write_kitti_png");
  std::vector<unsigned char> data(static_cast<std::size_t>(w) * h * 6);
  auto put = [&](std::size_t i, uint16_t v) {
    data[2 * i] = static_cast<unsigned char>(v >> 8);
    data[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = 3 * (static_cast<std::size_t>(y) * w + x);
      put(i, kitti_encode(flow.at(0, 0, y, x)));
      put(i + 1, kitti_encode(flow.at(0, 1, y, x)));
      put(i + 2, valid.empty() || valid.at(0, 0, y, x) > 0.5 ? 1 : 0);
    }
  write_png_raw(path, w, h, 3, 16, data);
}

KittiFlow read_flow_any(const std::string& path) {
  const std::string ext = extension(path);
  if (ext == "png") return read_kitti_png(path);
  if (ext != "flo") throw FormatError(path + ": unknown flow format (expected .flo or .png)");
  KittiFlow out{read_flo(path), Tensor()};
  out.valid = Tensor({1, 1, out.flow.h(), out.flow.w()}, 1.0);
  for (int y = 0; y < out.flow.h(); ++y)
    for (int x = 0; x < out.flow.w(); ++x) {
      if (std::abs(out.flow.at(0, 0, y, x)) > 1e9 || std::abs(out.flow.at(0, 1, y, x)) > 1e9) {
        out.valid.at(0, 0, y, x) = 0.0;
      }
    }
  return out;
}

Tensor read_image(const std::string& path) {
  const std::string ext = extension(path);
  if (ext == "ppm" || ext == "pgm" || ext == "pnm") return read_pnm(path);
  const RawPng png = read_png_raw(path);
  const double range = png.depth == 16 ? 65535.0 : 255.0;
  const bool gray = png.channels <= 2;
  Tensor img({1, 3, png.height, png.width});
  for (int y = 0; y < png.height; ++y)
    for (int x = 0; x < png.width; ++x)
      for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = png.sample(y, x, gray ? 0 : c) / range;
  return img;
}

void write_png(const std::string& path, const Tensor& image) {
  if (image.c() != 3 && image.c() != 1) throw DimensionError("write_png: expected 1 or 3 channels");
  const int w = image.w();
  const int h = image.h();
  const int ch = image.c();
  std::vector<unsigned char> data(static_cast<std::size_t>(w) * h * ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        const double v = std::clamp(image.at(0, c, y, x), 0.0, 1.0);
        data[(static_cast<std::size_t>(y) * w + x) * ch + c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
  write_png_raw(path, w, h, ch, 8, data);
}

Tensor read_mask(const std::string& path) {
  const std::string ext = extension(path);
  Tensor mask;
  if (ext == "ppm" || ext == "pgm" || ext == "pnm") {
    const Tensor img = read_pnm(path);
    mask = Tensor({1, 1, img.h(), img.w()});
    for (int y = 0; y < img.h(); ++y)
      for (int x = 0; x < img.w(); ++x) mask.at(0, 0, y, x) = img.at(0, 0, y, x) > 0.0 ? 1.0 : 0.0;
    return mask;
  }
  const RawPng png = read_png_raw(path);
  mask = Tensor({1, 1, png.height, png.width});
  for (int y = 0; y < png.height; ++y)
    for (int x = 0; x < png.width; ++x) mask.at(0, 0, y, x) = png.sample(y, x, 0) > 0 ? 1.0 : 0.0;
  return mask;
}

}  // namespace lfn
