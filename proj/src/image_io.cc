#include "rmvs/image_io.h"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace rmvs {
namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

FilePtr OpenFile(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw std::runtime_error(path + ": cannot open file");
  return f;
}

[[noreturn]] void PngError(png_structp png, png_const_charp msg) {
  throw std::runtime_error(
      std::string(static_cast<const char*>(png_get_error_ptr(png))) + ": " + msg);
}

void PngWarning(png_structp, png_const_charp) {}

struct PngRaw {
  int width = 0;
  int height = 0;
  int channels = 0;  // after dropping alpha
  int bit_depth = 8;
  std::vector<uint16_t> values;
};

PngRaw ReadPngRaw(const std::string& path) {
  FilePtr file = OpenFile(path, "rb");
  png_byte header[8];
  if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8)) {
    throw std::runtime_error(path + ": not a PNG file");
  }
  png_structp png = png_create_read_struct(
      PNG_LIBPNG_VER_STRING, const_cast<char*>(path.c_str()), PngError, PngWarning);
  png_infop info = png_create_info_struct(png);
  PngRaw raw;
  try {
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) {
      png_set_expand_gray_1_2_4_to_8(png);
    }
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) {
      png_set_strip_alpha(png);
    }
    if (depth == 16 && std::endian::native == std::endian::little) {
      png_set_swap(png);
    }
    png_read_update_info(png, info);
    raw.width = static_cast<int>(png_get_image_width(png, info));
    raw.height = static_cast<int>(png_get_image_height(png, info));
    raw.channels = png_get_channels(png, info);
    raw.bit_depth = depth = png_get_bit_depth(png, info);
    const size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<png_byte> buffer(rowbytes * raw.height);
    std::vector<png_bytep> rows(raw.height);
    for (int y = 0; y < raw.height; ++y) rows[y] = buffer.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);

    const size_t n = static_cast<size_t>(raw.width) * raw.height * raw.channels;
    raw.values.resize(n);
    for (int y = 0; y < raw.height; ++y) {
      for (size_t i = 0; i < static_cast<size_t>(raw.width) * raw.channels; ++i) {
        const size_t dst = static_cast<size_t>(y) * raw.width * raw.channels + i;
        if (depth == 16) {
          uint16_t v;
          std::memcpy(&v, rows[y] + 2 * i, 2);
          raw.values[dst] = v;
        } else {
          raw.values[dst] = rows[y][i];
        }
      }
    }
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return raw;
}

void WritePngRaw(const std::string& path, int width, int height, int channels,
                 int bit_depth, const std::vector<uint16_t>& values) {
  FilePtr file = OpenFile(path, "wb");
  png_structp png = png_create_write_struct(
      PNG_LIBPNG_VER_STRING, const_cast<char*>(path.c_str()), PngError, PngWarning);
  png_infop info = png_create_info_struct(png);
  try {
    png_init_io(png, file.get());
    png_set_IHDR(png, info, width, height, bit_depth,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const int bytes = bit_depth / 8;
    std::vector<png_byte> row(static_cast<size_t>(width) * channels * bytes);
    for (int y = 0; y < height; ++y) {
      for (int i = 0; i < width * channels; ++i) {
        const uint16_t v = values[static_cast<size_t>(y) * width * channels + i];
        if (bytes == 2) {
          row[2 * i] = static_cast<png_byte>(v >> 8);  // PNG is big-endian
          row[2 * i + 1] = static_cast<png_byte>(v & 0xff);
        } else {
          row[i] = static_cast<png_byte>(v);
        }
      }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Image ReadImagePng(const std::string& path) {
  PngRaw raw = ReadPngRaw(path);
  if (raw.channels == 2) raw.channels = 1;  // gray+alpha already stripped
  if (raw.channels != 1 && raw.channels != 3) {
    throw std::runtime_error(path + ": unsupported PNG channel count");
  }
  const double scale = raw.bit_depth == 16 ? 65535.0 : 255.0;
  std::vector<double> data(raw.values.size());
  for (size_t i = 0; i < data.size(); ++i) data[i] = raw.values[i] / scale;
  return Image(raw.width, raw.height, raw.channels, std::move(data));
}

void WriteImagePng(const std::string& path, const Image& img, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) {
    throw std::invalid_argument("png: bit depth must be 8 or 16");
  }
  const double scale = bit_depth == 16 ? 65535.0 : 255.0;
  std::vector<uint16_t> values(img.size());
  for (size_t i = 0; i < values.size(); ++i) {
    const double v = std::clamp(img.data()[i], 0.0, 1.0);
    values[i] = static_cast<uint16_t>(std::lround(v * scale));
  }
  WritePngRaw(path, img.width(), img.height(), img.channels(), bit_depth, values);
}

void WriteMaskPng(const std::string& path, const Grid<uint8_t>& mask) {
  std::vector<uint16_t> values(mask.size());
  for (size_t i = 0; i < values.size(); ++i) values[i] = mask.data()[i] ? 255 : 0;
  WritePngRaw(path, mask.width(), mask.height(), 1, 8, values);
}

Grid<uint8_t> ReadMaskPng(const std::string& path) {
  const PngRaw raw = ReadPngRaw(path);
  if (raw.channels != 1) throw std::runtime_error(path + ": mask must be grayscale");
  Grid<uint8_t> mask(raw.width, raw.height, 1);
  for (size_t i = 0; i < raw.values.size(); ++i) mask.vec()[i] = raw.values[i] != 0;
  return mask;
}

void WritePfm(const std::string& path, const Grid<double>& map) {
  if (map.channels() != 1) throw std::invalid_argument("pfm: expected one channel");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot write PFM");
  out << "Pf\n" << map.width() << ' ' << map.height() << "\n-1.0\n";
  std::vector<float> row(map.width());
  for (int y = map.height() - 1; y >= 0; --y) {
    for (int x = 0; x < map.width(); ++x) {
      float v = static_cast<float>(map(x, y));
      if constexpr (std::endian::native != std::endian::little) {
        v = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<uint32_t>(v)));
      }
      row[x] = v;
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error(path + ": PFM write failed");
}

Grid<double> ReadPfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open PFM");
  std::string magic;
  int width = 0, height = 0;
  double scale = 0.0;
  in >> magic >> width >> height >> scale;
  if (magic != "Pf") throw std::runtime_error(path + ": expected single-channel 'Pf' PFM");
  if (!in || width <= 0 || height <= 0 || scale == 0.0) {
    throw std::runtime_error(path + ": malformed PFM header");
  }
  in.get();  // single whitespace byte before the raster
  const bool little = scale < 0.0;
  Grid<double> map(width, height, 1);
  std::vector<float> row(width);
  for (int y = height - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) throw std::runtime_error(path + ": truncated PFM raster");
    for (int x = 0; x < width; ++x) {
      float v = row[x];
      if (little != (std::endian::native == std::endian::little)) {
        v = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<uint32_t>(v)));
      }
      map(x, y) = v;
    }
  }
  return map;
}

void WriteFileAtomically(const std::string& path,
                         const std::function<void(const std::string&)>& writer) {
  const std::string tmp = path + ".tmp";
  try {
    writer(tmp);
    std::filesystem::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw;
  }
}

}  // namespace rmvs
