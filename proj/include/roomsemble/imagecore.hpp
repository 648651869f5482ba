#pragma once

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <jerror.h>
#include <png.h>

#include "roomsemble/error.hpp"

namespace roomsemble {

/// Decoded raster, row-major, interleaved channels, values in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  float& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool empty() const { return data.empty(); }
};

/// Single-channel luminance image, row-major, values in [0,1].
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  GrayImage() = default;
  GrayImage(int w, int h, float fill = 0.0f)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }

  // Clamp-to-edge read.
  float clamped(int x, int y) const {
    x = std::clamp(x, 0, width - 1);
    y = std::clamp(y, 0, height - 1);
    return at(x, y);
  }
};

inline constexpr int kDefaultUploadMaxDim = 1024;

namespace detail {

inline bool looks_like_png(std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  return bytes.size() >= 8 && std::equal(sig, sig + 8, bytes.begin());
}

inline bool looks_like_jpeg(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF;
}

inline Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    fail(ErrorKind::MalformedImage, std::string("png: ") + png.message);
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = color ? 3 : 1;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png));
  png_color white{255, 255, 255};
  if (!png_image_finish_read(&png, &white, buffer.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    fail(ErrorKind::MalformedImage, "png: " + msg);
  }
  Image img(static_cast<int>(png.width), static_cast<int>(png.height), channels);
  std::transform(buffer.begin(), buffer.end(), img.data.begin(),
                 [](std::uint8_t v) { return static_cast<float>(v) / 255.0f; });
  return img;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

// Warnings are ignored except a premature end of data, which would otherwise
// decode as a gray-padded image.
inline void jpeg_warning(j_common_ptr cinfo, int level) {
  if (level < 0 && cinfo->err->msg_code == JWRN_JPEG_EOF) jpeg_error_exit(cinfo);
}

inline Image decode_jpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  std::vector<std::uint8_t> buffer;
  Image img;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  err.base.emit_message = jpeg_warning;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    fail(ErrorKind::MalformedImage, std::string("jpeg: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  if (cinfo.jpeg_color_space == JCS_CMYK || cinfo.jpeg_color_space == JCS_YCCK) {
    jpeg_destroy_decompress(&cinfo);
    fail(ErrorKind::MalformedImage, "jpeg: CMYK images are not supported");
  }
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const int w = static_cast<int>(cinfo.output_width);
  const int h = static_cast<int>(cinfo.output_height);
  const int c = cinfo.output_components;
  buffer.resize(static_cast<std::size_t>(w) * h * c);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = buffer.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * c;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  img = Image(w, h, c);
  std::transform(buffer.begin(), buffer.end(), img.data.begin(),
                 [](std::uint8_t v) { return static_cast<float>(v) / 255.0f; });
  return img;
}

inline std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace detail

/// Decodes a PNG or JPEG stream. Channels come back as 1 (gray) or 3 (RGB);
/// alpha is composited onto white.
inline Image decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) fail(ErrorKind::MalformedImage, "empty byte stream");
  if (detail::looks_like_png(bytes)) return detail::decode_png(bytes);
  if (detail::looks_like_jpeg(bytes)) return detail::decode_jpeg(bytes);
  fail(ErrorKind::MalformedImage, "unsupported image format (expected JPEG or PNG)");
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Image load_image(const std::string& path) { return decode_image(read_file_bytes(path)); }

inline std::vector<std::uint8_t> encode_png(const Image& img) {
  if (img.channels != 1 && img.channels != 3) fail(ErrorKind::MalformedImage, "png: unsupported channel count");
  std::vector<std::uint8_t> pixels(img.data.size());
  std::transform(img.data.begin(), img.data.end(), pixels.begin(), detail::to_byte);
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
    fail(ErrorKind::IoError, std::string("png encode: ") + png.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, pixels.data(), 0, nullptr)) {
    fail(ErrorKind::IoError, std::string("png encode: ") + png.message);
  }
  out.resize(size);
  return out;
}

/// Bilinear downscale so the longest side is at most max_dim. Target sides
/// are floor(side * max_dim / longest), never below 1.
inline Image resize_max(const Image& img, int max_dim) {
  if (max_dim < 1) max_dim = 1;
  const int longest = std::max(img.width, img.height);
  if (longest <= max_dim) return img;
  const auto scaled = [&](int side) {
    return std::max(1, static_cast<int>((static_cast<long long>(side) * max_dim) / longest));
  };
  const int nw = scaled(img.width);
  const int nh = scaled(img.height);
  const double sx = static_cast<double>(img.width) / nw;
  const double sy = static_cast<double>(img.height) / nh;
  Image out(nw, nh, img.channels);
  for (int y = 0; y < nh; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < nw; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < img.channels; ++c) {
        const double top = img.at(x0, y0, c) * (1 - wx) + img.at(x1, y0, c) * wx;
        const double bot = img.at(x0, y1, c) * (1 - wx) + img.at(x1, y1, c) * wx;
        out.at(x, y, c) = static_cast<float>(top * (1 - wy) + bot * wy);
      }
    }
  }
  return out;
}

/// Area-averaging resample to an exact size (aspect ratio not preserved).
inline Image resize_area(const Image& img, int nw, int nh) {
  Image out(nw, nh, img.channels);
  const double sx = static_cast<double>(img.width) / nw;
  const double sy = static_cast<double>(img.height) / nh;
  std::vector<double> acc(img.channels);
  for (int y = 0; y < nh; ++y) {
    const double y_lo = y * sy, y_hi = (y + 1) * sy;
    for (int x = 0; x < nw; ++x) {
      const double x_lo = x * sx, x_hi = (x + 1) * sx;
      std::fill(acc.begin(), acc.end(), 0.0);
      double total = 0.0;
      for (int iy = static_cast<int>(y_lo); iy < std::min(img.height, static_cast<int>(std::ceil(y_hi))); ++iy) {
        const double wy = std::min<double>(iy + 1, y_hi) - std::max<double>(iy, y_lo);
        if (wy <= 0) continue;
        for (int ix = static_cast<int>(x_lo); ix < std::min(img.width, static_cast<int>(std::ceil(x_hi))); ++ix) {
          const double wx = std::min<double>(ix + 1, x_hi) - std::max<double>(ix, x_lo);
          if (wx <= 0) continue;
          for (int c = 0; c < img.channels; ++c) acc[c] += wx * wy * img.at(ix, iy, c);
          total += wx * wy;
        }
      }
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = static_cast<float>(acc[c] / total);
    }
  }
  return out;
}

inline GrayImage to_gray(const Image& img) {
  GrayImage out(img.width, img.height);
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  if (img.channels == 1) {
    std::copy(img.data.begin(), img.data.end(), out.data.begin());
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const float* p = &img.data[i * img.channels];
    out.data[i] = std::clamp(0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2], 0.0f, 1.0f);
  }
  return out;
}

/// Normalized 1-D Gaussian taps, radius ceil(3 sigma).
inline std::vector<float> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += k[i + radius];
  }
  std::vector<float> out(k.size());
  for (std::size_t i = 0; i < k.size(); ++i) out[i] = static_cast<float>(k[i] / sum);
  return out;
}

/// Separable Gaussian convolution with clamp-to-edge borders.
inline GrayImage gaussian_blur(const GrayImage& img, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) fail(ErrorKind::InvalidSigma, "sigma must be > 0");
  const auto kernel = gaussian_kernel(sigma);
  const int radius = static_cast<int>(kernel.size() / 2);
  const int w = img.width, h = img.height;
  GrayImage tmp(w, h), out(w, h);
  std::vector<float> row(static_cast<std::size_t>(w + 2 * radius));
  for (int y = 0; y < h; ++y) {
    for (int x = -radius; x < w + radius; ++x) row[x + radius] = img.at(std::clamp(x, 0, w - 1), y);
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (std::size_t k = 0; k < kernel.size(); ++k) acc += kernel[k] * row[x + k];
      tmp.at(x, y) = acc;
    }
  }
  std::vector<float> col(static_cast<std::size_t>(h + 2 * radius));
  for (int x = 0; x < w; ++x) {
    for (int y = -radius; y < h + radius; ++y) col[y + radius] = tmp.at(x, std::clamp(y, 0, h - 1));
    for (int y = 0; y < h; ++y) {
      float acc = 0.0f;
      for (std::size_t k = 0; k < kernel.size(); ++k) acc += kernel[k] * col[y + k];
      out.at(x, y) = acc;
    }
  }
  return out;
}

/// Every second pixel in both directions.
inline GrayImage downsample_by_two(const GrayImage& img) {
  GrayImage out(std::max(1, img.width / 2), std::max(1, img.height / 2));
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) out.at(x, y) = img.at(2 * x, 2 * y);
  return out;
}

/// Quarter turn clockwise.
inline Image rotate90(const Image& img) {
  Image out(img.height, img.width, img.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(y, img.height - 1 - x, c);
  return out;
}

}  // namespace roomsemble
