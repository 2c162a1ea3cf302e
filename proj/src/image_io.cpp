#include "sanet/image_io.hpp"

#include <fmt/format.h>
#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace sanet {
namespace {

bool has_extension(const std::filesystem::path& p, std::initializer_list<const char*> exts) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return std::any_of(exts.begin(), exts.end(), [&](const char* e) { return ext == e; });
}

Image8 read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw ImageDecodeError(fmt::format("cannot decode image {}: {}", path.string(), img.message));
  }
  const bool gray = (img.format & PNG_FORMAT_FLAG_COLOR) == 0;
  img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Image8 out;
  out.width = img.width;
  out.height = img.height;
  out.channels = gray ? 1 : 3;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw ImageDecodeError(fmt::format("cannot decode image {}: {}", path.string(), msg));
  }
  return out;
}

std::string next_pnm_token(std::istream& in) {
  std::string tok;
  while (in) {
    int c = in.peek();
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  while (in && !std::isspace(in.peek()) && in.peek() != EOF) tok.push_back(static_cast<char>(in.get()));
  return tok;
}

Image8 read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageDecodeError("cannot open image " + path.string());
  const auto magic = next_pnm_token(in);
  if (magic != "P5" && magic != "P2") throw ImageDecodeError("cannot decode image " + path.string() + ": not a PGM file");
  Image8 out;
  int maxval = 0;
  try {
    out.width = std::stoul(next_pnm_token(in));
    out.height = std::stoul(next_pnm_token(in));
    maxval = std::stoi(next_pnm_token(in));
  } catch (const std::exception&) {
    throw ImageDecodeError("cannot decode image " + path.string() + ": bad PGM header");
  }
  if (maxval <= 0 || maxval > 255 || out.width == 0 || out.height == 0) {
    throw ImageDecodeError("cannot decode image " + path.string() + ": unsupported PGM header");
  }
  out.channels = 1;
  out.pixels.resize(out.width * out.height);
  if (magic == "P5") {
    in.get();  // single whitespace after maxval
    in.read(reinterpret_cast<char*>(out.pixels.data()), static_cast<std::streamsize>(out.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(out.pixels.size())) {
      throw ImageDecodeError("cannot decode image " + path.string() + ": truncated PGM data");
    }
  } else {
    for (auto& px : out.pixels) {
      const auto tok = next_pnm_token(in);
      if (tok.empty()) throw ImageDecodeError("cannot decode image " + path.string() + ": truncated PGM data");
      px = static_cast<std::uint8_t>(std::stoi(tok));
    }
  }
  if (maxval != 255) {
    for (auto& px : out.pixels) px = static_cast<std::uint8_t>(std::lround(px * 255.0 / maxval));
  }
  return out;
}

}  // namespace

Image8 read_image(const std::filesystem::path& path) {
  if (has_extension(path, {".pgm"})) return read_pgm(path);
  return read_png(path);
}

void write_png(const Image8& image, const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw std::runtime_error(fmt::format("cannot write {}: {}", path.string(), img.message));
  }
}

void write_pgm(const Image8& image, const std::filesystem::path& path) {
  if (image.channels != 1) throw std::invalid_argument("write_pgm needs a single-channel image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
}

std::vector<float> to_gray_unit(const Image8& image) {
  const std::size_t n = image.width * image.height;
  std::vector<float> out(n);
  if (image.channels == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(image.pixels[i] / 255.0);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const auto* px = &image.pixels[i * image.channels];
      out[i] = static_cast<float>((0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) / 255.0);
    }
  }
  return out;
}

std::vector<float> resize_bilinear(const std::vector<float>& src, std::size_t src_w, std::size_t src_h,
                                   std::size_t dst_w, std::size_t dst_h) {
  if (src_w == dst_w && src_h == dst_h) return src;
  std::vector<float> out(dst_w * dst_h);
  const double sx = static_cast<double>(src_w) / dst_w, sy = static_cast<double>(src_h) / dst_h;
  for (std::size_t y = 0; y < dst_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src_h - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, src_h - 1);
    const double wy = fy - y0;
    for (std::size_t x = 0; x < dst_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src_w - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, src_w - 1);
      const double wx = fx - x0;
      const double top = src[y0 * src_w + x0] * (1 - wx) + src[y0 * src_w + x1] * wx;
      const double bot = src[y1 * src_w + x0] * (1 - wx) + src[y1 * src_w + x1] * wx;
      out[y * dst_w + x] = static_cast<float>(top * (1 - wy) + bot * wy);
    }
  }
  return out;
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace sanet
