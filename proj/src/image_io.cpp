#include "phigen/image_io.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "phigen/error.hpp"

namespace phigen {
namespace {

void rename_into_place(const std::string& tmp, const std::string& path) {
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp + " to " + path + ": " + ec.message());
}

std::ofstream open_tmp(const std::string& tmp) {
  std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + tmp);
  return out;
}

// Reads one whitespace-delimited token, skipping comment lines.
std::string next_token(std::istream& in) {
  std::string tok;
  int c = in.get();
  while (c != EOF && (std::isspace(c) || c == '#')) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    }
    c = in.get();
  }
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  return tok;
}

int parse_dim(const std::string& tok, const std::string& path) {
  if (tok.empty()) throw IoError("truncated header in " + path);
  try {
    int v = std::stoi(tok);
    if (v <= 0) throw IoError("non-positive dimension in " + path);
    return v;
  } catch (const IoError&) {
    throw;
  } catch (const std::exception&) {
    throw IoError("bad header token '" + tok + "' in " + path);
  }
}

}  // namespace

ImageF make_image(int width, int height, int channels, float fill) {
  ImageF img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  img.data.assign(static_cast<size_t>(width) * height * channels, fill);
  return img;
}

uint8_t quantize8(float v) {
  const float clamped = std::clamp(v, 0.0f, 1.0f) * 255.0f;
  // nearbyint honors the default round-to-nearest-even mode.
  const float r = std::nearbyint(clamped);
  return static_cast<uint8_t>(r);
}

void write_ppm(const std::string& path, const ImageF& image) {
  if (image.channels != 3) throw IoError("write_ppm requires 3 channels");
  const std::string tmp = path + ".tmp";
  {
    auto out = open_tmp(tmp);
    out << "P6\n" << image.width << " " << image.height << "\n255\n";
    std::vector<uint8_t> row(static_cast<size_t>(image.width) * 3);
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x)
        for (int c = 0; c < 3; ++c) row[static_cast<size_t>(x) * 3 + c] = quantize8(image.at(y, x, c));
      out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw IoError("write failed: " + tmp);
  }
  rename_into_place(tmp, path);
}

ImageF read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  if (next_token(in) != "P6") throw IoError("not a P6 file: " + path);
  const int w = parse_dim(next_token(in), path);
  const int h = parse_dim(next_token(in), path);
  const int maxval = parse_dim(next_token(in), path);
  if (maxval != 255) throw IoError("unsupported maxval in " + path);
  ImageF img = make_image(w, h, 3);
  std::vector<uint8_t> raw(static_cast<size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<size_t>(in.gcount()) != raw.size())
    throw IoError("truncated pixel data in " + path + " at byte offset " +
                  std::to_string(in.gcount()));
  for (size_t i = 0; i < raw.size(); ++i) img.data[i] = static_cast<float>(raw[i]) / 255.0f;
  return img;
}

void write_pgm(const std::string& path, const std::vector<uint8_t>& values, int width, int height) {
  if (values.size() != static_cast<size_t>(width) * height)
    throw IoError("write_pgm: size mismatch");
  const std::string tmp = path + ".tmp";
  {
    auto out = open_tmp(tmp);
    out << "P5\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size()));
    if (!out) throw IoError("write failed: " + tmp);
  }
  rename_into_place(tmp, path);
}

std::vector<uint8_t> read_pgm(const std::string& path, int& width, int& height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  if (next_token(in) != "P5") throw IoError("not a P5 file: " + path);
  width = parse_dim(next_token(in), path);
  height = parse_dim(next_token(in), path);
  const int maxval = parse_dim(next_token(in), path);
  if (maxval != 255) throw IoError("unsupported maxval in " + path);
  std::vector<uint8_t> values(static_cast<size_t>(width) * height);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size()));
  if (static_cast<size_t>(in.gcount()) != values.size())
    throw IoError("truncated pixel data in " + path + " at byte offset " +
                  std::to_string(in.gcount()));
  return values;
}

void write_pfm(const std::string& path, const std::vector<float>& values, int width, int height) {
  if (values.size() != static_cast<size_t>(width) * height)
    throw IoError("write_pfm: size mismatch");
  const std::string tmp = path + ".tmp";
  {
    auto out = open_tmp(tmp);
    out << "Pf\n" << width << " " << height << "\n-1.0\n";
    // Bottom row first, per convention for negative scale (little endian).
    for (int y = height - 1; y >= 0; --y)
      out.write(reinterpret_cast<const char*>(values.data() + static_cast<size_t>(y) * width),
                static_cast<std::streamsize>(sizeof(float) * width));
    if (!out) throw IoError("write failed: " + tmp);
  }
  rename_into_place(tmp, path);
}

std::vector<float> read_pfm(const std::string& path, int& width, int& height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  if (next_token(in) != "Pf") throw IoError("not a Pf file: " + path);
  width = parse_dim(next_token(in), path);
  height = parse_dim(next_token(in), path);
  const std::string scale_tok = next_token(in);
  double scale = 0.0;
  try {
    scale = std::stod(scale_tok);
  } catch (const std::exception&) {
    throw IoError("bad scale '" + scale_tok + "' in " + path);
  }
  if (scale >= 0) throw IoError("big-endian PFM unsupported: " + path);
  std::vector<float> values(static_cast<size_t>(width) * height);
  for (int y = height - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(values.data() + static_cast<size_t>(y) * width),
            static_cast<std::streamsize>(sizeof(float) * width));
    if (static_cast<size_t>(in.gcount()) != sizeof(float) * width)
      throw IoError("truncated pixel data in " + path);
  }
  return values;
}

std::vector<float> area_resample(const std::vector<float>& src, int src_w, int src_h,
                                 int channels, int dst_w, int dst_h) {
  if (src.size() != static_cast<size_t>(src_w) * src_h * channels)
    throw IoError("area_resample: size mismatch");
  std::vector<float> dst(static_cast<size_t>(dst_w) * dst_h * channels);
  const double sy = double(src_h) / dst_h;
  const double sx = double(src_w) / dst_w;
  for (int y = 0; y < dst_h; ++y) {
    const double y0 = y * sy, y1 = (y + 1) * sy;
    const int iy0 = int(std::floor(y0)), iy1 = std::min(src_h, int(std::ceil(y1)));
    for (int x = 0; x < dst_w; ++x) {
      const double x0 = x * sx, x1 = (x + 1) * sx;
      const int ix0 = int(std::floor(x0)), ix1 = std::min(src_w, int(std::ceil(x1)));
      for (int c = 0; c < channels; ++c) {
        double acc = 0, area = 0;
        for (int yy = iy0; yy < iy1; ++yy) {
          const double hy = std::min<double>(yy + 1, y1) - std::max<double>(yy, y0);
          for (int xx = ix0; xx < ix1; ++xx) {
            const double wx = std::min<double>(xx + 1, x1) - std::max<double>(xx, x0);
            acc += hy * wx * src[(static_cast<size_t>(yy) * src_w + xx) * channels + c];
            area += hy * wx;
          }
        }
        dst[(static_cast<size_t>(y) * dst_w + x) * channels + c] = float(acc / area);
      }
    }
  }
  return dst;
}

}  // namespace phigen
