#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "barseg/tensor.hpp"

namespace barseg {

// Row-major 2-D grid; the workhorse for images (uint8), masks (uint8),
// binary/label maps and probability planes.
template <typename P>
struct Grid {
  int w = 0, h = 0;
  std::vector<P> v;

  Grid() = default;
  Grid(int w_, int h_, P fill = P{}) : w(w_), h(h_), v(static_cast<std::size_t>(w_) * h_, fill) {
    require(w_ >= 0 && h_ >= 0, "grid: negative dimensions");
  }

  P& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
  const P& at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
  bool inside(int y, int x) const { return y >= 0 && y < h && x >= 0 && x < w; }
  std::size_t size() const { return v.size(); }
  bool operator==(const Grid&) const = default;
};

using GrayImage = Grid<std::uint8_t>;

// ---------------------------------------------------------------------------
// PGM / PPM
// ---------------------------------------------------------------------------

namespace detail {
inline int next_pnm_token(std::istream& is) {
  // skips whitespace and '#' comments, returns the next integer
  int c = is.get();
  while (is) {
    if (c == '#') {
      while (is && c != '\n') c = is.get();
    } else if (std::isspace(c)) {
      c = is.get();
    } else {
      break;
    }
  }
  if (!is) throw std::invalid_argument("pnm: truncated header");
  int val = 0;
  bool any = false;
  while (is && std::isdigit(c)) {
    val = val * 10 + (c - '0');
    any = true;
    c = is.get();
  }
  if (!any) throw std::invalid_argument("pnm: malformed header");
  return val;
}
}  // namespace detail

// Reads P5 (grayscale) directly; P6 (color) collapses to gray with integer
// BT.601 luma. maxval must be 255.
inline GrayImage read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::invalid_argument("pnm: cannot open '" + path + "'");
  char m0 = static_cast<char>(is.get()), m1 = static_cast<char>(is.get());
  bool color;
  if (m0 == 'P' && m1 == '5')
    color = false;
  else if (m0 == 'P' && m1 == '6')
    color = true;
  else
    throw std::invalid_argument("pnm: '" + path + "' is not a P5/P6 file");
  int w = detail::next_pnm_token(is);
  int h = detail::next_pnm_token(is);
  int maxval = detail::next_pnm_token(is);
  if (maxval != 255)
    throw std::invalid_argument("pnm: '" + path + "' has unsupported maxval " +
                                std::to_string(maxval));
  GrayImage img(w, h);
  if (!color) {
    is.read(reinterpret_cast<char*>(img.v.data()), static_cast<std::streamsize>(img.size()));
    if (!is) throw std::invalid_argument("pnm: '" + path + "' truncated pixel data");
  } else {
    std::vector<std::uint8_t> rgb(img.size() * 3);
    is.read(reinterpret_cast<char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
    if (!is) throw std::invalid_argument("pnm: '" + path + "' truncated pixel data");
    for (std::size_t i = 0; i < img.size(); ++i) {
      unsigned r = rgb[3 * i], g = rgb[3 * i + 1], b = rgb[3 * i + 2];
      img.v[i] = static_cast<std::uint8_t>((77 * r + 150 * g + 29 * b + 128) >> 8);
    }
  }
  return img;
}

inline void write_pgm(const std::string& path, const GrayImage& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("pnm: cannot open '" + path + "' for writing");
  os << "P5\n" << img.w << " " << img.h << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.v.data()), static_cast<std::streamsize>(img.size()));
  if (!os) throw std::runtime_error("pnm: write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// Resampling and filtering
// ---------------------------------------------------------------------------

inline GrayImage resize_bilinear(const GrayImage& src, int ow, int oh) {
  require(ow >= 1 && oh >= 1 && src.w >= 1 && src.h >= 1, "resize: empty image");
  GrayImage out(ow, oh);
  const double sx = static_cast<double>(src.w) / ow;
  const double sy = static_cast<double>(src.h) / oh;
  for (int y = 0; y < oh; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double wy = fy - y0;
    int ya = std::clamp(y0, 0, src.h - 1), yb = std::clamp(y0 + 1, 0, src.h - 1);
    for (int x = 0; x < ow; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double wx = fx - x0;
      int xa = std::clamp(x0, 0, src.w - 1), xb = std::clamp(x0 + 1, 0, src.w - 1);
      double val = (1 - wy) * ((1 - wx) * src.at(ya, xa) + wx * src.at(ya, xb)) +
                   wy * ((1 - wx) * src.at(yb, xa) + wx * src.at(yb, xb));
      out.at(y, x) = static_cast<std::uint8_t>(std::lround(std::clamp(val, 0.0, 255.0)));
    }
  }
  return out;
}

template <typename P>
Grid<P> resize_nearest(const Grid<P>& src, int ow, int oh) {
  require(ow >= 1 && oh >= 1 && src.w >= 1 && src.h >= 1, "resize: empty image");
  Grid<P> out(ow, oh);
  const double sx = static_cast<double>(src.w) / ow;
  const double sy = static_cast<double>(src.h) / oh;
  for (int y = 0; y < oh; ++y) {
    int ys = std::clamp(static_cast<int>((y + 0.5) * sy), 0, src.h - 1);
    for (int x = 0; x < ow; ++x) {
      int xs = std::clamp(static_cast<int>((x + 0.5) * sx), 0, src.w - 1);
      out.at(y, x) = src.at(ys, xs);
    }
  }
  return out;
}

template <typename P>
Grid<P> pad_bottom_right(const Grid<P>& src, int new_w, int new_h, P fill) {
  require(new_w >= src.w && new_h >= src.h, "pad: target smaller than source");
  Grid<P> out(new_w, new_h, fill);
  for (int y = 0; y < src.h; ++y)
    std::copy(&src.at(y, 0), &src.at(y, 0) + src.w, &out.at(y, 0));
  return out;
}

inline int mean_intensity(const GrayImage& img) {
  if (img.size() == 0) return 0;
  long long sum = 0;
  for (auto p : img.v) sum += p;
  return static_cast<int>((sum + static_cast<long long>(img.size()) / 2) /
                          static_cast<long long>(img.size()));
}

inline GrayImage gaussian_blur(const GrayImage& src, double sigma) {
  if (sigma <= 0.0 || src.size() == 0) return src;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (auto& k : kernel) k /= sum;

  std::vector<double> tmp(src.size());
  for (int y = 0; y < src.h; ++y)
    for (int x = 0; x < src.w; ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * src.at(y, std::clamp(x + i, 0, src.w - 1));
      tmp[static_cast<std::size_t>(y) * src.w + x] = acc;
    }
  GrayImage out(src.w, src.h);
  for (int y = 0; y < src.h; ++y)
    for (int x = 0; x < src.w; ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0, src.h - 1)) * src.w + x];
      out.at(y, x) = static_cast<std::uint8_t>(std::lround(std::clamp(acc, 0.0, 255.0)));
    }
  return out;
}

// ---------------------------------------------------------------------------
// Rotation about the image center with canvas expansion
// ---------------------------------------------------------------------------

// Angles follow atan2 in image coordinates (x right, y down): at 90 degrees
// pixel (r, c) of an HxW image lands on (c, H-1-r).
struct RotationMap {
  int src_w = 0, src_h = 0;
  int dst_w = 0, dst_h = 0;
  double cos_a = 1, sin_a = 0;
  double src_cx = 0, src_cy = 0, dst_cx = 0, dst_cy = 0;

  // source -> destination
  void forward(double x, double y, double& ox, double& oy) const {
    ox = cos_a * (x - src_cx) - sin_a * (y - src_cy) + dst_cx;
    oy = sin_a * (x - src_cx) + cos_a * (y - src_cy) + dst_cy;
  }
  // destination -> source
  void inverse(double x, double y, double& ox, double& oy) const {
    ox = cos_a * (x - dst_cx) + sin_a * (y - dst_cy) + src_cx;
    oy = -sin_a * (x - dst_cx) + cos_a * (y - dst_cy) + src_cy;
  }
};

inline RotationMap rotation_map(int w, int h, double angle_deg) {
  RotationMap m;
  m.src_w = w;
  m.src_h = h;
  const double a = angle_deg * 3.14159265358979323846 / 180.0;
  m.cos_a = std::cos(a);
  m.sin_a = std::sin(a);
  m.dst_w = static_cast<int>(std::ceil(w * std::fabs(m.cos_a) + h * std::fabs(m.sin_a) - 1e-9));
  m.dst_h = static_cast<int>(std::ceil(w * std::fabs(m.sin_a) + h * std::fabs(m.cos_a) - 1e-9));
  m.src_cx = (w - 1) / 2.0;
  m.src_cy = (h - 1) / 2.0;
  m.dst_cx = (m.dst_w - 1) / 2.0;
  m.dst_cy = (m.dst_h - 1) / 2.0;
  return m;
}

inline GrayImage rotate_bilinear(const GrayImage& src, const RotationMap& m, std::uint8_t fill) {
  GrayImage out(m.dst_w, m.dst_h, fill);
  for (int y = 0; y < m.dst_h; ++y)
    for (int x = 0; x < m.dst_w; ++x) {
      double sx, sy;
      m.inverse(x, y, sx, sy);
      int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      if (x0 < -1 || x0 >= src.w || y0 < -1 || y0 >= src.h) continue;
      double wx = sx - x0, wy = sy - y0;
      auto sample = [&](int yy, int xx) -> double {
        if (yy < 0 || yy >= src.h || xx < 0 || xx >= src.w) return fill;
        return src.at(yy, xx);
      };
      double val = (1 - wy) * ((1 - wx) * sample(y0, x0) + wx * sample(y0, x0 + 1)) +
                   wy * ((1 - wx) * sample(y0 + 1, x0) + wx * sample(y0 + 1, x0 + 1));
      out.at(y, x) = static_cast<std::uint8_t>(std::lround(std::clamp(val, 0.0, 255.0)));
    }
  return out;
}

template <typename P>
Grid<P> rotate_nearest(const Grid<P>& src, const RotationMap& m, P fill) {
  Grid<P> out(m.dst_w, m.dst_h, fill);
  for (int y = 0; y < m.dst_h; ++y)
    for (int x = 0; x < m.dst_w; ++x) {
      double sx, sy;
      m.inverse(x, y, sx, sy);
      int xs = static_cast<int>(std::lround(sx));
      int ys = static_cast<int>(std::lround(sy));
      if (xs >= 0 && xs < src.w && ys >= 0 && ys < src.h) out.at(y, x) = src.at(ys, xs);
    }
  return out;
}

// Input normalization: pixel / 255 into a single-channel tensor.
template <typename T>
Tensor<T> image_to_tensor(const GrayImage& img) {
  Tensor<T> t(1, 1, img.h, img.w);
  for (std::size_t i = 0; i < img.size(); ++i)
    t.data[i] = static_cast<T>(img.v[i]) / static_cast<T>(255);
  return t;
}

}  // namespace barseg
