#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "barseg/geometry.hpp"
#include "barseg/image.hpp"
#include "barseg/rng.hpp"
#include "barseg/sample.hpp"

namespace barseg {

// The four desk-scale symbology classes. Indices are the stable class ids.
enum class SymbologyKind : int { EAN13 = 0, Bars1D = 1, Matrix2D = 2, Stacked2D = 3 };

constexpr int kSymbologyCount = 4;

inline const char* symbology_name(SymbologyKind k) {
  switch (k) {
    case SymbologyKind::EAN13: return "EAN13";
    case SymbologyKind::Bars1D: return "Bars1D";
    case SymbologyKind::Matrix2D: return "Matrix2D";
    case SymbologyKind::Stacked2D: return "Stacked2D";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// EAN-13 encoding
// ---------------------------------------------------------------------------

// Weighted mod-10 checksum over the first 12 digits (weights 1,3,1,3,...).
inline int ean13_check_digit(const std::string& first12) {
  require(first12.size() == 12, "ean13: need 12 digits for the check digit");
  int sum = 0;
  for (int i = 0; i < 12; ++i) {
    char c = first12[i];
    require(c >= '0' && c <= '9', "ean13: non-digit character in '" + first12 + "'");
    sum += (c - '0') * (i % 2 == 0 ? 1 : 3);
  }
  return (10 - sum % 10) % 10;
}

// 95-module sequence: 101 guard, 42 left modules (L/G parity selected by the
// leading digit), 01010 center, 42 right modules (R codes), 101 guard.
inline std::vector<std::uint8_t> encode_ean13(const std::string& digits) {
  require(digits.size() == 13, "ean13: expected 13 digits, got " +
                                   std::to_string(digits.size()));
  for (char c : digits)
    require(c >= '0' && c <= '9', "ean13: non-digit character in '" + digits + "'");
  int check = ean13_check_digit(digits.substr(0, 12));
  require(digits[12] - '0' == check,
          "ean13: check digit mismatch in '" + digits + "', expected " + std::to_string(check));

  static const char* kL[10] = {"0001101", "0011001", "0010011", "0111101", "0100011",
                               "0110001", "0101111", "0111011", "0110111", "0001011"};
  static const char* kG[10] = {"0100111", "0110011", "0011011", "0100001", "0011101",
                               "0111001", "0000101", "0010001", "0001001", "0010111"};
  static const char* kR[10] = {"1110010", "1100110", "1101100", "1000010", "1011100",
                               "1001110", "1010000", "1000100", "1001000", "1110100"};
  // parity layout of the six left digits, selected by the first digit
  static const char* kParity[10] = {"LLLLLL", "LLGLGG", "LLGGLG", "LLGGGL", "LGLLGG",
                                    "LGGLLG", "LGGGLL", "LGLGLG", "LGLGGL", "LGGLGL"};

  std::vector<std::uint8_t> modules;
  modules.reserve(95);
  auto push = [&](const char* bits) {
    for (const char* p = bits; *p; ++p) modules.push_back(*p == '1');
  };
  push("101");
  const char* parity = kParity[digits[0] - '0'];
  for (int i = 0; i < 6; ++i) {
    int d = digits[1 + i] - '0';
    push(parity[i] == 'L' ? kL[d] : kG[d]);
  }
  push("01010");
  for (int i = 0; i < 6; ++i) push(kR[digits[7 + i] - '0']);
  push("101");
  return modules;
}

// ---------------------------------------------------------------------------
// Symbol rendering
// ---------------------------------------------------------------------------

constexpr int kQuietZoneModules = 7;  // blank margin on each side of a symbol

// A rendered symbol: grayscale tile (quiet zone included) plus the tight
// mask covering the module region only.
struct SymbolTile {
  GrayImage image;
  Grid<std::uint8_t> mask;
  std::uint8_t paper = 255;  // background level, used as rotation fill
};

namespace detail {
inline SymbolTile blank_tile(int w, int h, std::uint8_t paper) {
  SymbolTile t;
  t.image = GrayImage(w, h, paper);
  t.mask = Grid<std::uint8_t>(w, h, 0);
  t.paper = paper;
  return t;
}
}  // namespace detail

inline SymbolTile render_ean13(const std::string& digits, int px_per_module, int height_px,
                               std::uint8_t ink = 20, std::uint8_t paper = 235) {
  auto modules = encode_ean13(digits);
  const int m = px_per_module;
  const int qz = kQuietZoneModules * m;
  const int w = 95 * m + 2 * qz;
  SymbolTile t = detail::blank_tile(w, height_px, paper);
  for (int i = 0; i < 95; ++i) {
    if (!modules[i]) continue;
    for (int y = 0; y < height_px; ++y)
      for (int x = 0; x < m; ++x) t.image.at(y, qz + i * m + x) = ink;
  }
  for (int y = 0; y < height_px; ++y)
    for (int x = qz; x < qz + 95 * m; ++x) t.mask.at(y, x) = 1;
  return t;
}

inline std::string random_ean13_digits(Rng& rng) {
  std::string d;
  for (int i = 0; i < 12; ++i) d.push_back(static_cast<char>('0' + rng.index(10)));
  d.push_back(static_cast<char>('0' + ean13_check_digit(d)));
  return d;
}

// Generic 1-D symbol: chunkier random run-length bars, visually distinct from
// the fixed thin-bar EAN grid.
inline SymbolTile render_bars1d(Rng& rng, int px_per_module, int height_px,
                                std::uint8_t ink, std::uint8_t paper) {
  const int m = px_per_module;
  const int n_bars = 8 + static_cast<int>(rng.index(7));
  std::vector<int> widths;  // alternating bar, gap, ..., bar (modules)
  for (int i = 0; i < n_bars; ++i) {
    widths.push_back(2 + static_cast<int>(rng.index(4)));  // bar 2..5
    if (i + 1 < n_bars) widths.push_back(1 + static_cast<int>(rng.index(3)));  // gap 1..3
  }
  int total = 0;
  for (int wd : widths) total += wd;
  const int qz = kQuietZoneModules * m;
  SymbolTile t = detail::blank_tile(total * m + 2 * qz, height_px, paper);
  int x = qz;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    int span = widths[i] * m;
    if (i % 2 == 0)
      for (int y = 0; y < height_px; ++y)
        for (int xx = 0; xx < span; ++xx) t.image.at(y, x + xx) = ink;
    x += span;
  }
  for (int y = 0; y < height_px; ++y)
    for (int xx = qz; xx < qz + total * m; ++xx) t.mask.at(y, xx) = 1;
  return t;
}

// QR-like matrix: random module grid with three 7x7 finder squares.
inline SymbolTile render_matrix2d(Rng& rng, int px_per_module, std::uint8_t ink,
                                  std::uint8_t paper) {
  const int m = px_per_module;
  const int n = 17 + 2 * static_cast<int>(rng.index(5));  // 17..25, odd
  Grid<std::uint8_t> bits(n, n, 0);
  for (auto& b : bits.v) b = rng.bernoulli(0.5) ? 1 : 0;
  auto stamp_finder = [&](int oy, int ox) {
    for (int y = 0; y < 7; ++y)
      for (int x = 0; x < 7; ++x) {
        bool ring = y == 0 || y == 6 || x == 0 || x == 6;
        bool core = y >= 2 && y <= 4 && x >= 2 && x <= 4;
        bits.at(oy + y, ox + x) = (ring || core) ? 1 : 0;
      }
  };
  stamp_finder(0, 0);
  stamp_finder(0, n - 7);
  stamp_finder(n - 7, 0);

  const int qz = 4 * m;  // matrix symbols carry a slimmer quiet zone
  const int side = n * m + 2 * qz;
  SymbolTile t = detail::blank_tile(side, side, paper);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      if (!bits.at(y, x)) continue;
      for (int yy = 0; yy < m; ++yy)
        for (int xx = 0; xx < m; ++xx) t.image.at(qz + y * m + yy, qz + x * m + xx) = ink;
    }
  for (int y = qz; y < qz + n * m; ++y)
    for (int x = qz; x < qz + n * m; ++x) t.mask.at(y, x) = 1;
  return t;
}

// PDF417-like stack: 3..8 rows of equal-width random bar patterns with solid
// start/stop bars.
inline SymbolTile render_stacked2d(Rng& rng, int px_per_module, std::uint8_t ink,
                                   std::uint8_t paper) {
  const int m = px_per_module;
  const int rows = 3 + static_cast<int>(rng.index(6));
  const int row_h = (3 + static_cast<int>(rng.index(3))) * m;
  const int cols = 30;  // module columns incl. 2-module start/stop bars
  const int qz = kQuietZoneModules * m;
  SymbolTile t = detail::blank_tile(cols * m + 2 * qz, rows * row_h + 2 * qz, paper);
  for (int r = 0; r < rows; ++r) {
    std::vector<std::uint8_t> row(cols, 0);
    row[0] = row[1] = 1;
    row[cols - 1] = row[cols - 2] = 1;
    int x = 3;
    while (x < cols - 3) {
      int bar = 1 + static_cast<int>(rng.index(3));
      for (int i = 0; i < bar && x < cols - 3; ++i) row[x++] = 1;
      x += 1 + static_cast<int>(rng.index(3));
    }
    for (int c = 0; c < cols; ++c) {
      if (!row[c]) continue;
      for (int y = 0; y < row_h; ++y)
        for (int xx = 0; xx < m; ++xx)
          t.image.at(qz + r * row_h + y, qz + c * m + xx) = ink;
    }
  }
  for (int y = qz; y < qz + rows * row_h; ++y)
    for (int x = qz; x < qz + cols * m; ++x) t.mask.at(y, x) = 1;
  return t;
}

// Randomized symbol of the given kind at a fixed module scale.
inline SymbolTile render_symbol(SymbologyKind kind, int px_per_module, Rng& rng) {
  const auto ink = static_cast<std::uint8_t>(10 + rng.index(50));
  const auto paper = static_cast<std::uint8_t>(200 + rng.index(46));
  switch (kind) {
    case SymbologyKind::EAN13: {
      int height = (25 + static_cast<int>(rng.index(21))) * px_per_module;
      return render_ean13(random_ean13_digits(rng), px_per_module, height, ink, paper);
    }
    case SymbologyKind::Bars1D: {
      int height = (20 + static_cast<int>(rng.index(21))) * px_per_module;
      return render_bars1d(rng, px_per_module, height, ink, paper);
    }
    case SymbologyKind::Matrix2D:
      return render_matrix2d(rng, px_per_module, ink, paper);
    case SymbologyKind::Stacked2D:
      return render_stacked2d(rng, px_per_module, ink, paper);
  }
  throw std::invalid_argument("render_symbol: unknown kind");
}

// ---------------------------------------------------------------------------
// Scene composition
// ---------------------------------------------------------------------------

enum class BackgroundKind : int { flat = 0, gradient = 1, noise = 2 };

struct Placement {
  SymbologyKind kind = SymbologyKind::EAN13;
  int px_per_module = 1;
  double angle_deg = 0.0;
  // preferred center; unset = let the composer pick
  std::optional<Point> center;
};

struct SceneSpec {
  int width = 256, height = 256;
  BackgroundKind background = BackgroundKind::flat;
  std::vector<Placement> placements;
  double noise_sigma = 0.0;  // image-only, applied after compositing
  double blur_sigma = 0.0;
  std::uint64_t seed = 0;
};

namespace detail {

inline GrayImage scene_background(const SceneSpec& spec, Rng& rng) {
  GrayImage bg(spec.width, spec.height);
  switch (spec.background) {
    case BackgroundKind::flat: {
      auto v = static_cast<std::uint8_t>(165 + rng.index(70));
      std::fill(bg.v.begin(), bg.v.end(), v);
      break;
    }
    case BackgroundKind::gradient: {
      double v0 = 150 + rng.uniform() * 60, v1 = 170 + rng.uniform() * 80;
      bool horizontal = rng.bernoulli(0.5);
      for (int y = 0; y < bg.h; ++y)
        for (int x = 0; x < bg.w; ++x) {
          double t = horizontal ? static_cast<double>(x) / std::max(1, bg.w - 1)
                                : static_cast<double>(y) / std::max(1, bg.h - 1);
          bg.at(y, x) = static_cast<std::uint8_t>(std::lround(v0 + (v1 - v0) * t));
        }
      break;
    }
    case BackgroundKind::noise: {
      double base = 170 + rng.uniform() * 50;
      for (auto& v : bg.v)
        v = static_cast<std::uint8_t>(std::lround(std::clamp(base + rng.normal(0, 8), 0.0, 255.0)));
      break;
    }
  }
  return bg;
}

}  // namespace detail

// Renders, rotates and places every symbol, building image, class mask and
// object list together. Colliding placements are retried with fresh positions
// and dropped after 50 attempts; the scene stays valid without them.
inline Sample compose_scene(const SceneSpec& spec) {
  require(spec.width >= 8 && spec.height >= 8, "compose_scene: canvas too small");
  Rng rng(spec.seed);
  Sample out;
  out.image = detail::scene_background(spec, rng);
  out.mask = Grid<std::uint8_t>(spec.width, spec.height, 0);
  Grid<std::uint8_t> occupied(spec.width, spec.height, 0);

  for (const auto& pl : spec.placements) {
    SymbolTile tile = render_symbol(pl.kind, pl.px_per_module, rng);

    // mask-region corners in tile coordinates, for the ground-truth polygon
    int mx0 = tile.mask.w, my0 = tile.mask.h, mx1 = -1, my1 = -1;
    for (int y = 0; y < tile.mask.h; ++y)
      for (int x = 0; x < tile.mask.w; ++x)
        if (tile.mask.at(y, x)) {
          mx0 = std::min(mx0, x);
          mx1 = std::max(mx1, x);
          my0 = std::min(my0, y);
          my1 = std::max(my1, y);
        }

    RotationMap m = rotation_map(tile.image.w, tile.image.h, pl.angle_deg);
    GrayImage rimg = rotate_bilinear(tile.image, m, tile.paper);
    Grid<std::uint8_t> rmask = rotate_nearest(tile.mask, m, std::uint8_t{0});
    Grid<std::uint8_t> alpha(tile.image.w, tile.image.h, 1);
    Grid<std::uint8_t> ralpha = rotate_nearest(alpha, m, std::uint8_t{0});

    if (ralpha.w > spec.width || ralpha.h > spec.height) continue;  // cannot fit

    bool placed = false;
    for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
      Point c;
      if (attempt == 0 && pl.center) {
        c = *pl.center;
      } else {
        c.x = ralpha.w / 2.0 + rng.uniform() * (spec.width - ralpha.w);
        c.y = ralpha.h / 2.0 + rng.uniform() * (spec.height - ralpha.h);
      }
      int x0 = static_cast<int>(std::lround(c.x - ralpha.w / 2.0));
      int y0 = static_cast<int>(std::lround(c.y - ralpha.h / 2.0));
      if (x0 < 0 || y0 < 0 || x0 + ralpha.w > spec.width || y0 + ralpha.h > spec.height)
        continue;
      bool collision = false;
      for (int y = 0; y < ralpha.h && !collision; ++y)
        for (int x = 0; x < ralpha.w; ++x)
          if (ralpha.at(y, x) && occupied.at(y0 + y, x0 + x)) {
            collision = true;
            break;
          }
      if (collision) continue;

      for (int y = 0; y < ralpha.h; ++y)
        for (int x = 0; x < ralpha.w; ++x) {
          if (!ralpha.at(y, x)) continue;
          out.image.at(y0 + y, x0 + x) = rimg.at(y, x);
          occupied.at(y0 + y, x0 + x) = 1;
          if (rmask.at(y, x))
            out.mask.at(y0 + y, x0 + x) = static_cast<std::uint8_t>(static_cast<int>(pl.kind) + 1);
        }

      ObjectAnnotation obj;
      obj.class_id = static_cast<int>(pl.kind);
      for (Point p : {Point{static_cast<double>(mx0), static_cast<double>(my0)},
                      Point{static_cast<double>(mx1), static_cast<double>(my0)},
                      Point{static_cast<double>(mx1), static_cast<double>(my1)},
                      Point{static_cast<double>(mx0), static_cast<double>(my1)}}) {
        m.forward(p.x, p.y, p.x, p.y);
        obj.polygon.push_back({p.x + x0, p.y + y0});
      }
      out.objects.push_back(std::move(obj));
      placed = true;
    }
  }

  if (spec.noise_sigma > 0)
    for (auto& v : out.image.v)
      v = static_cast<std::uint8_t>(
          std::lround(std::clamp(v + rng.normal(0.0, spec.noise_sigma), 0.0, 255.0)));
  if (spec.blur_sigma > 0) out.image = gaussian_blur(out.image, spec.blur_sigma);
  return out;
}

// Random spec for dataset generation. `classes` restricts the symbologies;
// empty means all four.
inline SceneSpec random_scene_spec(std::uint64_t seed, int width, int height,
                                   std::vector<SymbologyKind> classes = {},
                                   int max_objects = 2) {
  if (classes.empty())
    classes = {SymbologyKind::EAN13, SymbologyKind::Bars1D, SymbologyKind::Matrix2D,
               SymbologyKind::Stacked2D};
  SceneSpec spec;
  spec.width = width;
  spec.height = height;
  spec.seed = seed;
  Rng rng(Rng::derive(seed, 0xabcdef));
  spec.background = static_cast<BackgroundKind>(rng.index(3));
  int count = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(max_objects)));
  for (int i = 0; i < count; ++i) {
    Placement pl;
    pl.kind = classes[rng.index(classes.size())];
    // module scales chosen so a rotated tile still fits a 256-wide canvas
    switch (pl.kind) {
      case SymbologyKind::EAN13: pl.px_per_module = 1; break;
      case SymbologyKind::Bars1D: pl.px_per_module = 1 + static_cast<int>(rng.index(2)); break;
      case SymbologyKind::Matrix2D: pl.px_per_module = 3 + static_cast<int>(rng.index(3)); break;
      case SymbologyKind::Stacked2D: pl.px_per_module = 2 + static_cast<int>(rng.index(2)); break;
    }
    pl.angle_deg = rng.uniform(-90.0, 90.0);
    spec.placements.push_back(pl);
  }
  if (rng.bernoulli(0.5)) spec.noise_sigma = rng.uniform(1.0, 6.0);
  if (rng.bernoulli(0.3)) spec.blur_sigma = rng.uniform(0.3, 0.8);
  return spec;
}

}  // namespace barseg
