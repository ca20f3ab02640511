#pragma once

#include <cmath>
#include <cstdint>

#include "barseg/image.hpp"
#include "barseg/rng.hpp"
#include "barseg/sample.hpp"

namespace barseg {

struct AugmentConfig {
  double p_identity = 0.1;
  double p_rot_free = 0.5;
  double p_rot_90 = 0.5;
  double p_crop = 0.5;
  double p_photometric = 0.7;
  double rot_range_deg = 45.0;
  double max_ar_change = 1.7;
};

// Which branches fired; lets callers (and tests) observe the sampled path.
struct AugmentTrace {
  bool identity = false;
  bool rot_free = false;
  bool rot_90 = false;
  bool crop = false;
  bool photometric = false;
  double angle = 0.0;
  int quarter_turns = 0;
};

namespace detail {

inline Sample rotate_quarter(const Sample& s, int quarters) {
  quarters = ((quarters % 4) + 4) % 4;
  if (quarters == 0) return s;
  const int W = s.image.w, H = s.image.h;
  Sample out;
  if (quarters == 2) {
    out.image = GrayImage(W, H);
    out.mask = Grid<std::uint8_t>(W, H);
  } else {
    out.image = GrayImage(H, W);
    out.mask = Grid<std::uint8_t>(H, W);
  }
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      std::uint8_t iv = s.image.at(r, c), mv = s.mask.at(r, c);
      if (quarters == 1) {
        out.image.at(c, H - 1 - r) = iv;
        out.mask.at(c, H - 1 - r) = mv;
      } else if (quarters == 2) {
        out.image.at(H - 1 - r, W - 1 - c) = iv;
        out.mask.at(H - 1 - r, W - 1 - c) = mv;
      } else {
        out.image.at(W - 1 - c, r) = iv;
        out.mask.at(W - 1 - c, r) = mv;
      }
    }
  out.objects = s.objects;
  for (auto& obj : out.objects)
    for (auto& p : obj.polygon) {
      Point q = p;
      if (quarters == 1)
        p = {H - 1 - q.y, q.x};
      else if (quarters == 2)
        p = {W - 1 - q.x, H - 1 - q.y};
      else
        p = {q.y, W - 1 - q.x};
    }
  return out;
}

}  // namespace detail

// Rotates image (bilinear, mean-intensity fill), mask (nearest, background
// fill) and object polygons consistently, expanding the canvas to hold the
// rotated frame. Multiples of 90 degrees are exact pixel permutations.
inline Sample rotate_sample(const Sample& s, double angle_deg) {
  s.check();
  double norm = std::fmod(angle_deg, 360.0);
  if (norm < 0) norm += 360.0;
  double quarters = norm / 90.0;
  if (std::fabs(quarters - std::round(quarters)) < 1e-12)
    return detail::rotate_quarter(s, static_cast<int>(std::lround(quarters)));

  RotationMap m = rotation_map(s.image.w, s.image.h, angle_deg);
  Sample out;
  out.image = rotate_bilinear(s.image, m, static_cast<std::uint8_t>(mean_intensity(s.image)));
  out.mask = rotate_nearest(s.mask, m, std::uint8_t{0});
  out.objects = s.objects;
  for (auto& obj : out.objects)
    for (auto& p : obj.polygon) m.forward(p.x, p.y, p.x, p.y);
  return out;
}

// Random crop that keeps every object: the window must contain the bounding
// box of all nonzero mask pixels, and its aspect ratio may differ from the
// original by at most the max_ar_change factor. Returns the input unchanged
// when 10 attempts fail to satisfy the ratio constraint.
inline Sample random_crop(const Sample& s, Rng& rng, double max_ar_change = 1.7) {
  s.check();
  const int W = s.image.w, H = s.image.h;
  int bx0 = W, by0 = H, bx1 = -1, by1 = -1;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (s.mask.at(y, x)) {
        bx0 = std::min(bx0, x);
        bx1 = std::max(bx1, x);
        by0 = std::min(by0, y);
        by1 = std::max(by1, y);
      }
  if (bx1 < 0) return s;  // nothing to protect, nothing to crop against

  const double base_ar = static_cast<double>(W) / H;
  for (int attempt = 0; attempt < 10; ++attempt) {
    int cw = rng.uniform_int(bx1 - bx0 + 1, W);
    int ch = rng.uniform_int(by1 - by0 + 1, H);
    double ar = static_cast<double>(cw) / ch;
    double ratio = ar / base_ar;
    if (ratio > max_ar_change || ratio < 1.0 / max_ar_change) continue;
    int x_lo = std::max(0, bx1 + 1 - cw), x_hi = std::min(bx0, W - cw);
    int y_lo = std::max(0, by1 + 1 - ch), y_hi = std::min(by0, H - ch);
    int x0 = rng.uniform_int(x_lo, x_hi);
    int y0 = rng.uniform_int(y_lo, y_hi);

    Sample out;
    out.image = GrayImage(cw, ch);
    out.mask = Grid<std::uint8_t>(cw, ch);
    for (int y = 0; y < ch; ++y)
      for (int x = 0; x < cw; ++x) {
        out.image.at(y, x) = s.image.at(y0 + y, x0 + x);
        out.mask.at(y, x) = s.mask.at(y0 + y, x0 + x);
      }
    out.objects = s.objects;
    for (auto& obj : out.objects)
      for (auto& p : obj.polygon) {
        p.x -= x0;
        p.y -= y0;
      }
    return out;
  }
  return s;
}

namespace detail {

inline Sample photometric(const Sample& s, Rng& rng) {
  Sample out = s;
  std::vector<double> buf(s.image.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = s.image.v[i];

  if (rng.bernoulli(0.5)) {  // contrast about mid-gray
    double c = rng.uniform(0.75, 1.25);
    for (auto& v : buf) v = (v - 128.0) * c + 128.0;
  }
  if (rng.bernoulli(0.5)) {  // brightness shift
    double b = rng.uniform(-25.0, 25.0);
    for (auto& v : buf) v += b;
  }
  if (rng.bernoulli(0.5)) {  // additive gaussian noise
    double sigma = rng.uniform(1.0, 10.0);
    for (auto& v : buf) v += rng.normal(0.0, sigma);
  }
  for (std::size_t i = 0; i < buf.size(); ++i)
    out.image.v[i] = static_cast<std::uint8_t>(std::lround(std::clamp(buf[i], 0.0, 255.0)));
  if (rng.bernoulli(0.5)) out.image = gaussian_blur(out.image, rng.uniform(0.3, 1.0));
  return out;
}

}  // namespace detail

// The stochastic pipeline: identity short-circuit, free rotation, quarter
// rotation, crop, photometric jitter, in that order, each behind its own
// probability. Deterministic for a fixed generator state.
inline Sample augment(const Sample& s, const AugmentConfig& cfg, Rng& rng,
                      AugmentTrace* trace = nullptr) {
  s.check();
  AugmentTrace local;
  AugmentTrace& tr = trace ? *trace : local;
  tr = AugmentTrace{};

  if (rng.bernoulli(cfg.p_identity)) {
    tr.identity = true;
    return s;
  }
  Sample out = s;
  if (rng.bernoulli(cfg.p_rot_free)) {
    tr.rot_free = true;
    tr.angle = rng.uniform(-cfg.rot_range_deg, cfg.rot_range_deg);
    out = rotate_sample(out, tr.angle);
  }
  if (rng.bernoulli(cfg.p_rot_90)) {
    tr.rot_90 = true;
    tr.quarter_turns = 1 + static_cast<int>(rng.index(3));  // 90, 180 or 270
    out = detail::rotate_quarter(out, tr.quarter_turns);
  }
  if (rng.bernoulli(cfg.p_crop) && !out.objects.empty()) {
    tr.crop = true;
    out = random_crop(out, rng, cfg.max_ar_change);
  }
  if (rng.bernoulli(cfg.p_photometric)) {
    tr.photometric = true;
    out = detail::photometric(out, rng);
  }
  return out;
}

}  // namespace barseg
