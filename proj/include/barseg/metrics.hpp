#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "barseg/image.hpp"
#include "barseg/postprocess.hpp"

namespace barseg {

// |G n F| / |G u F|. Both masks empty counts as a perfect match, exactly one
// empty as a complete miss.
inline double jaccard(const Grid<std::uint8_t>& g, const Grid<std::uint8_t>& f) {
  require(g.w == f.w && g.h == f.h,
          "jaccard: mask dims " + std::to_string(g.w) + "x" + std::to_string(g.h) + " vs " +
              std::to_string(f.w) + "x" + std::to_string(f.h));
  long long inter = 0, uni = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    bool a = g.v[i] != 0, b = f.v[i] != 0;
    inter += a && b;
    uni += a || b;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

struct GtObject {
  std::vector<PixelCoord> pixels;
  int class_id = 0;
};

// Ground-truth objects are the 8-connected components of the nonzero mask;
// mask value c labels class c-1 (majority vote inside a component, ties to
// the smaller class).
inline std::vector<GtObject> gt_objects_from_mask(const Grid<std::uint8_t>& mask) {
  Grid<std::uint8_t> bin(mask.w, mask.h);
  for (std::size_t i = 0; i < mask.size(); ++i) bin.v[i] = mask.v[i] ? 1 : 0;
  auto cc = connected_components(bin);
  std::vector<GtObject> out;
  out.reserve(cc.components.size());
  for (auto& comp : cc.components) {
    GtObject obj;
    obj.pixels = std::move(comp.pixels);
    std::vector<int> votes(256, 0);
    for (const auto& p : obj.pixels) votes[mask.at(p.y, p.x)]++;
    int best = 1;
    for (int v = 1; v < 256; ++v)
      if (votes[v] > votes[best]) best = v;
    obj.class_id = best - 1;
    out.push_back(std::move(obj));
  }
  return out;
}

// D_T: fraction of images whose image-level Jaccard index reaches T.
inline double detection_rate(const std::vector<double>& per_image_jaccard, double t) {
  require(!per_image_jaccard.empty(), "detection_rate: empty dataset");
  long long hits = 0;
  for (double j : per_image_jaccard) hits += j >= t ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(per_image_jaccard.size());
}

// One evaluated image: ground truth plus rasterized detections.
struct EvalImage {
  Grid<std::uint8_t> gt_mask;                 // nonzero = object, value = class+1
  std::vector<GtObject> gt_objects;
  std::vector<Grid<std::uint8_t>> detections; // one binary mask per detection
  std::vector<int> det_classes;               // parallel to detections; -1 = untyped
};

namespace detail {

inline double jaccard_object(const GtObject& g, const Grid<std::uint8_t>& det) {
  long long det_area = 0;
  for (auto v : det.v) det_area += v ? 1 : 0;
  long long inter = 0;
  for (const auto& p : g.pixels) inter += det.at(p.y, p.x) ? 1 : 0;
  long long uni = static_cast<long long>(g.pixels.size()) + det_area - inter;
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

struct Match {
  int best_det = -1;
  double j = 0.0;
};

inline std::vector<Match> best_matches(const EvalImage& img) {
  std::vector<Match> out(img.gt_objects.size());
  for (std::size_t gi = 0; gi < img.gt_objects.size(); ++gi)
    for (std::size_t di = 0; di < img.detections.size(); ++di) {
      double j = jaccard_object(img.gt_objects[gi], img.detections[di]);
      if (out[gi].best_det < 0 || j > out[gi].j) {  // ties keep the first
        out[gi].j = j;
        out[gi].best_det = static_cast<int>(di);
      }
    }
  return out;
}

}  // namespace detail

struct PrecisionRecall {
  double recall = 1.0;
  double precision = 1.0;
  long long matched = 0;
  long long total_gt = 0;
  long long total_detections = 0;
};

// R_T = matched / total GT objects, P_T = matched / total detections, where a
// GT object matches through its highest-Jaccard detection. The literal
// formula can credit one detection to several objects; one_to_one switches to
// a greedy unique assignment for diagnostics.
inline PrecisionRecall object_precision_recall(const std::vector<EvalImage>& images, double t,
                                               bool one_to_one = false) {
  PrecisionRecall pr;
  pr.matched = 0;
  pr.total_gt = 0;
  pr.total_detections = 0;
  for (const auto& img : images) {
    pr.total_gt += static_cast<long long>(img.gt_objects.size());
    pr.total_detections += static_cast<long long>(img.detections.size());
    if (!one_to_one) {
      for (const auto& m : detail::best_matches(img))
        if (m.best_det >= 0 && m.j >= t) ++pr.matched;
    } else {
      struct Pair {
        double j;
        int gi, di;
      };
      std::vector<Pair> pairs;
      for (std::size_t gi = 0; gi < img.gt_objects.size(); ++gi)
        for (std::size_t di = 0; di < img.detections.size(); ++di) {
          double j = detail::jaccard_object(img.gt_objects[gi], img.detections[di]);
          if (j >= t) pairs.push_back({j, static_cast<int>(gi), static_cast<int>(di)});
        }
      std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        if (a.j != b.j) return a.j > b.j;
        if (a.gi != b.gi) return a.gi < b.gi;
        return a.di < b.di;
      });
      std::vector<bool> gt_used(img.gt_objects.size()), det_used(img.detections.size());
      for (const auto& p : pairs) {
        if (gt_used[p.gi] || det_used[p.di]) continue;
        gt_used[p.gi] = det_used[p.di] = true;
        ++pr.matched;
      }
    }
  }
  pr.recall = pr.total_gt > 0 ? static_cast<double>(pr.matched) / pr.total_gt : 1.0;
  pr.precision =
      pr.total_detections > 0 ? static_cast<double>(pr.matched) / pr.total_detections : 1.0;
  return pr;
}

// Correct-type fraction among GT objects matched at J >= T. Type errors do
// not affect precision/recall, only this number. Absent when nothing matched.
inline std::optional<double> classification_accuracy(const std::vector<EvalImage>& images,
                                                     double t) {
  long long matched = 0, correct = 0;
  for (const auto& img : images) {
    auto matches = detail::best_matches(img);
    for (std::size_t gi = 0; gi < matches.size(); ++gi) {
      if (matches[gi].best_det < 0 || matches[gi].j < t) continue;
      ++matched;
      if (img.det_classes[matches[gi].best_det] == img.gt_objects[gi].class_id) ++correct;
    }
  }
  if (matched == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(matched);
}

struct ThresholdMetrics {
  double t = 0;
  double detection_rate = 0;
  double recall = 0;
  double precision = 0;
  std::optional<double> accuracy;
};

struct EvalResult {
  std::vector<double> per_image_jaccard;
  std::vector<ThresholdMetrics> by_threshold;
  long long images = 0;
  long long gt_objects = 0;
  long long detections = 0;
};

// Full sweep over the requested thresholds. The image-level mask for D_T is
// the union of all detection rasters.
inline EvalResult evaluate(const std::vector<EvalImage>& images,
                           const std::vector<double>& thresholds) {
  require(!images.empty(), "evaluate: empty dataset");
  EvalResult res;
  res.images = static_cast<long long>(images.size());
  for (const auto& img : images) {
    Grid<std::uint8_t> gt_bin(img.gt_mask.w, img.gt_mask.h);
    for (std::size_t i = 0; i < gt_bin.size(); ++i) gt_bin.v[i] = img.gt_mask.v[i] ? 1 : 0;
    Grid<std::uint8_t> f(img.gt_mask.w, img.gt_mask.h, 0);
    for (const auto& det : img.detections) {
      require(det.w == f.w && det.h == f.h, "evaluate: detection raster dims mismatch");
      for (std::size_t i = 0; i < f.size(); ++i) f.v[i] |= det.v[i] ? 1 : 0;
    }
    res.per_image_jaccard.push_back(jaccard(gt_bin, f));
    res.gt_objects += static_cast<long long>(img.gt_objects.size());
    res.detections += static_cast<long long>(img.detections.size());
  }
  for (double t : thresholds) {
    ThresholdMetrics tm;
    tm.t = t;
    tm.detection_rate = detection_rate(res.per_image_jaccard, t);
    auto pr = object_precision_recall(images, t);
    tm.recall = pr.recall;
    tm.precision = pr.precision;
    tm.accuracy = classification_accuracy(images, t);
    res.by_threshold.push_back(tm);
  }
  return res;
}

}  // namespace barseg
