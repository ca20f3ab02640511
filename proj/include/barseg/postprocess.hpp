#pragma once

#include <cstdint>
#include <vector>

#include "barseg/geometry.hpp"
#include "barseg/image.hpp"
#include "barseg/network.hpp"

namespace barseg {

template <typename T>
Grid<T> channel_to_grid(const Tensor<T>& t, int b, int c) {
  Grid<T> g(t.w, t.h);
  std::copy(t.plane(b, c), t.plane(b, c) + g.size(), g.v.begin());
  return g;
}

// p >= threshold -> 1 (inclusive at the boundary).
template <typename T>
Grid<std::uint8_t> binarize(const Grid<T>& prob, double threshold = 0.5) {
  Grid<std::uint8_t> out(prob.w, prob.h);
  for (std::size_t i = 0; i < prob.size(); ++i)
    out.v[i] = static_cast<double>(prob.v[i]) >= threshold ? 1 : 0;
  return out;
}

struct PixelCoord {
  int x = 0, y = 0;
};

struct Component {
  int label = 0;
  std::vector<PixelCoord> pixels;
  int area() const { return static_cast<int>(pixels.size()); }
};

struct ComponentMap {
  Grid<std::int32_t> labels;  // 0 background, 1..K components
  std::vector<Component> components;
};

// 8-connected components, labeled 1..K in row-major discovery order.
inline ComponentMap connected_components(const Grid<std::uint8_t>& bin) {
  ComponentMap out;
  out.labels = Grid<std::int32_t>(bin.w, bin.h, 0);
  std::vector<PixelCoord> stack;
  for (int y = 0; y < bin.h; ++y)
    for (int x = 0; x < bin.w; ++x) {
      if (!bin.at(y, x) || out.labels.at(y, x)) continue;
      Component comp;
      comp.label = static_cast<int>(out.components.size()) + 1;
      stack.push_back({x, y});
      out.labels.at(y, x) = comp.label;
      while (!stack.empty()) {
        PixelCoord p = stack.back();
        stack.pop_back();
        comp.pixels.push_back(p);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (!dx && !dy) continue;
            int ny = p.y + dy, nx = p.x + dx;
            if (!bin.inside(ny, nx) || !bin.at(ny, nx) || out.labels.at(ny, nx)) continue;
            out.labels.at(ny, nx) = comp.label;
            stack.push_back({nx, ny});
          }
      }
      out.components.push_back(std::move(comp));
    }
  return out;
}

struct DetectOptions {
  double threshold = 0.5;
  int t_area = 20;   // minimum component area, in superpixels
  int scale = 4;     // superpixel -> pixel factor
};

struct DetectedObject {
  RotatedRect rect;                 // original-image coordinates
  int class_id = -1;                // -1 when the model has no class head
  std::vector<double> class_probs;  // averaged over the component; sums to 1
  int component_area = 0;           // superpixels
};

// Probability map -> threshold -> 8-connected components -> area filter ->
// min-area rectangle per component -> class vote -> upscale to image pixels.
template <typename T>
std::vector<DetectedObject> detect_objects(const SegmentationMap<T>& seg,
                                           const DetectOptions& opt = {}, int batch = 0) {
  require(batch >= 0 && batch < seg.detect_prob.n, "detect_objects: batch index out of range");
  auto prob = channel_to_grid(seg.detect_prob, batch, 0);
  auto cc = connected_components(binarize(prob, opt.threshold));

  std::vector<DetectedObject> out;
  const int n_classes = seg.class_prob.empty() ? 0 : seg.class_prob.c;
  for (const auto& comp : cc.components) {
    if (comp.area() < opt.t_area) continue;
    DetectedObject obj;
    obj.component_area = comp.area();

    std::vector<Point> pts;
    pts.reserve(comp.pixels.size());
    for (const auto& p : comp.pixels)
      pts.push_back({static_cast<double>(p.x), static_cast<double>(p.y)});
    RotatedRect r = min_area_rect(pts);
    r.cx *= opt.scale;
    r.cy *= opt.scale;
    r.w *= opt.scale;
    r.h *= opt.scale;
    obj.rect = r;

    if (n_classes > 0) {
      obj.class_probs.assign(n_classes, 0.0);
      for (const auto& p : comp.pixels)
        for (int c = 0; c < n_classes; ++c)
          obj.class_probs[c] += seg.class_prob.at(batch, c, p.y, p.x);
      for (auto& v : obj.class_probs) v /= comp.area();
      obj.class_id = 0;
      for (int c = 1; c < n_classes; ++c)
        if (obj.class_probs[c] > obj.class_probs[obj.class_id]) obj.class_id = c;
    }
    out.push_back(std::move(obj));
  }
  return out;
}

}  // namespace barseg
