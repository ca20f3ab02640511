#pragma once

#include <vector>

#include "barseg/geometry.hpp"
#include "barseg/image.hpp"

namespace barseg {

struct ObjectAnnotation {
  int class_id = 0;
  std::vector<Point> polygon;  // outline in image pixel coordinates
};

// One dataset element: grayscale image, per-pixel class mask (0 = background,
// c >= 1 = object of class c-1) and the object list.
struct Sample {
  GrayImage image;
  Grid<std::uint8_t> mask;
  std::vector<ObjectAnnotation> objects;

  void check() const {
    require(image.w == mask.w && image.h == mask.h,
            "sample: mask " + std::to_string(mask.w) + "x" + std::to_string(mask.h) +
                " does not match image " + std::to_string(image.w) + "x" +
                std::to_string(image.h));
  }
};

}  // namespace barseg
