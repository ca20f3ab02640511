#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "barseg/metrics.hpp"
#include "barseg/rng.hpp"

using namespace barseg;

namespace {

using PixelSet = std::set<std::pair<int, int>>;

Grid<std::uint8_t> mask_from(const PixelSet& pix, int w = 16, int h = 16,
                             std::uint8_t value = 1) {
  Grid<std::uint8_t> g(w, h, 0);
  for (auto [x, y] : pix) g.at(y, x) = value;
  return g;
}

PixelSet box(int x0, int y0, int x1, int y1) {
  PixelSet s;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) s.insert({x, y});
  return s;
}

// ---- naive pixel-set reimplementation of every metric (test oracle) ------

double naive_jaccard(const PixelSet& a, const PixelSet& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& p : a) inter += b.count(p);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

struct NaiveImage {
  std::vector<std::pair<PixelSet, int>> gts;   // pixels, class
  std::vector<std::pair<PixelSet, int>> dets;  // pixels, class
};

struct NaiveMetrics {
  double d, r, p;
  std::optional<double> acc;
};

NaiveMetrics naive_eval(const std::vector<NaiveImage>& imgs, double t) {
  long long hit_imgs = 0, matched = 0, correct = 0, total_gt = 0, total_det = 0;
  for (const auto& im : imgs) {
    PixelSet g_all, f_all;
    for (const auto& [g, c] : im.gts) g_all.insert(g.begin(), g.end());
    for (const auto& [f, c] : im.dets) f_all.insert(f.begin(), f.end());
    if (naive_jaccard(g_all, f_all) >= t) ++hit_imgs;
    total_gt += static_cast<long long>(im.gts.size());
    total_det += static_cast<long long>(im.dets.size());
    for (const auto& [g, gc] : im.gts) {
      double best = -1;
      int best_det = -1;
      for (std::size_t di = 0; di < im.dets.size(); ++di) {
        double j = naive_jaccard(g, im.dets[di].first);
        if (j > best) {
          best = j;
          best_det = static_cast<int>(di);
        }
      }
      if (best_det >= 0 && best >= t) {
        ++matched;
        if (im.dets[best_det].second == gc) ++correct;
      }
    }
  }
  NaiveMetrics nm;
  nm.d = static_cast<double>(hit_imgs) / imgs.size();
  nm.r = total_gt ? static_cast<double>(matched) / total_gt : 1.0;
  nm.p = total_det ? static_cast<double>(matched) / total_det : 1.0;
  nm.acc = matched ? std::optional<double>(static_cast<double>(correct) / matched)
                   : std::nullopt;
  return nm;
}

EvalImage to_eval(const NaiveImage& im, int w = 16, int h = 16) {
  EvalImage e;
  e.gt_mask = Grid<std::uint8_t>(w, h, 0);
  for (const auto& [g, c] : im.gts)
    for (auto [x, y] : g) e.gt_mask.at(y, x) = static_cast<std::uint8_t>(c + 1);
  for (const auto& [g, c] : im.gts) {
    GtObject obj;
    obj.class_id = c;
    for (auto [x, y] : g) obj.pixels.push_back({x, y});
    e.gt_objects.push_back(obj);
  }
  for (const auto& [f, c] : im.dets) {
    e.detections.push_back(mask_from(f, w, h));
    e.det_classes.push_back(c);
  }
  return e;
}

}  // namespace

TEST_CASE("jaccard basics and conventions") {
  auto a = mask_from(box(2, 2, 6, 6));
  REQUIRE(jaccard(a, a) == 1.0);

  auto b = mask_from(box(9, 9, 12, 12));
  REQUIRE(jaccard(a, b) == 0.0);

  // |G| = 100, |F| = 100, overlap 50 -> 1/3
  auto g = mask_from(box(0, 0, 9, 9), 32, 32);       // 100 px
  auto f = mask_from(box(5, 0, 14, 9), 32, 32);      // 100 px, overlap 5x10
  REQUIRE_THAT(jaccard(g, f), Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));

  Grid<std::uint8_t> e1(8, 8, 0), e2(8, 8, 0);
  REQUIRE(jaccard(e1, e2) == 1.0);  // both empty
  REQUIRE(jaccard(a, Grid<std::uint8_t>(16, 16, 0)) == 0.0);

  REQUIRE_THROWS_AS(jaccard(a, Grid<std::uint8_t>(4, 4, 0)), std::invalid_argument);
}

TEST_CASE("jaccard is symmetric") {
  Rng rng(88);
  for (int trial = 0; trial < 10; ++trial) {
    Grid<std::uint8_t> a(10, 10), b(10, 10);
    for (auto& v : a.v) v = rng.bernoulli(0.4);
    for (auto& v : b.v) v = rng.bernoulli(0.4);
    REQUIRE(jaccard(a, b) == jaccard(b, a));
  }
}

TEST_CASE("gt objects from mask") {
  Grid<std::uint8_t> two(16, 16, 0);
  for (auto [x, y] : box(1, 1, 3, 3)) two.at(y, x) = 1;
  for (auto [x, y] : box(10, 10, 12, 12)) two.at(y, x) = 2;
  auto objs = gt_objects_from_mask(two);
  REQUIRE(objs.size() == 2);
  REQUIRE(objs[0].class_id == 0);
  REQUIRE(objs[1].class_id == 1);

  REQUIRE(gt_objects_from_mask(Grid<std::uint8_t>(8, 8, 0)).empty());
  REQUIRE(gt_objects_from_mask(Grid<std::uint8_t>(8, 8, 1)).size() == 1);
}

TEST_CASE("detection rate over per-image jaccards") {
  REQUIRE(detection_rate({0.6, 0.4}, 0.5) == 0.5);
  REQUIRE(detection_rate({0.3, 0.9, 1.0}, 0.0) == 1.0);
  REQUIRE(detection_rate({0.1, 0.2}, 0.9) == 0.0);
  REQUIRE_THROWS_AS(detection_rate({}, 0.5), std::invalid_argument);
}

TEST_CASE("object precision and recall") {
  // perfect one-to-one
  NaiveImage perfect;
  perfect.gts = {{box(1, 1, 4, 4), 0}, {box(9, 9, 13, 13), 1}};
  perfect.dets = perfect.gts;
  auto pr = object_precision_recall({to_eval(perfect)}, 0.5);
  REQUIRE(pr.recall == 1.0);
  REQUIRE(pr.precision == 1.0);

  // 2 GT, 3 detections, 2 matched -> R = 1, P = 2/3
  NaiveImage extra = perfect;
  extra.dets.push_back({box(0, 14, 1, 15), 0});  // spurious
  pr = object_precision_recall({to_eval(extra)}, 0.5);
  REQUIRE(pr.recall == 1.0);
  REQUIRE_THAT(pr.precision, Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));

  // no detections but GT present -> R = 0, P = 1 by convention
  NaiveImage none;
  none.gts = {{box(1, 1, 4, 4), 0}};
  pr = object_precision_recall({to_eval(none)}, 0.5);
  REQUIRE(pr.recall == 0.0);
  REQUIRE(pr.precision == 1.0);
}

TEST_CASE("classification accuracy counts only matched pairs") {
  NaiveImage im;
  im.gts = {{box(1, 1, 4, 4), 0}, {box(9, 1, 12, 4), 1}, {box(1, 9, 4, 12), 2}};
  im.dets = {{box(1, 1, 4, 4), 0}, {box(9, 1, 12, 4), 1}, {box(1, 9, 4, 12), 0}};
  auto acc = classification_accuracy({to_eval(im)}, 0.5);
  REQUIRE(acc.has_value());
  REQUIRE_THAT(*acc, Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));

  // a type mix-up stays a valid detection: P/R untouched, accuracy hit
  NaiveImage mixup;
  mixup.gts = {{box(2, 2, 7, 7), 3}};   // "Stacked2D"
  mixup.dets = {{box(2, 2, 7, 7), 2}};  // detected as "Matrix2D"
  auto pr = object_precision_recall({to_eval(mixup)}, 0.5);
  REQUIRE(pr.recall == 1.0);
  REQUIRE(pr.precision == 1.0);
  REQUIRE(*classification_accuracy({to_eval(mixup)}, 0.5) == 0.0);

  // no matches -> undefined, not zero
  NaiveImage empty;
  empty.gts = {{box(1, 1, 4, 4), 0}};
  REQUIRE(!classification_accuracy({to_eval(empty)}, 0.5).has_value());
}

TEST_CASE("metrics match the naive pixel-set oracle on hand-built fixtures") {
  Rng rng(5150);
  std::vector<NaiveImage> fixtures;
  // 10 deterministic 16x16 fixtures with assorted overlap structure
  for (int i = 0; i < 10; ++i) {
    NaiveImage im;
    int n_gt = 1 + static_cast<int>(rng.index(3));
    for (int g = 0; g < n_gt; ++g) {
      int x0 = static_cast<int>(rng.index(8)), y0 = static_cast<int>(rng.index(8));
      int wd = 2 + static_cast<int>(rng.index(5)), ht = 2 + static_cast<int>(rng.index(5));
      im.gts.push_back({box(x0, y0, std::min(15, x0 + wd), std::min(15, y0 + ht)),
                        static_cast<int>(rng.index(4))});
    }
    int n_det = static_cast<int>(rng.index(4));
    for (int d = 0; d < n_det; ++d) {
      if (d < n_gt && rng.bernoulli(0.7)) {
        // jittered copy of a GT box
        auto base = im.gts[d].first;
        PixelSet shifted;
        int dx = static_cast<int>(rng.index(3)) - 1, dy = static_cast<int>(rng.index(3)) - 1;
        for (auto [x, y] : base) {
          int nx = std::clamp(x + dx, 0, 15), ny = std::clamp(y + dy, 0, 15);
          shifted.insert({nx, ny});
        }
        im.dets.push_back({shifted, rng.bernoulli(0.8) ? im.gts[d].second
                                                       : static_cast<int>(rng.index(4))});
      } else {
        int x0 = static_cast<int>(rng.index(10)), y0 = static_cast<int>(rng.index(10));
        im.dets.push_back({box(x0, y0, std::min(15, x0 + 3), std::min(15, y0 + 2)),
                           static_cast<int>(rng.index(4))});
      }
    }
    fixtures.push_back(im);
  }

  std::vector<EvalImage> eval_images;
  for (const auto& im : fixtures) eval_images.push_back(to_eval(im));

  for (double t : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    auto naive = naive_eval(fixtures, t);
    std::vector<double> jacc;
    for (const auto& e : eval_images) {
      Grid<std::uint8_t> gt_bin(16, 16, 0), f(16, 16, 0);
      for (std::size_t i = 0; i < gt_bin.size(); ++i) gt_bin.v[i] = e.gt_mask.v[i] ? 1 : 0;
      for (const auto& det : e.detections)
        for (std::size_t i = 0; i < f.size(); ++i) f.v[i] |= det.v[i];
      jacc.push_back(jaccard(gt_bin, f));
    }
    REQUIRE(detection_rate(jacc, t) == naive.d);
    auto pr = object_precision_recall(eval_images, t);
    REQUIRE(pr.recall == naive.r);
    REQUIRE(pr.precision == naive.p);
    auto acc = classification_accuracy(eval_images, t);
    REQUIRE(acc.has_value() == naive.acc.has_value());
    if (acc) REQUIRE(*acc == *naive.acc);
  }
}

TEST_CASE("rates are non-increasing in the threshold") {
  Rng rng(4242);
  std::vector<NaiveImage> imgs;
  for (int i = 0; i < 6; ++i) {
    NaiveImage im;
    im.gts = {{box(2, 2, 6, 6), 0}, {box(9, 9, 14, 13), 1}};
    int jx = static_cast<int>(rng.index(4));
    im.dets = {{box(2 + jx, 2, 6 + jx, 6), 0},
               {box(9, 9 + jx, 14, 13 + jx > 15 ? 15 : 13 + jx), 1}};
    imgs.push_back(im);
  }
  std::vector<EvalImage> eval_images;
  for (const auto& im : imgs) eval_images.push_back(to_eval(im));
  std::vector<double> thresholds = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  auto res = evaluate(eval_images, thresholds);
  REQUIRE(res.by_threshold.size() == 9);
  for (std::size_t i = 1; i < res.by_threshold.size(); ++i) {
    REQUIRE(res.by_threshold[i].detection_rate <= res.by_threshold[i - 1].detection_rate);
    REQUIRE(res.by_threshold[i].recall <= res.by_threshold[i - 1].recall);
    REQUIRE(res.by_threshold[i].precision <= res.by_threshold[i - 1].precision);
  }
  for (const auto& tm : res.by_threshold) {
    REQUIRE(tm.detection_rate >= 0.0);
    REQUIRE(tm.detection_rate <= 1.0);
    REQUIRE(tm.recall >= 0.0);
    REQUIRE(tm.recall <= 1.0);
    REQUIRE(tm.precision >= 0.0);
    REQUIRE(tm.precision <= 1.0);
  }
}

TEST_CASE("one-to-one matching variant never exceeds the literal formula") {
  NaiveImage im;
  im.gts = {{box(1, 1, 6, 6), 0}, {box(3, 3, 8, 8), 1}};  // overlapping GT boxes
  im.dets = {{box(2, 2, 7, 7), 0}};                       // one detection near both
  auto literal = object_precision_recall({to_eval(im)}, 0.3, false);
  auto unique = object_precision_recall({to_eval(im)}, 0.3, true);
  REQUIRE(unique.matched <= literal.matched);
}
