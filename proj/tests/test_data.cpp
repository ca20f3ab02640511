#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "barseg/dataset.hpp"
#include "barseg/metrics.hpp"
#include "barseg/synth.hpp"

using namespace barseg;
namespace fs = std::filesystem;

namespace {

// Orientation of a rect's long side in [0, 180), for comparing against a
// placement angle regardless of the w/h pairing convention.
double long_side_angle(const RotatedRect& r) {
  double a = r.w >= r.h ? r.angle : r.angle + 90.0;
  a = std::fmod(a + 360.0, 180.0);
  return a;
}

double angle_dist_mod180(double a, double b) {
  double d = std::fabs(std::fmod(a - b + 540.0, 180.0) - 90.0);
  return 90.0 - d;
}

double polygon_area(const std::vector<Point>& poly) {
  double s = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point& p = poly[i];
    const Point& q = poly[(i + 1) % poly.size()];
    s += p.x * q.y - q.x * p.y;
  }
  return std::fabs(s) / 2.0;
}

}  // namespace

TEST_CASE("ean13 check digit") {
  REQUIRE(ean13_check_digit("590123412345") == 7);
  REQUIRE_NOTHROW(encode_ean13("4006381333931"));
  REQUIRE_THROWS_AS(encode_ean13("4006381333932"), std::invalid_argument);
  REQUIRE_THROWS_AS(encode_ean13("40063813339"), std::invalid_argument);
  REQUIRE_THROWS_AS(encode_ean13("400638133393a"), std::invalid_argument);
}

TEST_CASE("ean13 module layout") {
  Rng rng(5);
  for (int i = 0; i < 10; ++i) {
    auto modules = encode_ean13(random_ean13_digits(rng));
    REQUIRE(modules.size() == 95);
    // guards: 101 ... 01010 ... 101
    REQUIRE((modules[0] == 1 && modules[1] == 0 && modules[2] == 1));
    REQUIRE((modules[92] == 1 && modules[93] == 0 && modules[94] == 1));
    REQUIRE((modules[45] == 0 && modules[46] == 1 && modules[47] == 0 &&
             modules[48] == 1 && modules[49] == 0));
  }
}

TEST_CASE("ean13 rendering geometry") {
  auto tile = render_ean13("4006381333931", 2, 50);
  REQUIRE(tile.image.w == 95 * 2 + 2 * kQuietZoneModules * 2);
  REQUIRE(tile.image.h == 50);
  // mask covers exactly the 95-module span, full height
  int area = 0;
  for (auto v : tile.mask.v) area += v;
  REQUIRE(area == 95 * 2 * 50);
  REQUIRE(connected_components(tile.mask).components.size() == 1);
}

TEST_CASE("every symbology renders a single-component mask") {
  Rng rng(77);
  for (auto kind : {SymbologyKind::EAN13, SymbologyKind::Bars1D, SymbologyKind::Matrix2D,
                    SymbologyKind::Stacked2D}) {
    auto tile = render_symbol(kind, 2, rng);
    auto cc = connected_components(tile.mask);
    REQUIRE(cc.components.size() == 1);
  }
}

TEST_CASE("matrix symbol carries three corner finders") {
  Rng rng(11);
  auto tile = render_matrix2d(rng, 3, 0, 255);
  const int m = 3, qz = 4 * m;
  // mask bounds give the module grid extent
  int x0 = tile.mask.w, y0 = tile.mask.h, x1 = -1, y1 = -1;
  for (int y = 0; y < tile.mask.h; ++y)
    for (int x = 0; x < tile.mask.w; ++x)
      if (tile.mask.at(y, x)) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
  REQUIRE(x0 == qz);
  REQUIRE(y0 == qz);
  auto module_dark = [&](int my, int mx) {
    return tile.image.at(qz + my * m + m / 2, qz + mx * m + m / 2) < 128;
  };
  const int n = (x1 - x0 + 1) / m;
  for (auto [oy, ox] : {std::pair{0, 0}, {0, n - 7}, {n - 7, 0}}) {
    REQUIRE(module_dark(oy + 0, ox + 0));   // outer ring
    REQUIRE(module_dark(oy + 6, ox + 6));
    REQUIRE(!module_dark(oy + 1, ox + 1));  // white ring
    REQUIRE(module_dark(oy + 3, ox + 3));   // core
  }
}

TEST_CASE("compose_scene builds labeled components deterministically") {
  SceneSpec spec;
  spec.width = spec.height = 256;
  spec.seed = 31;
  spec.placements.push_back({SymbologyKind::EAN13, 1, 0.0, std::nullopt});
  spec.placements.push_back({SymbologyKind::Matrix2D, 3, 0.0, std::nullopt});
  auto s = compose_scene(spec);
  REQUIRE(s.objects.size() == 2);

  auto objs = gt_objects_from_mask(s.mask);
  REQUIRE(objs.size() == 2);
  std::vector<int> classes;
  for (const auto& o : objs) classes.push_back(o.class_id);
  std::sort(classes.begin(), classes.end());
  REQUIRE(classes == std::vector<int>{static_cast<int>(SymbologyKind::EAN13),
                                      static_cast<int>(SymbologyKind::Matrix2D)});

  auto again = compose_scene(spec);
  REQUIRE(again.image.v == s.image.v);
  REQUIRE(again.mask.v == s.mask.v);
}

TEST_CASE("a rotated symbol's mask component recovers the placement angle") {
  SceneSpec spec;
  spec.width = spec.height = 256;
  spec.seed = 77;
  spec.placements.push_back({SymbologyKind::EAN13, 1, 30.0, std::nullopt});
  auto s = compose_scene(spec);
  REQUIRE(s.objects.size() == 1);

  auto cc = connected_components(binarize(
      [&] {
        Grid<float> g(s.mask.w, s.mask.h);
        for (std::size_t i = 0; i < g.size(); ++i) g.v[i] = s.mask.v[i] ? 1.0f : 0.0f;
        return g;
      }(),
      0.5));
  REQUIRE(cc.components.size() == 1);
  std::vector<Point> pts;
  for (const auto& p : cc.components[0].pixels)
    pts.push_back({static_cast<double>(p.x), static_cast<double>(p.y)});
  auto rect = min_area_rect(pts);
  REQUIRE(angle_dist_mod180(long_side_angle(rect), 30.0) < 3.0);
}

TEST_CASE("generator round-trip: mask components match placements") {
  for (std::uint64_t seed : {100ull, 200ull, 300ull, 400ull}) {
    auto spec = random_scene_spec(seed, 256, 256);
    auto s = compose_scene(spec);
    auto gt = gt_objects_from_mask(s.mask);
    REQUIRE(gt.size() == s.objects.size());
    for (const auto& obj : s.objects) {
      // pair annotation with the component whose centroid is nearest
      Point pc{0, 0};
      for (const auto& p : obj.polygon) {
        pc.x += p.x / obj.polygon.size();
        pc.y += p.y / obj.polygon.size();
      }
      const GtObject* nearest = nullptr;
      double best = 1e18;
      for (const auto& g : gt) {
        Point gc{0, 0};
        for (const auto& p : g.pixels) {
          gc.x += static_cast<double>(p.x) / g.pixels.size();
          gc.y += static_cast<double>(p.y) / g.pixels.size();
        }
        double d = std::hypot(gc.x - pc.x, gc.y - pc.y);
        if (d < best) {
          best = d;
          nearest = &g;
        }
      }
      REQUIRE(nearest != nullptr);
      REQUIRE(nearest->class_id == obj.class_id);

      std::vector<Point> pts;
      for (const auto& p : nearest->pixels)
        pts.push_back({static_cast<double>(p.x), static_cast<double>(p.y)});
      auto rect = min_area_rect(pts);
      double want_area = polygon_area(obj.polygon);
      REQUIRE(std::fabs(rect.area() - want_area) <= 0.10 * want_area);
      if (std::fabs(rect.w - rect.h) > 0.15 * std::max(rect.w, rect.h)) {
        // angle comparison is meaningful only for non-square symbols
        double placed = 0;
        for (const auto& pl : spec.placements)
          if (static_cast<int>(pl.kind) == obj.class_id) placed = pl.angle_deg;
        REQUIRE(angle_dist_mod180(long_side_angle(rect),
                                  std::fmod(placed + 360.0, 180.0)) < 3.0);
      }
    }
  }
}

TEST_CASE("superpixel targets from masks") {
  Grid<std::uint8_t> all(8, 8, 3);
  auto t = mask_to_superpixel_targets(all);
  REQUIRE(t.h == 2);
  REQUIRE(t.w == 2);
  REQUIRE(t.positives() == 4);
  REQUIRE(t.class_id[0] == 2);

  // exactly half a block object -> positive at coverage 0.5
  Grid<std::uint8_t> half(4, 4, 0);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 4; ++x) half.at(y, x) = 1;
  REQUIRE(mask_to_superpixel_targets(half).positives() == 1);

  // 7 of 16 stays negative
  Grid<std::uint8_t> seven(4, 4, 0);
  int placed = 0;
  for (int y = 0; y < 4 && placed < 7; ++y)
    for (int x = 0; x < 4 && placed < 7; ++x) seven.at(y, x) = 1, ++placed;
  REQUIRE(mask_to_superpixel_targets(seven).positives() == 0);

  REQUIRE(mask_to_superpixel_targets(Grid<std::uint8_t>(16, 16, 0)).positives() == 0);
  REQUIRE_THROWS_AS(mask_to_superpixel_targets(Grid<std::uint8_t>(9, 8, 1)),
                    std::invalid_argument);
}

TEST_CASE("pgm roundtrip and color luma") {
  auto dir = fs::temp_directory_path() / "barseg_pgm_test";
  fs::create_directories(dir);

  GrayImage img(33, 17);
  Rng rng(9);
  for (auto& v : img.v) v = static_cast<std::uint8_t>(rng.index(256));
  write_pgm((dir / "a.pgm").string(), img);
  auto back = read_pgm((dir / "a.pgm").string());
  REQUIRE(back == img);

  {
    std::ofstream os(dir / "c.ppm", std::ios::binary);
    os << "P6\n# comment line\n2 1\n255\n";
    unsigned char px[6] = {255, 0, 0, 0, 255, 0};  // red, green
    os.write(reinterpret_cast<char*>(px), 6);
  }
  auto gray = read_pgm((dir / "c.ppm").string());
  REQUIRE(gray.w == 2);
  REQUIRE(static_cast<int>(gray.v[0]) == (77 * 255 + 128) >> 8);
  REQUIRE(static_cast<int>(gray.v[1]) == (150 * 255 + 128) >> 8);

  REQUIRE_THROWS_WITH(read_pgm((dir / "missing.pgm").string()),
                      Catch::Matchers::ContainsSubstring("missing.pgm"));
  fs::remove_all(dir);
}

TEST_CASE("manifest save/load roundtrip and validation") {
  auto dir = fs::temp_directory_path() / "barseg_manifest_test";
  fs::create_directories(dir);

  DatasetManifest m;
  m.dir = dir;
  m.class_names = {"EAN13", "Bars1D", "Matrix2D", "Stacked2D"};
  for (int i = 0; i < 3; ++i) {
    auto s = compose_scene(random_scene_spec(1000 + i, 128, 128));
    ManifestRecord rec;
    rec.image = "img_" + std::to_string(i) + ".pgm";
    rec.mask = "msk_" + std::to_string(i) + ".pgm";
    rec.objects = s.objects;
    write_pgm((dir / rec.image).string(), s.image);
    write_pgm((dir / rec.mask).string(), s.mask);
    m.records.push_back(rec);
  }
  save_manifest(dir / "manifest.jsonl", m);

  auto loaded = load_manifest(dir / "manifest.jsonl");
  REQUIRE(loaded.class_names == m.class_names);
  REQUIRE(loaded.records.size() == 3);
  REQUIRE(loaded.records[0].objects.size() == m.records[0].objects.size());

  auto s0 = load_sample(loaded, 0);
  REQUIRE(s0.image.w == 128);
  REQUIRE(s0.mask.h == 128);

  // a record pointing at a missing mask is rejected with the path
  fs::remove(dir / "msk_1.pgm");
  REQUIRE_THROWS_WITH(load_manifest(dir / "manifest.jsonl"),
                      Catch::Matchers::ContainsSubstring("msk_1.pgm"));
  fs::remove_all(dir);
}

TEST_CASE("benchmark pair loading") {
  auto dir = fs::temp_directory_path() / "barseg_bench_test";
  fs::create_directories(dir);

  GrayImage img(640, 480, 128);
  Grid<std::uint8_t> mask(640, 480, 0);
  for (int y = 100; y < 160; ++y)
    for (int x = 50; x < 250; ++x) mask.at(y, x) = 255;
  for (int y = 300; y < 380; ++y)
    for (int x = 400; x < 500; ++x) mask.at(y, x) = 255;
  write_pgm((dir / "img.pgm").string(), img);
  write_pgm((dir / "mask.pgm").string(), mask);

  auto s = load_benchmark_pair((dir / "img.pgm").string(), (dir / "mask.pgm").string());
  REQUIRE(s.mask.w == 640);
  REQUIRE(s.mask.h == 480);
  REQUIRE(s.objects.size() == 2);
  for (const auto& o : s.objects) REQUIRE(o.class_id == 0);

  Grid<std::uint8_t> black(640, 480, 0);
  write_pgm((dir / "black.pgm").string(), black);
  auto empty = load_benchmark_pair((dir / "img.pgm").string(), (dir / "black.pgm").string());
  REQUIRE(empty.objects.empty());

  GrayImage small(320, 240, 0);
  write_pgm((dir / "small.pgm").string(), small);
  REQUIRE_THROWS_AS(
      load_benchmark_pair((dir / "img.pgm").string(), (dir / "small.pgm").string()),
      std::invalid_argument);
  fs::remove_all(dir);
}
