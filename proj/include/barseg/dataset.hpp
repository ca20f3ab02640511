#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "barseg/loss.hpp"
#include "barseg/postprocess.hpp"
#include "barseg/sample.hpp"

namespace barseg {

// Superpixel ground truth from a full-resolution class mask: a cell turns
// positive when at least `coverage` of its scale x scale block is object;
// its class is the majority class inside the block (ties to the smaller id).
inline SuperpixelTargets mask_to_superpixel_targets(const Grid<std::uint8_t>& mask,
                                                    int scale = 4, double coverage = 0.5) {
  require(scale >= 1, "superpixel targets: scale must be positive");
  require(mask.w % scale == 0 && mask.h % scale == 0,
          "superpixel targets: mask " + std::to_string(mask.w) + "x" + std::to_string(mask.h) +
              " not divisible by " + std::to_string(scale) + " (pad with background first)");
  const int gw = mask.w / scale, gh = mask.h / scale;
  SuperpixelTargets t(gh, gw);
  const int block = scale * scale;
  for (int gy = 0; gy < gh; ++gy)
    for (int gx = 0; gx < gw; ++gx) {
      int votes[256] = {0};
      int object = 0;
      for (int y = gy * scale; y < (gy + 1) * scale; ++y)
        for (int x = gx * scale; x < (gx + 1) * scale; ++x) {
          std::uint8_t v = mask.at(y, x);
          if (v) {
            ++object;
            ++votes[v];
          }
        }
      if (object >= coverage * block) {
        int best = 0;
        for (int v = 1; v < 256; ++v)
          if (votes[v] > (best ? votes[best] : 0)) best = v;
        if (best) {
          t.detect[gy * gw + gx] = 1;
          t.class_id[gy * gw + gx] = best - 1;
        }
      }
    }
  return t;
}

// ---------------------------------------------------------------------------
// Manifest: JSON-lines index of a dataset directory. An optional header line
// declares the class names; every following line is one record with image
// and mask paths (relative to the manifest) and the object polygons.
// ---------------------------------------------------------------------------

struct ManifestRecord {
  std::string image;
  std::string mask;
  std::vector<ObjectAnnotation> objects;
};

struct DatasetManifest {
  std::filesystem::path dir;
  std::vector<std::string> class_names;
  std::vector<ManifestRecord> records;

  std::filesystem::path image_path(std::size_t i) const { return dir / records[i].image; }
  std::filesystem::path mask_path(std::size_t i) const { return dir / records[i].mask; }
};

inline void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("manifest: cannot open '" + path.string() + "' for writing");
  nlohmann::json header;
  header["schema"] = "barseg-manifest/1";
  header["classes"] = m.class_names;
  os << header.dump() << "\n";
  for (const auto& rec : m.records) {
    nlohmann::json j;
    j["image"] = rec.image;
    j["mask"] = rec.mask;
    auto& objs = j["objects"] = nlohmann::json::array();
    for (const auto& obj : rec.objects) {
      nlohmann::json jo;
      jo["class"] = obj.class_id;
      auto& poly = jo["polygon"] = nlohmann::json::array();
      for (const auto& p : obj.polygon) poly.push_back({p.x, p.y});
      objs.push_back(jo);
    }
    os << j.dump() << "\n";
  }
  if (!os) throw std::runtime_error("manifest: write to '" + path.string() + "' failed");
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("manifest: cannot open '" + path.string() + "'");
  DatasetManifest m;
  m.dir = path.parent_path();
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("manifest: line " + std::to_string(lineno) + " of '" +
                                  path.string() + "' is not valid JSON: " + e.what());
    }
    if (!j.contains("image")) {
      if (j.contains("classes")) m.class_names = j["classes"].get<std::vector<std::string>>();
      continue;  // header line
    }
    ManifestRecord rec;
    rec.image = j.at("image").get<std::string>();
    rec.mask = j.at("mask").get<std::string>();
    for (const auto& jo : j.value("objects", nlohmann::json::array())) {
      ObjectAnnotation obj;
      obj.class_id = jo.at("class").get<int>();
      for (const auto& jp : jo.at("polygon"))
        obj.polygon.push_back({jp.at(0).get<double>(), jp.at(1).get<double>()});
      rec.objects.push_back(std::move(obj));
    }
    m.records.push_back(std::move(rec));
  }
  // every referenced file must exist, and class ids must fit the declaration
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    for (const auto& p : {m.image_path(i), m.mask_path(i)})
      if (!std::filesystem::exists(p))
        throw std::invalid_argument("manifest: record " + std::to_string(i) +
                                    " references missing file '" + p.string() + "'");
    if (!m.class_names.empty())
      for (const auto& obj : m.records[i].objects)
        if (obj.class_id < 0 || obj.class_id >= static_cast<int>(m.class_names.size()))
          throw std::invalid_argument("manifest: record " + std::to_string(i) + " class id " +
                                      std::to_string(obj.class_id) + " outside declared " +
                                      std::to_string(m.class_names.size()) + " classes");
  }
  return m;
}

inline Sample load_sample(const DatasetManifest& m, std::size_t index) {
  require(index < m.records.size(), "load_sample: index out of range");
  Sample s;
  s.image = read_pgm(m.image_path(index).string());
  s.mask = read_pgm(m.mask_path(index).string());
  if (s.image.w != s.mask.w || s.image.h != s.mask.h)
    throw std::invalid_argument("load_sample: mask '" + m.mask_path(index).string() +
                                "' dims do not match image '" + m.image_path(index).string() +
                                "'");
  s.objects = m.records[index].objects;
  return s;
}

// Benchmark-style pair: grayscale image plus a binary mask. Every nonzero
// mask pixel is "barcode" (class 0); objects are the 8-connected components.
inline Sample load_benchmark_pair(const std::string& image_path, const std::string& mask_path) {
  Sample s;
  s.image = read_pgm(image_path);
  auto raw = read_pgm(mask_path);
  if (s.image.w != raw.w || s.image.h != raw.h)
    throw std::invalid_argument("benchmark pair: mask '" + mask_path + "' is " +
                                std::to_string(raw.w) + "x" + std::to_string(raw.h) +
                                " but image '" + image_path + "' is " +
                                std::to_string(s.image.w) + "x" + std::to_string(s.image.h));
  s.mask = Grid<std::uint8_t>(raw.w, raw.h, 0);
  for (std::size_t i = 0; i < raw.size(); ++i) s.mask.v[i] = raw.v[i] ? 1 : 0;
  auto cc = connected_components(s.mask);
  for (const auto& comp : cc.components) {
    ObjectAnnotation obj;
    obj.class_id = 0;
    int x0 = s.mask.w, y0 = s.mask.h, x1 = -1, y1 = -1;
    for (const auto& p : comp.pixels) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
    }
    obj.polygon = {{static_cast<double>(x0), static_cast<double>(y0)},
                   {static_cast<double>(x1), static_cast<double>(y0)},
                   {static_cast<double>(x1), static_cast<double>(y1)},
                   {static_cast<double>(x0), static_cast<double>(y1)}};
    s.objects.push_back(std::move(obj));
  }
  return s;
}

}  // namespace barseg
