#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "barseg/network.hpp"
#include "barseg/tensor.hpp"

namespace barseg {

// Detection/classification loss weights. The detection side is deliberately
// recall-heavy: positives weigh 15x negatives.
struct LossWeights {
  double w_p = 15.0;
  double w_n = 1.0;
  double w_h = 5.0;
  double alpha = 1.0;
};

// Per-image ground truth on the superpixel grid. class_id is only meaningful
// where detect = 1.
struct SuperpixelTargets {
  int h = 0, w = 0;
  std::vector<std::uint8_t> detect;
  std::vector<std::int32_t> class_id;

  SuperpixelTargets() = default;
  SuperpixelTargets(int h_, int w_) : h(h_), w(w_), detect(h_ * w_, 0), class_id(h_ * w_, 0) {}
  long long positives() const {
    long long k = 0;
    for (auto v : detect) k += v ? 1 : 0;
    return k;
  }
};

template <typename T>
struct LossBreakdown {
  T l_p = 0, l_n = 0, l_h = 0;
  T l_det = 0, l_cls = 0, l_total = 0;
  long long k = 0;  // positive superpixels (summed over the batch)
};

namespace detail {

constexpr double kProbEps = 1e-7;

template <typename T>
T clamp_prob(T p) {
  return std::min(std::max(p, static_cast<T>(kProbEps)), static_cast<T>(1.0 - kProbEps));
}

template <typename T>
void check_targets(const Tensor<T>& map, const std::vector<SuperpixelTargets>& targets) {
  require(static_cast<int>(targets.size()) == map.n,
          "loss: got " + std::to_string(targets.size()) + " target images for batch " +
              map.shape_str());
  for (const auto& t : targets)
    require(t.h == map.h && t.w == map.w,
            "loss: target grid " + std::to_string(t.h) + "x" + std::to_string(t.w) +
                " does not match prediction " + map.shape_str());
}

// Indices of the k negatives with the highest predicted probability, ties
// broken toward the lowest flat index. Returns all negatives when k exceeds
// their count.
template <typename T>
std::vector<int> hard_negative_set(const T* prob, const SuperpixelTargets& tgt, long long k) {
  std::vector<int> neg;
  neg.reserve(tgt.detect.size());
  for (int i = 0; i < static_cast<int>(tgt.detect.size()); ++i)
    if (!tgt.detect[i]) neg.push_back(i);
  if (k <= 0 || neg.empty()) return {};
  auto worse = [&](int a, int b) {
    if (prob[a] != prob[b]) return prob[a] > prob[b];
    return a < b;
  };
  if (k < static_cast<long long>(neg.size())) {
    std::nth_element(neg.begin(), neg.begin() + k - 1, neg.end(), worse);
    neg.resize(static_cast<std::size_t>(k));
  }
  return neg;
}

}  // namespace detail

// Eq. 2: L_det = w_p * L_p + w_n * L_n + w_h * L_h per image, averaged over
// the batch with equal image weight. k, the mined-negative count, is the
// per-image positive count.
template <typename T>
LossBreakdown<T> detection_loss(const Tensor<T>& detect_prob,
                                const std::vector<SuperpixelTargets>& targets,
                                const LossWeights& w) {
  require(detect_prob.c == 1, "detection_loss: expected single-channel map, got " +
                                  detect_prob.shape_str());
  detail::check_targets(detect_prob, targets);
  LossBreakdown<T> out;
  const int cells = detect_prob.h * detect_prob.w;
  for (int b = 0; b < detect_prob.n; ++b) {
    const T* p = detect_prob.plane(b, 0);
    const SuperpixelTargets& tgt = targets[b];
    double lp = 0, ln_ = 0, lh = 0;
    long long n_pos = 0, n_neg = 0;
    for (int i = 0; i < cells; ++i) {
      // clamp in double: 1 - 1e-7 is not representable in binary32
      double q = detail::clamp_prob(static_cast<double>(p[i]));
      if (tgt.detect[i]) {
        lp += -std::log(q);
        ++n_pos;
      } else {
        ln_ += -std::log(1.0 - q);
        ++n_neg;
      }
    }
    auto hard = detail::hard_negative_set(p, tgt, n_pos);
    for (int i : hard)
      lh += -std::log(1.0 - detail::clamp_prob(static_cast<double>(p[i])));
    out.l_p += static_cast<T>(n_pos > 0 ? lp / n_pos : 0.0);
    out.l_n += static_cast<T>(n_neg > 0 ? ln_ / n_neg : 0.0);
    out.l_h += static_cast<T>(!hard.empty() ? lh / hard.size() : 0.0);
    out.k += n_pos;
  }
  out.l_p /= detect_prob.n;
  out.l_n /= detect_prob.n;
  out.l_h /= detect_prob.n;
  out.l_det = static_cast<T>(w.w_p) * out.l_p + static_cast<T>(w.w_n) * out.l_n +
              static_cast<T>(w.w_h) * out.l_h;
  out.l_total = out.l_det;
  return out;
}

// Mean cross-entropy of the true class over positive superpixels only;
// 0 when an image has no positives.
template <typename T>
T classification_loss(const Tensor<T>& class_prob,
                      const std::vector<SuperpixelTargets>& targets) {
  detail::check_targets(class_prob, targets);
  const int cells = class_prob.h * class_prob.w;
  double total = 0;
  for (int b = 0; b < class_prob.n; ++b) {
    const SuperpixelTargets& tgt = targets[b];
    double sum = 0;
    long long n_pos = 0;
    for (int i = 0; i < cells; ++i) {
      if (!tgt.detect[i]) continue;
      std::int32_t cls = tgt.class_id[i];
      require(cls >= 0 && cls < class_prob.c,
              "classification_loss: class id " + std::to_string(cls) + " out of range [0," +
                  std::to_string(class_prob.c) + ")");
      double q = detail::clamp_prob(static_cast<double>(class_prob.plane(b, cls)[i]));
      sum += -std::log(q);
      ++n_pos;
    }
    total += n_pos > 0 ? sum / n_pos : 0.0;
  }
  return static_cast<T>(total / class_prob.n);
}

// Eq. 1: L = L_detection + alpha * L_classification.
template <typename T>
LossBreakdown<T> total_loss(const SegmentationMap<T>& seg,
                            const std::vector<SuperpixelTargets>& targets,
                            const LossWeights& w) {
  LossBreakdown<T> out = detection_loss(seg.detect_prob, targets, w);
  if (!seg.class_prob.empty()) out.l_cls = classification_loss(seg.class_prob, targets);
  out.l_total = out.l_det + static_cast<T>(w.alpha) * out.l_cls;
  return out;
}

// Loss plus its exact gradient with respect to the pre-activation logits of
// the final layer (sigmoid and softmax folded in analytically). Sites whose
// probability hit the clamp rails contribute zero gradient, matching the
// clamped forward value.
template <typename T>
LossBreakdown<T> total_loss_grad(const SegmentationMap<T>& seg,
                                 const std::vector<SuperpixelTargets>& targets,
                                 const LossWeights& w, Tensor<T>& grad_logits) {
  LossBreakdown<T> out = total_loss(seg, targets, w);
  const Tensor<T>& dp = seg.detect_prob;
  const int n_classes = seg.class_prob.empty() ? 0 : seg.class_prob.c;
  grad_logits = Tensor<T>(dp.n, 1 + n_classes, dp.h, dp.w);
  const int cells = dp.h * dp.w;
  const double lo = detail::kProbEps, hi = 1.0 - detail::kProbEps;

  for (int b = 0; b < dp.n; ++b) {
    const SuperpixelTargets& tgt = targets[b];
    const T* p = dp.plane(b, 0);
    long long n_pos = 0, n_neg = 0;
    for (int i = 0; i < cells; ++i) (tgt.detect[i] ? n_pos : n_neg)++;
    auto hard = detail::hard_negative_set(p, tgt, n_pos);
    std::vector<std::uint8_t> in_hard(cells, 0);
    for (int i : hard) in_hard[i] = 1;

    T* gd = grad_logits.plane(b, 0);
    const double inv_b = 1.0 / dp.n;
    for (int i = 0; i < cells; ++i) {
      const double pi = static_cast<double>(p[i]);
      if (pi < lo || pi > hi) continue;  // clamped: flat
      double g = 0;
      if (tgt.detect[i]) {
        g = w.w_p * inv_b / n_pos * (pi - 1.0);
      } else {
        g = w.w_n * inv_b / n_neg * pi;
        if (in_hard[i]) g += w.w_h * inv_b / hard.size() * pi;
      }
      gd[i] = static_cast<T>(g);
    }

    if (n_classes > 0 && n_pos > 0) {
      const double scale = w.alpha * inv_b / n_pos;
      for (int i = 0; i < cells; ++i) {
        if (!tgt.detect[i]) continue;
        std::int32_t cls = tgt.class_id[i];
        const double pt = static_cast<double>(seg.class_prob.plane(b, cls)[i]);
        if (pt < lo || pt > hi) continue;  // clamped true-class prob: flat
        for (int c = 0; c < n_classes; ++c) {
          double pc = seg.class_prob.plane(b, c)[i];
          grad_logits.plane(b, 1 + c)[i] +=
              static_cast<T>(scale * (pc - (c == cls ? 1.0 : 0.0)));
        }
      }
    }
  }
  return out;
}

}  // namespace barseg
