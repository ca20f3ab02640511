#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace barseg {

// Dense 4-D array in (batch, channels, height, width) order, batch outermost,
// row-major. `grad` is an optional buffer of identical length, allocated on
// demand for trainable parameters.
template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;
  std::vector<T> grad;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_), data(checked_size(n_, c_, h_, w_), fill) {}

  static std::size_t checked_size(int n, int c, int h, int w) {
    if (n < 0 || c < 0 || h < 0 || w < 0)
      throw std::invalid_argument("tensor: negative dimension in shape (" + std::to_string(n) +
                                  "," + std::to_string(c) + "," + std::to_string(h) + "," +
                                  std::to_string(w) + ")");
    return static_cast<std::size_t>(n) * c * h * w;
  }

  std::int64_t size() const { return static_cast<std::int64_t>(n) * c * h * w; }
  bool empty() const { return size() == 0; }

  std::int64_t offset(int b, int ch, int y, int x) const {
    return ((static_cast<std::int64_t>(b) * c + ch) * h + y) * w + x;
  }

  T& at(int b, int ch, int y, int x) { return data[offset(b, ch, y, x)]; }
  const T& at(int b, int ch, int y, int x) const { return data[offset(b, ch, y, x)]; }

  // Pointer to the start of one (batch, channel) plane.
  T* plane(int b, int ch) { return data.data() + offset(b, ch, 0, 0); }
  const T* plane(int b, int ch) const { return data.data() + offset(b, ch, 0, 0); }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
  }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }

  void zero_grad() {
    if (!grad.empty()) grad.assign(grad.size(), T(0));
  }

  // Elementwise copy into another scalar type (float <-> double check mode).
  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(n, c, h, w);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace barseg
