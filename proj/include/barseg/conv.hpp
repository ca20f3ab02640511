#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <thread>
#include <vector>

#include "barseg/tensor.hpp"

namespace barseg {

// Global worker count for batch-level parallelism inside ops. Results are
// deterministic for a fixed input and a fixed thread count; gradient
// reductions group per-image partial sums by worker, so bitwise-reproducible
// runs should keep this at 1.
inline int& num_threads() {
  static int n = 1;
  return n;
}
inline void set_num_threads(int n) { num_threads() = n < 1 ? 1 : n; }

namespace detail {

// Static index partition; fn(i, slot) with slot < workers.
template <typename F>
void parallel_for(int count, F&& fn) {
  int workers = std::min(num_threads(), count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i, 0);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([=, &fn]() {
      int lo = static_cast<int>(static_cast<std::int64_t>(count) * t / workers);
      int hi = static_cast<int>(static_cast<std::int64_t>(count) * (t + 1) / workers);
      for (int i = lo; i < hi; ++i) fn(i, t);
    });
  }
  for (auto& th : pool) th.join();
}

#if defined(__GNUC__)
#define BARSEG_VECTOR_EXT 1
#endif

#if BARSEG_VECTOR_EXT
// 32-byte SIMD lane type. aligned(4) under-promises alignment so plain
// dereference compiles to unaligned loads; may_alias permits casting from T*.
template <typename T>
struct Simd {
  static constexpr int lanes = 32 / static_cast<int>(sizeof(T));
  typedef T V __attribute__((vector_size(32), aligned(4), may_alias));
};

// MR x (3*lanes) register tile of C += A*B, contraction over K.
template <typename T, int MR>
inline void gemm_tile(int K, const T* __restrict a, int lda, const T* __restrict b,
                      int ldb, T* __restrict c, int ldc) {
  using V = typename Simd<T>::V;
  V acc[MR][3] = {};
  for (int k = 0; k < K; ++k) {
    const V* bp = reinterpret_cast<const V*>(b + static_cast<std::size_t>(k) * ldb);
    V b0 = bp[0], b1 = bp[1], b2 = bp[2];
    for (int r = 0; r < MR; ++r) {
      V x = V{} + a[static_cast<std::size_t>(r) * lda + k];
      acc[r][0] += x * b0;
      acc[r][1] += x * b1;
      acc[r][2] += x * b2;
    }
  }
  for (int r = 0; r < MR; ++r) {
    V* cp = reinterpret_cast<V*>(c + static_cast<std::size_t>(r) * ldc);
    cp[0] += acc[r][0];
    cp[1] += acc[r][1];
    cp[2] += acc[r][2];
  }
}
#endif

// C (M x N) += A (M x K) * B (K x N), row-major. Hot shapes here have N as
// the long contiguous axis, so tiles advance along N in the outer loop and B
// column blocks stay cache-resident across row blocks.
template <typename T>
void gemm_nn_add(int M, int N, int K, const T* __restrict a, int lda,
                 const T* __restrict b, int ldb, T* __restrict c, int ldc) {
  int j = 0;
#if BARSEG_VECTOR_EXT
  constexpr int NR = 3 * Simd<T>::lanes;
  constexpr int MR = 4;
  for (; j + NR <= N; j += NR) {
    int m = 0;
    for (; m + MR <= M; m += MR)
      gemm_tile<T, MR>(K, a + static_cast<std::size_t>(m) * lda, lda, b + j, ldb,
                       c + static_cast<std::size_t>(m) * ldc + j, ldc);
    for (; m < M; ++m)
      gemm_tile<T, 1>(K, a + static_cast<std::size_t>(m) * lda, lda, b + j, ldb,
                      c + static_cast<std::size_t>(m) * ldc + j, ldc);
  }
#endif
  // Scalar tail (and portable fallback): lane-strip accumulators keep a
  // fixed summation order independent of the surrounding block split.
  if (j < N) {
    for (int m = 0; m < M; ++m) {
      const T* am = a + static_cast<std::size_t>(m) * lda;
      for (int jj = j; jj < N; ++jj) {
        T s = 0;
        const T* bp = b + jj;
        for (int k = 0; k < K; ++k) s += am[k] * bp[static_cast<std::size_t>(k) * ldb];
        c[static_cast<std::size_t>(m) * ldc + jj] += s;
      }
    }
  }
}

// out (rows x cols) = in^T for a (cols x rows) row-major input.
template <typename T>
void transpose(int rows, int cols, const T* in, int ldin, T* out, int ldout) {
  for (int r = 0; r < rows; ++r)
    for (int cidx = 0; cidx < cols; ++cidx)
      out[static_cast<std::size_t>(r) * ldout + cidx] =
          in[static_cast<std::size_t>(cidx) * ldin + r];
}

template <typename T>
std::vector<T>& scratch_buffer(int slot_unused) {
  (void)slot_unused;
  thread_local std::vector<T> buf;
  return buf;
}

}  // namespace detail

// Convolution descriptor. Padding is always "same-dilated": stride-1 layers
// with odd kernels preserve spatial size exactly.
template <typename T>
struct ConvParams {
  int kh = 3, kw = 3;
  int stride = 1;
  int dilation = 1;
  int groups = 1;
  Tensor<T> weights;   // (out_ch, in_ch/groups, kh, kw)
  std::vector<T> bias; // empty = no bias, else length out_ch

  int out_channels() const { return weights.n; }
  int in_channels() const { return weights.c * groups; }
  int pad_h() const { return dilation * (kh - 1) / 2; }
  int pad_w() const { return dilation * (kw - 1) / 2; }

  int out_size(int in, int k, int pad) const {
    return (in + 2 * pad - dilation * (k - 1) - 1) / stride + 1;
  }
  int out_h(int in_h) const { return out_size(in_h, kh, pad_h()); }
  int out_w(int in_w) const { return out_size(in_w, kw, pad_w()); }

  void validate(const Tensor<T>& input) const {
    require(stride >= 1 && dilation >= 1 && groups >= 1,
            "conv2d: stride/dilation/groups must be positive");
    require(weights.h == kh && weights.w == kw,
            "conv2d: weight tensor " + weights.shape_str() + " does not match kernel " +
                std::to_string(kh) + "x" + std::to_string(kw));
    require(out_channels() % groups == 0 && in_channels() % groups == 0,
            "conv2d: group count " + std::to_string(groups) + " must divide channels");
    require(input.c == in_channels(),
            "conv2d: input " + input.shape_str() + " incompatible with weights " +
                weights.shape_str() + " (groups=" + std::to_string(groups) + ")");
    require(input.h >= 1 && input.w >= 1, "conv2d: empty spatial dims " + input.shape_str());
    require(bias.empty() || static_cast<int>(bias.size()) == out_channels(),
            "conv2d: bias length " + std::to_string(bias.size()) + " != out channels");
    require(out_h(input.h) >= 1 && out_w(input.w) >= 1,
            "conv2d: kernel does not fit input " + input.shape_str());
  }
};

namespace detail {

// Patch-gather: col is (cg*kh*kw) x (oh*ow) for channels [c0, c0+cg) of image b.
template <typename T>
void im2col(const Tensor<T>& in, int b, int c0, int cg, const ConvParams<T>& p,
            int oh, int ow, T* col) {
  const int H = in.h, W = in.w;
  const int ph = p.pad_h(), pw = p.pad_w();
  const std::size_t pcols = static_cast<std::size_t>(oh) * ow;
  for (int ci = 0; ci < cg; ++ci) {
    const T* src = in.plane(b, c0 + ci);
    for (int ky = 0; ky < p.kh; ++ky) {
      for (int kx = 0; kx < p.kw; ++kx) {
        T* row = col + (static_cast<std::size_t>(ci) * p.kh * p.kw +
                        static_cast<std::size_t>(ky) * p.kw + kx) * pcols;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * p.stride - ph + ky * p.dilation;
          T* dst = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const T* srow = src + static_cast<std::size_t>(iy) * W;
          if (p.stride == 1) {
            int off = kx * p.dilation - pw;  // ix = ox + off
            int lo = std::max(0, -off);
            int hi = std::min(ow, W - off);
            if (lo > 0) std::fill(dst, dst + std::min(lo, ow), T(0));
            if (hi > lo) std::memcpy(dst + lo, srow + lo + off, sizeof(T) * (hi - lo));
            if (hi < ow) std::fill(dst + std::max(hi, 0), dst + ow, T(0));
          } else {
            for (int ox = 0; ox < ow; ++ox) {
              int ix = ox * p.stride - pw + kx * p.dilation;
              dst[ox] = (ix >= 0 && ix < W) ? srow[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add col rows back into the input gradient.
template <typename T>
void col2im_add(Tensor<T>& gin, int b, int c0, int cg, const ConvParams<T>& p,
                int oh, int ow, const T* col) {
  const int H = gin.h, W = gin.w;
  const int ph = p.pad_h(), pw = p.pad_w();
  const std::size_t pcols = static_cast<std::size_t>(oh) * ow;
  for (int ci = 0; ci < cg; ++ci) {
    T* dstp = gin.plane(b, c0 + ci);
    for (int ky = 0; ky < p.kh; ++ky) {
      for (int kx = 0; kx < p.kw; ++kx) {
        const T* row = col + (static_cast<std::size_t>(ci) * p.kh * p.kw +
                              static_cast<std::size_t>(ky) * p.kw + kx) * pcols;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * p.stride - ph + ky * p.dilation;
          if (iy < 0 || iy >= H) continue;
          const T* srow = row + static_cast<std::size_t>(oy) * ow;
          T* drow = dstp + static_cast<std::size_t>(iy) * W;
          if (p.stride == 1) {
            int off = kx * p.dilation - pw;
            int lo = std::max(0, -off);
            int hi = std::min(ow, W - off);
            for (int ox = lo; ox < hi; ++ox) drow[ox + off] += srow[ox];
          } else {
            for (int ox = 0; ox < ow; ++ox) {
              int ix = ox * p.stride - pw + kx * p.dilation;
              if (ix >= 0 && ix < W) drow[ix] += srow[ox];
            }
          }
        }
      }
    }
  }
}

// 1x1 stride-1 convolutions read the input planes directly as the column
// matrix; everything else goes through the im2col scratch buffer.
template <typename T>
bool is_pointwise(const ConvParams<T>& p) {
  return p.kh == 1 && p.kw == 1 && p.stride == 1 && p.dilation == 1;
}

}  // namespace detail

// Dilated, strided, grouped 2-D cross-correlation plus optional bias.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvParams<T>& p) {
  p.validate(input);
  const int oh = p.out_h(input.h), ow = p.out_w(input.w);
  const int oc = p.out_channels();
  const int cg = input.c / p.groups;       // input channels per group
  const int og = oc / p.groups;            // output channels per group
  const int kdim = cg * p.kh * p.kw;
  const std::size_t pcols = static_cast<std::size_t>(oh) * ow;
  Tensor<T> out(input.n, oc, oh, ow);

  detail::parallel_for(input.n, [&](int b, int slot) {
    auto& col = detail::scratch_buffer<T>(slot);
    for (int g = 0; g < p.groups; ++g) {
      const T* colmat;
      if (detail::is_pointwise(p)) {
        colmat = input.plane(b, g * cg);
      } else {
        col.resize(static_cast<std::size_t>(kdim) * pcols);
        detail::im2col(input, b, g * cg, cg, p, oh, ow, col.data());
        colmat = col.data();
      }
      T* outp = out.plane(b, g * og);
      for (int o = 0; o < og; ++o) {
        T v = p.bias.empty() ? T(0) : p.bias[g * og + o];
        std::fill(outp + o * pcols, outp + (o + 1) * pcols, v);
      }
      detail::gemm_nn_add(og, static_cast<int>(pcols), kdim,
                          p.weights.plane(g * og, 0), kdim, colmat,
                          static_cast<int>(pcols), outp, static_cast<int>(pcols));
    }
  });
  return out;
}

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weights;
  std::vector<T> bias;  // empty when the conv has no bias
};

// Exact adjoints of conv2d with respect to input, weights and bias.
template <typename T>
ConvGrads<T> conv2d_grad(const Tensor<T>& input, const ConvParams<T>& p,
                         const Tensor<T>& upstream) {
  p.validate(input);
  const int oh = p.out_h(input.h), ow = p.out_w(input.w);
  const int oc = p.out_channels();
  require(upstream.n == input.n && upstream.c == oc && upstream.h == oh && upstream.w == ow,
          "conv2d_grad: upstream " + upstream.shape_str() + " does not match conv output (" +
              std::to_string(input.n) + "," + std::to_string(oc) + "," + std::to_string(oh) +
              "," + std::to_string(ow) + ")");

  const int cg = input.c / p.groups;
  const int og = oc / p.groups;
  const int kdim = cg * p.kh * p.kw;
  const std::size_t pcols = static_cast<std::size_t>(oh) * ow;

  ConvGrads<T> g;
  g.input = Tensor<T>(input.n, input.c, input.h, input.w);
  g.weights = Tensor<T>(p.weights.n, p.weights.c, p.weights.h, p.weights.w);
  if (!p.bias.empty()) g.bias.assign(p.bias.size(), T(0));

  const int workers = std::min(num_threads(), input.n);
  std::vector<Tensor<T>> wpart(workers);
  std::vector<std::vector<T>> bpart(workers);
  for (int t = 0; t < workers; ++t) {
    wpart[t] = Tensor<T>(p.weights.n, p.weights.c, p.weights.h, p.weights.w);
    if (!p.bias.empty()) bpart[t].assign(p.bias.size(), T(0));
  }

  detail::parallel_for(input.n, [&](int b, int slot) {
    auto& col = detail::scratch_buffer<T>(slot);
    thread_local std::vector<T> colg, upt, gwt, wt;
    for (int grp = 0; grp < p.groups; ++grp) {
      const bool pw = detail::is_pointwise(p);
      const T* colmat;
      if (pw) {
        colmat = input.plane(b, grp * cg);
      } else {
        col.resize(static_cast<std::size_t>(kdim) * pcols);
        detail::im2col(input, b, grp * cg, cg, p, oh, ow, col.data());
        colmat = col.data();
      }
      const T* up = upstream.plane(b, grp * og);

      // dW^T (kdim x og) += col (kdim x P) * up^T (P x og); both products run
      // through the one nn-kernel, with the small operand transposed.
      upt.resize(pcols * og);
      detail::transpose(static_cast<int>(pcols), og, up, static_cast<int>(pcols),
                        upt.data(), og);
      gwt.assign(static_cast<std::size_t>(kdim) * og, T(0));
      detail::gemm_nn_add(kdim, og, static_cast<int>(pcols), colmat,
                          static_cast<int>(pcols), upt.data(), og, gwt.data(), og);
      T* wdst = wpart[slot].plane(grp * og, 0);
      for (int o = 0; o < og; ++o)
        for (int k = 0; k < kdim; ++k)
          wdst[static_cast<std::size_t>(o) * kdim + k] += gwt[static_cast<std::size_t>(k) * og + o];

      if (!p.bias.empty()) {
        for (int o = 0; o < og; ++o) {
          const T* urow = up + static_cast<std::size_t>(o) * pcols;
          T s = 0;
          for (std::size_t i = 0; i < pcols; ++i) s += urow[i];
          bpart[slot][grp * og + o] += s;
        }
      }

      // dCol (kdim x P) = W^T (kdim x og) * up (og x P), scattered back.
      wt.resize(static_cast<std::size_t>(kdim) * og);
      detail::transpose(kdim, og, p.weights.plane(grp * og, 0), kdim, wt.data(), og);
      if (pw) {
        detail::gemm_nn_add(kdim, static_cast<int>(pcols), og, wt.data(), og, up,
                            static_cast<int>(pcols), g.input.plane(b, grp * cg),
                            static_cast<int>(pcols));
      } else {
        colg.assign(static_cast<std::size_t>(kdim) * pcols, T(0));
        detail::gemm_nn_add(kdim, static_cast<int>(pcols), og, wt.data(), og, up,
                            static_cast<int>(pcols), colg.data(),
                            static_cast<int>(pcols));
        detail::col2im_add(g.input, b, grp * cg, cg, p, oh, ow, colg.data());
      }
    }
  });

  for (int t = 0; t < workers; ++t) {
    for (std::size_t i = 0; i < g.weights.data.size(); ++i)
      g.weights.data[i] += wpart[t].data[i];
    for (std::size_t i = 0; i < g.bias.size(); ++i) g.bias[i] += bpart[t][i];
  }
  return g;
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

enum class ActKind { relu, sigmoid, channel_softmax };

namespace detail {
template <typename T>
void check_range(const Tensor<T>& in, ActKind kind, int& b, int& e) {
  if (e < 0) e = in.c;
  require(b >= 0 && b <= e && e <= in.c, "activation: channel range [" + std::to_string(b) +
                                             "," + std::to_string(e) + ") out of bounds for " +
                                             in.shape_str());
  if (kind == ActKind::channel_softmax)
    require(b < e, "activation: empty channel range for softmax");
}
}  // namespace detail

// Applies the nonlinearity to channels [ch_begin, ch_end); other channels pass
// through unchanged. channel_softmax normalizes across the selected range at
// every spatial site.
template <typename T>
Tensor<T> activation(const Tensor<T>& in, ActKind kind, int ch_begin = 0, int ch_end = -1) {
  detail::check_range(in, kind, ch_begin, ch_end);
  Tensor<T> out = in;
  const std::size_t plane = static_cast<std::size_t>(in.h) * in.w;
  for (int b = 0; b < in.n; ++b) {
    if (kind == ActKind::relu || kind == ActKind::sigmoid) {
      for (int c = ch_begin; c < ch_end; ++c) {
        T* v = out.plane(b, c);
        if (kind == ActKind::relu)
          for (std::size_t i = 0; i < plane; ++i) v[i] = v[i] > T(0) ? v[i] : T(0);
        else
          for (std::size_t i = 0; i < plane; ++i) v[i] = T(1) / (T(1) + std::exp(-v[i]));
      }
    } else {
      for (std::size_t i = 0; i < plane; ++i) {
        T mx = in.plane(b, ch_begin)[i];
        for (int c = ch_begin + 1; c < ch_end; ++c) mx = std::max(mx, in.plane(b, c)[i]);
        T sum = 0;
        for (int c = ch_begin; c < ch_end; ++c) {
          T e = std::exp(in.plane(b, c)[i] - mx);
          out.plane(b, c)[i] = e;
          sum += e;
        }
        for (int c = ch_begin; c < ch_end; ++c) out.plane(b, c)[i] /= sum;
      }
    }
  }
  return out;
}

// Adjoint of activation evaluated at pre-activation `in`. Softmax uses the
// full Jacobian-vector product across its channel range.
template <typename T>
Tensor<T> activation_grad(const Tensor<T>& in, ActKind kind, const Tensor<T>& upstream,
                          int ch_begin = 0, int ch_end = -1) {
  detail::check_range(in, kind, ch_begin, ch_end);
  require(upstream.same_shape(in), "activation_grad: upstream " + upstream.shape_str() +
                                       " != input " + in.shape_str());
  Tensor<T> out = upstream;
  const std::size_t plane = static_cast<std::size_t>(in.h) * in.w;
  for (int b = 0; b < in.n; ++b) {
    if (kind == ActKind::relu) {
      for (int c = ch_begin; c < ch_end; ++c) {
        const T* z = in.plane(b, c);
        T* d = out.plane(b, c);
        for (std::size_t i = 0; i < plane; ++i)
          if (z[i] <= T(0)) d[i] = T(0);
      }
    } else if (kind == ActKind::sigmoid) {
      for (int c = ch_begin; c < ch_end; ++c) {
        const T* z = in.plane(b, c);
        T* d = out.plane(b, c);
        for (std::size_t i = 0; i < plane; ++i) {
          T s = T(1) / (T(1) + std::exp(-z[i]));
          d[i] *= s * (T(1) - s);
        }
      }
    } else {
      for (std::size_t i = 0; i < plane; ++i) {
        T mx = in.plane(b, ch_begin)[i];
        for (int c = ch_begin + 1; c < ch_end; ++c) mx = std::max(mx, in.plane(b, c)[i]);
        T sum = 0;
        for (int c = ch_begin; c < ch_end; ++c) sum += std::exp(in.plane(b, c)[i] - mx);
        T dot = 0;
        for (int c = ch_begin; c < ch_end; ++c) {
          T pc = std::exp(in.plane(b, c)[i] - mx) / sum;
          dot += upstream.plane(b, c)[i] * pc;
        }
        for (int c = ch_begin; c < ch_end; ++c) {
          T pc = std::exp(in.plane(b, c)[i] - mx) / sum;
          out.plane(b, c)[i] = pc * (upstream.plane(b, c)[i] - dot);
        }
      }
    }
  }
  return out;
}

}  // namespace barseg
