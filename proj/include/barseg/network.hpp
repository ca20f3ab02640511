#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "barseg/conv.hpp"
#include "barseg/rng.hpp"
#include "barseg/tensor.hpp"

namespace barseg {

struct NetworkConfig {
  int channels = 24;       // C
  int n_classes = 0;       // N; 0 disables the classification head
  int input_channels = 1;  // grayscale by default

  void validate() const {
    require(channels >= 1, "network config: channels must be >= 1");
    require(n_classes >= 0, "network config: n_classes must be >= 0");
    require(input_channels >= 1, "network config: input_channels must be >= 1");
  }
};

enum class LayerActivation { relu, sigmoid_softmax };

struct LayerSpec {
  int index = 0;  // 1..10
  int stride = 1;
  int dilation = 1;
  bool separable = false;
  int kernel = 3;
  int in_ch = 0;
  int out_ch = 0;
  LayerActivation activation = LayerActivation::relu;
};

// The fixed 10-layer architecture: a separable downscale module (layers 1-3,
// strides 2,1,2), a dilated context module (layers 4-8, dilations 1,2,4,8,16),
// a fuse layer (9) and a 1x1 head emitting 1+N channels.
inline std::vector<LayerSpec> build_network(const NetworkConfig& cfg) {
  cfg.validate();
  const int C = cfg.channels;
  const int strides[10] = {2, 1, 2, 1, 1, 1, 1, 1, 1, 1};
  const int dilations[10] = {1, 1, 1, 1, 2, 4, 8, 16, 1, 1};
  std::vector<LayerSpec> layers(10);
  for (int i = 0; i < 10; ++i) {
    LayerSpec& l = layers[i];
    l.index = i + 1;
    l.stride = strides[i];
    l.dilation = dilations[i];
    l.separable = i < 3;
    l.kernel = (i == 9) ? 1 : 3;
    l.in_ch = (i == 0) ? cfg.input_channels : C;
    l.out_ch = (i == 9) ? 1 + cfg.n_classes : C;
    l.activation = (i == 9) ? LayerActivation::sigmoid_softmax : LayerActivation::relu;
  }
  return layers;
}

// rf_i = rf_{i-1} + (kernel-1) * dilation * jump, jump = product of strides
// of the preceding layers.
inline std::vector<int> receptive_fields(const std::vector<LayerSpec>& layers) {
  std::vector<int> rf;
  rf.reserve(layers.size());
  int field = 1, jump = 1;
  for (const auto& l : layers) {
    field += (l.kernel - 1) * l.dilation * jump;
    jump *= l.stride;
    rf.push_back(field);
  }
  return rf;
}

// Weight + bias total under the architecture's bias convention: depthwise
// stages carry no bias, every pointwise/full convolution does.
inline long long count_parameters(const NetworkConfig& cfg) {
  long long total = 0;
  for (const auto& l : build_network(cfg)) {
    if (l.separable) {
      total += static_cast<long long>(l.in_ch) * l.kernel * l.kernel;  // depthwise, no bias
      total += static_cast<long long>(l.out_ch) * l.in_ch + l.out_ch;  // pointwise + bias
    } else {
      total += static_cast<long long>(l.out_ch) * l.in_ch * l.kernel * l.kernel + l.out_ch;
    }
  }
  return total;
}

// Network output. detect_prob holds sigmoid probabilities for the barcode
// channel; class_prob holds the softmax over the N type channels (empty when
// N = 0). Both live on the superpixel grid (input / 4).
template <typename T>
struct SegmentationMap {
  Tensor<T> detect_prob;  // (batch, 1, H/4, W/4)
  Tensor<T> class_prob;   // (batch, N, H/4, W/4)
};

// Sigmoid on channel 0, softmax across the remaining n_classes channels.
template <typename T>
SegmentationMap<T> split_logits(const Tensor<T>& logits, int n_classes) {
  require(logits.c == 1 + n_classes, "split_logits: logits " + logits.shape_str() +
                                         " do not carry 1+" + std::to_string(n_classes) +
                                         " channels");
  SegmentationMap<T> out;
  Tensor<T> act = activation(logits, ActKind::sigmoid, 0, 1);
  if (n_classes > 0) act = activation(act, ActKind::channel_softmax, 1, 1 + n_classes);
  const std::size_t plane = static_cast<std::size_t>(logits.h) * logits.w;
  out.detect_prob = Tensor<T>(logits.n, 1, logits.h, logits.w);
  for (int b = 0; b < logits.n; ++b)
    std::copy(act.plane(b, 0), act.plane(b, 0) + plane, out.detect_prob.plane(b, 0));
  if (n_classes > 0) {
    out.class_prob = Tensor<T>(logits.n, n_classes, logits.h, logits.w);
    for (int b = 0; b < logits.n; ++b)
      std::copy(act.plane(b, 1), act.plane(b, 1) + n_classes * plane, out.class_prob.plane(b, 0));
  }
  return out;
}

template <typename T>
struct ConvUnit {
  ConvParams<T> conv;
  std::vector<T> bias_grad;
  bool relu_before = false;  // the unit's input went through a ReLU
  int layer = 0;
};

// Mutable view over one parameter array and its gradient.
template <typename T>
struct ParamBlock {
  T* value = nullptr;
  T* grad = nullptr;
  std::size_t size = 0;
};

// Per-call activations needed by backward().
template <typename T>
struct ForwardTrace {
  std::vector<Tensor<T>> inputs;  // inputs[i] feeds unit i
  Tensor<T> logits;
};

namespace detail {
constexpr char kWeightMagic[4] = {'B', 'S', 'E', 'G'};
constexpr std::uint16_t kWeightVersion = 1;

template <typename U>
void write_pod(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U read_pod(std::istream& is, const char* what) {
  U v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(U));
  if (!is) throw std::invalid_argument(std::string("weights: truncated file reading ") + what);
  return v;
}
}  // namespace detail

template <typename T>
class Network {
 public:
  explicit Network(const NetworkConfig& cfg = {}, std::uint64_t seed = 0)
      : cfg_(cfg), layers_(build_network(cfg)) {
    Rng rng(seed);
    for (const auto& l : layers_) {
      if (l.separable) {
        ConvUnit<T> dw;
        dw.layer = l.index;
        dw.relu_before = l.index > 1;
        dw.conv.kh = dw.conv.kw = l.kernel;
        dw.conv.stride = l.stride;
        dw.conv.dilation = l.dilation;
        dw.conv.groups = l.in_ch;
        dw.conv.weights = init_weights(l.in_ch, 1, l.kernel, rng);
        units_.push_back(std::move(dw));

        ConvUnit<T> pw;
        pw.layer = l.index;
        pw.relu_before = false;  // no nonlinearity between the separable halves
        pw.conv.kh = pw.conv.kw = 1;
        pw.conv.weights = init_weights(l.out_ch, l.in_ch, 1, rng);
        pw.conv.bias.assign(l.out_ch, T(0));
        pw.bias_grad.assign(l.out_ch, T(0));
        units_.push_back(std::move(pw));
      } else {
        ConvUnit<T> u;
        u.layer = l.index;
        u.relu_before = l.index > 1;
        u.conv.kh = u.conv.kw = l.kernel;
        u.conv.stride = l.stride;
        u.conv.dilation = l.dilation;
        u.conv.weights = init_weights(l.out_ch, l.in_ch, l.kernel, rng);
        u.conv.bias.assign(l.out_ch, T(0));
        u.bias_grad.assign(l.out_ch, T(0));
        units_.push_back(std::move(u));
      }
    }
    for (auto& u : units_) u.conv.weights.ensure_grad();
  }

  const NetworkConfig& config() const { return cfg_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  const std::vector<ConvUnit<T>>& units() const { return units_; }

  // Raw 1+N channel output before the sigmoid/softmax head.
  Tensor<T> forward_logits(const Tensor<T>& images, ForwardTrace<T>* trace = nullptr) const {
    require(images.h % 4 == 0 && images.w % 4 == 0,
            "forward: input " + images.shape_str() + " must have spatial dims divisible by 4");
    require(images.c == cfg_.input_channels,
            "forward: input " + images.shape_str() + " does not carry " +
                std::to_string(cfg_.input_channels) + " channel(s)");
    Tensor<T> x = images;
    for (std::size_t i = 0; i < units_.size(); ++i) {
      if (trace) trace->inputs.push_back(x);
      Tensor<T> z = conv2d(x, units_[i].conv);
      const bool last_of_layer =
          i + 1 == units_.size() || units_[i + 1].layer != units_[i].layer;
      const bool relu = last_of_layer && units_[i].layer < 10;
      if (relu)
        for (auto& v : z.data) v = v > T(0) ? v : T(0);
      x = std::move(z);
    }
    if (trace) trace->logits = x;
    return x;
  }

  SegmentationMap<T> forward(const Tensor<T>& images) const {
    Tensor<T> logits = forward_logits(images);
    return split_probabilities(logits);
  }

  SegmentationMap<T> split_probabilities(const Tensor<T>& logits) const {
    return split_logits(logits, cfg_.n_classes);
  }

  // Accumulates parameter gradients for d(loss)/d(logits); returns nothing.
  // Call zero_grads() between steps.
  void backward(const ForwardTrace<T>& trace, const Tensor<T>& grad_logits) {
    require(trace.inputs.size() == units_.size(), "backward: trace does not match network");
    Tensor<T> dz = grad_logits;
    for (std::size_t ri = units_.size(); ri-- > 0;) {
      ConvUnit<T>& u = units_[ri];
      ConvGrads<T> g = conv2d_grad(trace.inputs[ri], u.conv, dz);
      u.conv.weights.ensure_grad();
      for (std::size_t i = 0; i < g.weights.data.size(); ++i)
        u.conv.weights.grad[i] += g.weights.data[i];
      for (std::size_t i = 0; i < g.bias.size(); ++i) u.bias_grad[i] += g.bias[i];
      if (ri == 0) break;
      dz = std::move(g.input);
      if (u.relu_before) {
        // trace input is post-ReLU; zero activations mark clamped sites
        const Tensor<T>& a = trace.inputs[ri];
        for (std::size_t i = 0; i < dz.data.size(); ++i)
          if (a.data[i] <= T(0)) dz.data[i] = T(0);
      }
    }
  }

  void zero_grads() {
    for (auto& u : units_) {
      u.conv.weights.zero_grad();
      std::fill(u.bias_grad.begin(), u.bias_grad.end(), T(0));
    }
  }

  std::vector<ParamBlock<T>> parameter_blocks() {
    std::vector<ParamBlock<T>> blocks;
    for (auto& u : units_) {
      u.conv.weights.ensure_grad();
      blocks.push_back({u.conv.weights.data.data(), u.conv.weights.grad.data(),
                        u.conv.weights.data.size()});
      if (!u.conv.bias.empty())
        blocks.push_back({u.conv.bias.data(), u.bias_grad.data(), u.conv.bias.size()});
    }
    return blocks;
  }

  long long allocated_parameters() const {
    long long total = 0;
    for (const auto& u : units_)
      total += u.conv.weights.size() + static_cast<long long>(u.conv.bias.size());
    return total;
  }

  // ---------------------------------------------------------------------
  // Serialization: magic "BSEG", u16 version, u32 config triple, then per
  // conv unit the u32 weight dims, binary32 weights, u32 bias length and
  // binary32 bias values. Little-endian throughout.
  // ---------------------------------------------------------------------

  void save_weights(std::ostream& os) const {
    os.write(detail::kWeightMagic, 4);
    detail::write_pod<std::uint16_t>(os, detail::kWeightVersion);
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(cfg_.channels));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(cfg_.input_channels));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(cfg_.n_classes));
    for (const auto& u : units_) {
      const Tensor<T>& w = u.conv.weights;
      detail::write_pod<std::uint32_t>(os, 4);
      for (int d : {w.n, w.c, w.h, w.w})
        detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(d));
      for (T v : w.data) detail::write_pod<float>(os, static_cast<float>(v));
      detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(u.conv.bias.size()));
      for (T v : u.conv.bias) detail::write_pod<float>(os, static_cast<float>(v));
    }
    if (!os) throw std::runtime_error("weights: write failed");
  }

  void save_weights(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("weights: cannot open '" + path + "' for writing");
    save_weights(os);
  }

  static Network load_weights(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, detail::kWeightMagic, 4) != 0)
      throw std::invalid_argument("weights: bad magic, not a BSEG weights stream");
    auto version = detail::read_pod<std::uint16_t>(is, "version");
    if (version != detail::kWeightVersion)
      throw std::invalid_argument("weights: unsupported version " + std::to_string(version));
    NetworkConfig cfg;
    cfg.channels = static_cast<int>(detail::read_pod<std::uint32_t>(is, "channels"));
    cfg.input_channels = static_cast<int>(detail::read_pod<std::uint32_t>(is, "input_channels"));
    cfg.n_classes = static_cast<int>(detail::read_pod<std::uint32_t>(is, "n_classes"));
    Network net(cfg, 0);
    for (auto& u : net.units_) {
      auto ndims = detail::read_pod<std::uint32_t>(is, "dim count");
      if (ndims != 4)
        throw std::invalid_argument("weights: expected 4 dims, got " + std::to_string(ndims));
      int dims[4];
      for (int& d : dims) d = static_cast<int>(detail::read_pod<std::uint32_t>(is, "dim"));
      const Tensor<T>& w = u.conv.weights;
      if (dims[0] != w.n || dims[1] != w.c || dims[2] != w.h || dims[3] != w.w)
        throw std::invalid_argument(
            "weights: layer " + std::to_string(u.layer) + " shape (" + std::to_string(dims[0]) +
            "," + std::to_string(dims[1]) + "," + std::to_string(dims[2]) + "," +
            std::to_string(dims[3]) + ") does not match expected " + w.shape_str());
      for (auto& v : u.conv.weights.data) v = static_cast<T>(detail::read_pod<float>(is, "weight"));
      auto blen = detail::read_pod<std::uint32_t>(is, "bias length");
      if (blen != u.conv.bias.size())
        throw std::invalid_argument("weights: layer " + std::to_string(u.layer) +
                                    " bias length " + std::to_string(blen) + " != expected " +
                                    std::to_string(u.conv.bias.size()));
      for (auto& v : u.conv.bias) v = static_cast<T>(detail::read_pod<float>(is, "bias"));
    }
    return net;
  }

  static Network load_weights(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::invalid_argument("weights: cannot open '" + path + "'");
    return load_weights(is);
  }

  // Loads and additionally insists the file matches an expected config.
  static Network load_weights(const std::string& path, const NetworkConfig& expected) {
    Network net = load_weights(path);
    const NetworkConfig& got = net.config();
    if (got.channels != expected.channels || got.n_classes != expected.n_classes ||
        got.input_channels != expected.input_channels)
      throw std::invalid_argument(
          "weights: config mismatch, file has (C=" + std::to_string(got.channels) +
          ",in=" + std::to_string(got.input_channels) + ",N=" + std::to_string(got.n_classes) +
          ") expected (C=" + std::to_string(expected.channels) +
          ",in=" + std::to_string(expected.input_channels) +
          ",N=" + std::to_string(expected.n_classes) + ")");
    return net;
  }

 private:
  static Tensor<T> init_weights(int out_ch, int in_per_group, int k, Rng& rng) {
    Tensor<T> w(out_ch, in_per_group, k, k);
    const double fan_in = static_cast<double>(in_per_group) * k * k;
    const double limit = std::sqrt(6.0 / fan_in);
    for (auto& v : w.data) v = static_cast<T>(rng.uniform(-limit, limit));
    return w;
  }

  NetworkConfig cfg_;
  std::vector<LayerSpec> layers_;
  std::vector<ConvUnit<T>> units_;
};

}  // namespace barseg
