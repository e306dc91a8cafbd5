#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gaiforge/contracts.hpp"
#include "gaiforge/rng.hpp"
#include "gaiforge/tensor.hpp"

namespace gaiforge {

/// Network layout: a stack of 3x3 stride-2 ReLU conv stages, an optional ReLU
/// dense hidden layer, and a K-way linear output. conv_channels may be empty
/// and hidden may be 0, which yields a purely linear model on the flattened
/// input (useful for closed-form checks).
struct ArchSpec {
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t depth = 3;
  std::vector<std::size_t> conv_channels = {8, 16};
  std::size_t kernel = 3;
  std::size_t stride = 2;
  std::size_t hidden = 64;
  std::size_t classes = 2;

  void validate() const {
    require(height > 0 && width > 0 && depth > 0 && classes > 0,
            "ArchSpec: extents must be positive");
    require(kernel >= 1 && stride >= 1, "ArchSpec: kernel and stride must be >= 1");
    for (std::size_t c : conv_channels)
      require(c > 0, "ArchSpec: conv channel counts must be positive");
  }

  static std::size_t conv_out(std::size_t in, std::size_t kernel, std::size_t stride) {
    std::size_t pad = kernel / 2;
    require(in + 2 * pad >= kernel, "ArchSpec: input too small for kernel");
    return (in + 2 * pad - kernel) / stride + 1;
  }

  /// Flattened feature count after the conv stack.
  std::size_t flat_size() const {
    std::size_t h = height, w = width, c = depth;
    for (std::size_t oc : conv_channels) {
      h = conv_out(h, kernel, stride);
      w = conv_out(w, kernel, stride);
      c = oc;
    }
    return h * w * c;
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"height", height},   {"width", width},
                          {"depth", depth},     {"conv_channels", conv_channels},
                          {"kernel", kernel},   {"stride", stride},
                          {"hidden", hidden},   {"classes", classes}};
  }

  static ArchSpec from_json(const nlohmann::json& j) {
    ArchSpec a;
    a.height = j.at("height").get<std::size_t>();
    a.width = j.at("width").get<std::size_t>();
    a.depth = j.at("depth").get<std::size_t>();
    a.conv_channels = j.at("conv_channels").get<std::vector<std::size_t>>();
    a.kernel = j.at("kernel").get<std::size_t>();
    a.stride = j.at("stride").get<std::size_t>();
    a.hidden = j.at("hidden").get<std::size_t>();
    a.classes = j.at("classes").get<std::size_t>();
    a.validate();
    return a;
  }
};

/// Wraps a single [H,W,D] image as a [1,H,W,D] batch.
inline Tensor batch_of_one(const Tensor& x, const ArchSpec& arch) {
  require(x.shape() == std::vector<std::size_t>{arch.height, arch.width, arch.depth},
          "batch_of_one: image shape " + Tensor::shape_string(x.shape()) +
              " does not match model input");
  return Tensor({1, arch.height, arch.width, arch.depth},
                std::vector<double>(x.data(), x.data() + x.size()));
}

/// Scalar loss over a single input image, for input-side gradients.
struct InputLossSpec {
  enum class Kind { CrossEntropyToTarget, LogitValue, SoftmaxProb };
  Kind kind = Kind::CrossEntropyToTarget;
  int target_class = 0;

  static InputLossSpec cross_entropy_to(int c) {
    return {Kind::CrossEntropyToTarget, c};
  }
  static InputLossSpec logit_of(int c) { return {Kind::LogitValue, c}; }
  static InputLossSpec softmax_prob_of(int c) { return {Kind::SoftmaxProb, c}; }
};

namespace detail {

struct ConvLayer {
  std::size_t in_ch = 0, out_ch = 0, kernel = 3, stride = 2;
  Tensor weights;  // [k, k, in_ch, out_ch]
  Tensor bias;     // [out_ch]
};

struct DenseLayer {
  std::size_t in = 0, out = 0;
  Tensor weights;  // [in, out]
  Tensor bias;     // [out]
};

inline Tensor conv_forward(const Tensor& x, const ConvLayer& layer) {
  const std::size_t batch = x.extent(0), h = x.extent(1), w = x.extent(2),
                    cin = x.extent(3);
  const std::size_t k = layer.kernel, s = layer.stride, pad = k / 2,
                    cout = layer.out_ch;
  const std::size_t ho = ArchSpec::conv_out(h, k, s),
                    wo = ArchSpec::conv_out(w, k, s);
  Tensor out({batch, ho, wo, cout});
  const double* wd = layer.weights.data();
  const double* xd = x.data();
  double* od = out.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double* acc = od + ((b * ho + oy) * wo + ox) * cout;
        for (std::size_t oc = 0; oc < cout; ++oc) acc[oc] = layer.bias[oc];
        for (std::size_t ky = 0; ky < k; ++ky) {
          std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ky) -
                              static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s + kx) -
                                static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            const double* xrow = xd + ((b * h + iy) * w + ix) * cin;
            const double* wrow = wd + (ky * k + kx) * cin * cout;
            for (std::size_t ic = 0; ic < cin; ++ic) {
              double xv = xrow[ic];
              const double* wr = wrow + ic * cout;
              for (std::size_t oc = 0; oc < cout; ++oc) acc[oc] += xv * wr[oc];
            }
          }
        }
      }
    }
  }
  return out;
}

/// Accumulates dweights/dbias and returns dinput.
inline Tensor conv_backward(const Tensor& x, const ConvLayer& layer,
                            const Tensor& dout, Tensor* dweights, Tensor* dbias) {
  const std::size_t batch = x.extent(0), h = x.extent(1), w = x.extent(2),
                    cin = x.extent(3);
  const std::size_t k = layer.kernel, s = layer.stride, pad = k / 2,
                    cout = layer.out_ch;
  const std::size_t ho = dout.extent(1), wo = dout.extent(2);
  Tensor dx({batch, h, w, cin});
  const double* wd = layer.weights.data();
  const double* xd = x.data();
  const double* gd = dout.data();
  double* dxd = dx.data();
  double* dwd = dweights->data();
  double* dbd = dbias->data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const double* grow = gd + ((b * ho + oy) * wo + ox) * cout;
        for (std::size_t oc = 0; oc < cout; ++oc) dbd[oc] += grow[oc];
        for (std::size_t ky = 0; ky < k; ++ky) {
          std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ky) -
                              static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s + kx) -
                                static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            const double* xrow = xd + ((b * h + iy) * w + ix) * cin;
            double* dxrow = dxd + ((b * h + iy) * w + ix) * cin;
            std::size_t wbase = (ky * k + kx) * cin * cout;
            for (std::size_t ic = 0; ic < cin; ++ic) {
              const double* wr = wd + wbase + ic * cout;
              double* dwr = dwd + wbase + ic * cout;
              double xv = xrow[ic];
              double accdx = 0.0;
              for (std::size_t oc = 0; oc < cout; ++oc) {
                dwr[oc] += xv * grow[oc];
                accdx += wr[oc] * grow[oc];
              }
              dxrow[ic] += accdx;
            }
          }
        }
      }
    }
  }
  return dx;
}

inline Tensor dense_forward(const Tensor& x, const DenseLayer& layer) {
  const std::size_t batch = x.extent(0), in = layer.in, out = layer.out;
  Tensor y({batch, out});
  for (std::size_t b = 0; b < batch; ++b) {
    double* acc = y.data() + b * out;
    for (std::size_t o = 0; o < out; ++o) acc[o] = layer.bias[o];
    const double* xrow = x.data() + b * in;
    for (std::size_t i = 0; i < in; ++i) {
      double xv = xrow[i];
      const double* wr = layer.weights.data() + i * out;
      for (std::size_t o = 0; o < out; ++o) acc[o] += xv * wr[o];
    }
  }
  return y;
}

inline Tensor dense_backward(const Tensor& x, const DenseLayer& layer,
                             const Tensor& dout, Tensor* dweights, Tensor* dbias) {
  const std::size_t batch = x.extent(0), in = layer.in, out = layer.out;
  Tensor dx({batch, in});
  for (std::size_t b = 0; b < batch; ++b) {
    const double* grow = dout.data() + b * out;
    const double* xrow = x.data() + b * in;
    double* dxrow = dx.data() + b * in;
    for (std::size_t o = 0; o < out; ++o) (*dbias)[o] += grow[o];
    for (std::size_t i = 0; i < in; ++i) {
      double* dwr = dweights->data() + i * out;
      const double* wr = layer.weights.data() + i * out;
      double xv = xrow[i];
      double accdx = 0.0;
      for (std::size_t o = 0; o < out; ++o) {
        dwr[o] += xv * grow[o];
        accdx += wr[o] * grow[o];
      }
      dxrow[i] = accdx;
    }
  }
  return dx;
}

// ReLU subgradient at 0 is 0.
inline Tensor relu(const Tensor& p) {
  Tensor out(p.shape());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] > 0.0 ? p[i] : 0.0;
  return out;
}

inline Tensor relu_backward(const Tensor& preact, const Tensor& dout) {
  Tensor dp(preact.shape());
  for (std::size_t i = 0; i < preact.size(); ++i)
    dp[i] = preact[i] > 0.0 ? dout[i] : 0.0;
  return dp;
}

}  // namespace detail

/// Row-wise stable softmax of a [B,K] logit tensor.
inline Tensor softmax_rows(const Tensor& logits) {
  const std::size_t batch = logits.extent(0), k = logits.extent(1);
  Tensor out(logits.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    const double* z = logits.data() + b * k;
    double* p = out.data() + b * k;
    double m = z[0];
    for (std::size_t i = 1; i < k; ++i) m = std::max(m, z[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      p[i] = std::exp(z[i] - m);
      sum += p[i];
    }
    for (std::size_t i = 0; i < k; ++i) p[i] /= sum;
  }
  return out;
}

/// Mean over the batch of -log softmax(logits)[label], via log-sum-exp.
inline double cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  const std::size_t batch = logits.extent(0), k = logits.extent(1);
  require(labels.size() == batch, "cross_entropy: label count != batch size");
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    int y = labels[b];
    require(y >= 0 && static_cast<std::size_t>(y) < k,
            "cross_entropy: label " + std::to_string(y) + " outside [0," +
                std::to_string(k) + ")");
    const double* z = logits.data() + b * k;
    double m = z[0];
    for (std::size_t i = 1; i < k; ++i) m = std::max(m, z[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += std::exp(z[i] - m);
    total += m + std::log(sum) - z[y];
  }
  return total / static_cast<double>(batch);
}

/// Mean soft-target cross entropy; each target row must be a distribution.
inline double cross_entropy_soft(const Tensor& logits, const Tensor& targets) {
  check_same_shape(logits, targets, "cross_entropy_soft");
  const std::size_t batch = logits.extent(0), k = logits.extent(1);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* z = logits.data() + b * k;
    const double* y = targets.data() + b * k;
    double m = z[0];
    for (std::size_t i = 1; i < k; ++i) m = std::max(m, z[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += std::exp(z[i] - m);
    double lse = m + std::log(sum);
    double dot = 0.0;
    for (std::size_t i = 0; i < k; ++i) dot += y[i] * z[i];
    total += lse - dot;
  }
  return total / static_cast<double>(batch);
}

struct BatchGradients {
  std::vector<Tensor> params;  // aligned with Classifier::parameters() order
  double loss = 0.0;
  Tensor logits;
};

/// Multi-class differentiable classifier with analytic gradients with respect
/// to parameters and input. Forward and backward are pure; the same type
/// serves as teacher and student.
class Classifier {
 public:
  Classifier() = default;

  /// Fan-in-scaled uniform init (weights U(-sqrt(3/fan_in), +sqrt(3/fan_in)),
  /// biases zero), drawn from the caller-owned stream in fixed layer order.
  static Classifier init(const ArchSpec& arch, SeededRng& rng) {
    arch.validate();
    Classifier c;
    c.arch_ = arch;
    std::size_t cin = arch.depth;
    for (std::size_t cout : arch.conv_channels) {
      detail::ConvLayer layer;
      layer.in_ch = cin;
      layer.out_ch = cout;
      layer.kernel = arch.kernel;
      layer.stride = arch.stride;
      layer.weights = Tensor({arch.kernel, arch.kernel, cin, cout});
      layer.bias = Tensor({cout});
      fill_fan_in(layer.weights, arch.kernel * arch.kernel * cin, rng);
      c.convs_.push_back(std::move(layer));
      cin = cout;
    }
    std::size_t flat = arch.flat_size();
    if (arch.hidden > 0) {
      c.hidden_.in = flat;
      c.hidden_.out = arch.hidden;
      c.hidden_.weights = Tensor({flat, arch.hidden});
      c.hidden_.bias = Tensor({arch.hidden});
      fill_fan_in(c.hidden_.weights, flat, rng);
      flat = arch.hidden;
    }
    c.output_.in = flat;
    c.output_.out = arch.classes;
    c.output_.weights = Tensor({flat, arch.classes});
    c.output_.bias = Tensor({arch.classes});
    fill_fan_in(c.output_.weights, flat, rng);
    return c;
  }

  const ArchSpec& arch() const { return arch_; }

  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for (auto& l : convs_) {
      out.push_back(&l.weights);
      out.push_back(&l.bias);
    }
    if (arch_.hidden > 0) {
      out.push_back(&hidden_.weights);
      out.push_back(&hidden_.bias);
    }
    out.push_back(&output_.weights);
    out.push_back(&output_.bias);
    return out;
  }

  std::vector<const Tensor*> parameters() const {
    std::vector<const Tensor*> out;
    for (const auto& l : convs_) {
      out.push_back(&l.weights);
      out.push_back(&l.bias);
    }
    if (arch_.hidden > 0) {
      out.push_back(&hidden_.weights);
      out.push_back(&hidden_.bias);
    }
    out.push_back(&output_.weights);
    out.push_back(&output_.bias);
    return out;
  }

  /// FNV-1a over all parameter bytes; used by teacher-immutability checks.
  std::uint64_t param_checksum() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const Tensor* t : parameters()) {
      for (std::size_t i = 0; i < t->size(); ++i) {
        std::uint64_t bits = detail::f64_bits((*t)[i]);
        for (int k = 0; k < 8; ++k) {
          h ^= (bits >> (8 * k)) & 0xFF;
          h *= 0x100000001B3ULL;
        }
      }
    }
    return h;
  }

  /// Releases intermediate activations; [B,K] logits only.
  Tensor forward(const Tensor& batch) const {
    Trace t = run_forward(batch);
    return std::move(t.logits);
  }

  /// Softmax confidences [B,K] for a batch.
  Tensor predict_proba(const Tensor& batch) const { return softmax_rows(forward(batch)); }

  /// Mean-cross-entropy gradients for every parameter tensor.
  BatchGradients param_gradients(const Tensor& batch, const std::vector<int>& labels) const {
    Trace t = run_forward(batch);
    const std::size_t b = batch.extent(0), k = arch_.classes;
    require(labels.size() == b, "param_gradients: label count != batch size");
    Tensor probs = softmax_rows(t.logits);
    double loss = cross_entropy(t.logits, labels);
    Tensor dlogits(probs.shape());
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < k; ++j)
        dlogits[i * k + j] =
            (probs[i * k + j] - (static_cast<std::size_t>(labels[i]) == j ? 1.0 : 0.0)) /
            static_cast<double>(b);
    BatchGradients out;
    out.loss = loss;
    run_backward(t, dlogits, &out.params, nullptr);
    out.logits = std::move(t.logits);
    return out;
  }

  /// Same with per-sample target distributions [B,K] (mixup training).
  BatchGradients param_gradients_soft(const Tensor& batch, const Tensor& targets) const {
    Trace t = run_forward(batch);
    const std::size_t b = batch.extent(0), k = arch_.classes;
    Tensor probs = softmax_rows(t.logits);
    double loss = cross_entropy_soft(t.logits, targets);
    Tensor dlogits(probs.shape());
    for (std::size_t i = 0; i < b * k; ++i)
      dlogits[i] = (probs[i] - targets[i]) / static_cast<double>(b);
    BatchGradients out;
    out.loss = loss;
    run_backward(t, dlogits, &out.params, nullptr);
    out.logits = std::move(t.logits);
    return out;
  }

  /// Analytic d(loss)/d(x) for a single [H,W,D] input.
  Tensor input_gradient(const InputLossSpec& spec, const Tensor& x) const {
    Tensor batch = to_batch(x);
    Trace t = run_forward(batch);
    const std::size_t k = arch_.classes;
    int c = spec.target_class;
    require(c >= 0 && static_cast<std::size_t>(c) < k,
            "input_gradient: target class " + std::to_string(c) + " outside [0," +
                std::to_string(k) + ")");
    Tensor dlogits({1, k});
    switch (spec.kind) {
      case InputLossSpec::Kind::CrossEntropyToTarget: {
        Tensor probs = softmax_rows(t.logits);
        for (std::size_t j = 0; j < k; ++j)
          dlogits[j] = probs[j] - (static_cast<std::size_t>(c) == j ? 1.0 : 0.0);
        break;
      }
      case InputLossSpec::Kind::LogitValue:
        dlogits[static_cast<std::size_t>(c)] = 1.0;
        break;
      case InputLossSpec::Kind::SoftmaxProb: {
        Tensor probs = softmax_rows(t.logits);
        double pc = probs[static_cast<std::size_t>(c)];
        for (std::size_t j = 0; j < k; ++j)
          dlogits[j] = pc * ((static_cast<std::size_t>(c) == j ? 1.0 : 0.0) - probs[j]);
        break;
      }
    }
    Tensor dinput;
    run_backward(t, dlogits, nullptr, &dinput);
    return Tensor({arch_.height, arch_.width, arch_.depth},
                  std::vector<double>(dinput.data(), dinput.data() + dinput.size()));
  }

  /// Scalar loss value matching input_gradient's loss definitions.
  double input_loss(const InputLossSpec& spec, const Tensor& x) const {
    Tensor logits = forward(to_batch(x));
    int c = spec.target_class;
    switch (spec.kind) {
      case InputLossSpec::Kind::CrossEntropyToTarget:
        return cross_entropy(logits, {c});
      case InputLossSpec::Kind::LogitValue:
        return logits[static_cast<std::size_t>(c)];
      case InputLossSpec::Kind::SoftmaxProb:
        return softmax_rows(logits)[static_cast<std::size_t>(c)];
    }
    return 0.0;
  }

  /// Minimum |preactivation| reached anywhere on the forward pass; the
  /// finite-difference checker uses it to skip kink-adjacent coordinates.
  double min_abs_preactivation(const Tensor& batch) const {
    Trace t = run_forward(batch);
    double m = std::numeric_limits<double>::infinity();
    for (const Tensor& p : t.conv_preacts)
      for (std::size_t i = 0; i < p.size(); ++i) m = std::min(m, std::abs(p[i]));
    if (arch_.hidden > 0)
      for (std::size_t i = 0; i < t.hidden_preact.size(); ++i)
        m = std::min(m, std::abs(t.hidden_preact[i]));
    return m;
  }

  void save(std::ostream& os) const {
    std::string header = arch_.to_json().dump();
    os.write("GAIC", 4);
    detail::put_u64(os, header.size());
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const Tensor* t : parameters()) write_tensor(os, *t);
  }

  void save_file(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), "Classifier::save_file: cannot open " + path);
    save(os);
    require(os.good(), "Classifier::save_file: write failed for " + path);
  }

  static Classifier load(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    require(is.good() && std::memcmp(magic, "GAIC", 4) == 0,
            "Classifier::load: bad magic (not a checkpoint)");
    std::uint64_t len = detail::get_u64(is);
    std::string header(len, '\0');
    is.read(header.data(), static_cast<std::streamsize>(len));
    require(is.good(), "Classifier::load: truncated header");
    ArchSpec arch = ArchSpec::from_json(nlohmann::json::parse(header));
    SeededRng dummy(0);
    Classifier c = Classifier::init(arch, dummy);
    for (Tensor* t : c.parameters()) {
      Tensor loaded = read_tensor(is);
      require(loaded.same_shape(*t), "Classifier::load: parameter shape mismatch");
      *t = std::move(loaded);
    }
    return c;
  }

  static Classifier load_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), "Classifier::load_file: cannot open " + path);
    return load(is);
  }

 private:
  struct Trace {
    std::vector<Tensor> conv_inputs;   // input to each conv stage
    std::vector<Tensor> conv_preacts;  // pre-ReLU conv outputs
    Tensor flat;                       // [B, F] features entering dense layers
    Tensor hidden_preact;              // [B, hidden]
    Tensor hidden_act;
    Tensor logits;                     // [B, K]
  };

  static void fill_fan_in(Tensor& w, std::size_t fan_in, SeededRng& rng) {
    double s = std::sqrt(3.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-s, s);
  }

  Tensor to_batch(const Tensor& x) const {
    require(x.shape() == std::vector<std::size_t>{arch_.height, arch_.width, arch_.depth},
            "Classifier: input shape " + Tensor::shape_string(x.shape()) +
                " does not match model input " +
                Tensor::shape_string({arch_.height, arch_.width, arch_.depth}));
    return Tensor({1, arch_.height, arch_.width, arch_.depth},
                  std::vector<double>(x.data(), x.data() + x.size()));
  }

  Trace run_forward(const Tensor& batch) const {
    require(batch.rank() == 4 && batch.extent(1) == arch_.height &&
                batch.extent(2) == arch_.width && batch.extent(3) == arch_.depth,
            "Classifier::forward: batch shape " + Tensor::shape_string(batch.shape()) +
                " does not match model input");
    Trace t;
    Tensor x = batch;
    for (const auto& layer : convs_) {
      t.conv_inputs.push_back(x);
      Tensor pre = detail::conv_forward(x, layer);
      x = detail::relu(pre);
      t.conv_preacts.push_back(std::move(pre));
    }
    const std::size_t b = batch.extent(0);
    t.flat = Tensor({b, x.size() / b},
                    std::vector<double>(x.data(), x.data() + x.size()));
    if (arch_.hidden > 0) {
      t.hidden_preact = detail::dense_forward(t.flat, hidden_);
      t.hidden_act = detail::relu(t.hidden_preact);
      t.logits = detail::dense_forward(t.hidden_act, output_);
    } else {
      t.logits = detail::dense_forward(t.flat, output_);
    }
    return t;
  }

  void run_backward(const Trace& t, const Tensor& dlogits,
                    std::vector<Tensor>* param_grads, Tensor* input_grad) const {
    std::vector<Tensor> grads;
    for (const Tensor* p : parameters()) grads.emplace_back(p->shape());
    std::size_t gi = grads.size();
    Tensor dflat;
    if (arch_.hidden > 0) {
      Tensor dhidden_act =
          detail::dense_backward(t.hidden_act, output_, dlogits, &grads[gi - 2], &grads[gi - 1]);
      Tensor dhidden_pre = detail::relu_backward(t.hidden_preact, dhidden_act);
      dflat = detail::dense_backward(t.flat, hidden_, dhidden_pre, &grads[gi - 4], &grads[gi - 3]);
      gi -= 4;
    } else {
      dflat = detail::dense_backward(t.flat, output_, dlogits, &grads[gi - 2], &grads[gi - 1]);
      gi -= 2;
    }
    Tensor dx;
    if (!convs_.empty()) {
      const Tensor& last_pre = t.conv_preacts.back();
      Tensor reshaped(last_pre.shape(),
                      std::vector<double>(dflat.data(), dflat.data() + dflat.size()));
      dx = detail::relu_backward(last_pre, reshaped);
      for (std::size_t li = convs_.size(); li-- > 0;) {
        Tensor din = detail::conv_backward(t.conv_inputs[li], convs_[li], dx,
                                           &grads[2 * li], &grads[2 * li + 1]);
        if (li > 0)
          dx = detail::relu_backward(t.conv_preacts[li - 1], din);
        else
          dx = std::move(din);
      }
    } else {
      dx = dflat;
    }
    if (param_grads) *param_grads = std::move(grads);
    if (input_grad) *input_grad = std::move(dx);
  }

  ArchSpec arch_;
  std::vector<detail::ConvLayer> convs_;
  detail::DenseLayer hidden_;
  detail::DenseLayer output_;
};

}  // namespace gaiforge
