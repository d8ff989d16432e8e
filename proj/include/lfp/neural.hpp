#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lfp/dataset.hpp"
#include "lfp/error.hpp"
#include "lfp/io.hpp"
#include "lfp/predictors.hpp"
#include "lfp/render.hpp"

namespace lfp::nn {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Conv-recurrent next-frame predictor:
//
//   frame (3 x H x W, [0,1])
//   -> enc1: conv 3x3 stride 2 pad 1, 3 -> 8, ReLU
//   -> enc2: conv 3x3 stride 2 pad 1, 8 -> 16, ReLU, flatten
//   -> rnn:  h_t = tanh(Wx f_t + Wh h_{t-1} + b), 256 units, h_0 = 0
//   -> proj: elu(Wo h_t + bo), back to 16 x H/4 x W/4
//   -> dec1: transposed conv 4x4 stride 2 pad 1, 16 -> 8, ELU
//   -> dec2: transposed conv 4x4 stride 2 pad 1, 8 -> 3, sigmoid
//
// Activations are stored channel-fastest: element (c, y, x) of a C-channel
// map lives at c + C * (y * width + x). For the input this coincides with
// the byte order of an RGB8 frame.
struct Architecture {
  int width = 60;
  int height = 36;
  int enc1_channels = 8;
  int enc2_channels = 16;
  int hidden = 256;

  static constexpr int kEncKernel = 3;
  static constexpr int kDecKernel = 4;

  int w1() const { return width / 2; }
  int h1() const { return height / 2; }
  int w2() const { return width / 4; }
  int h2() const { return height / 4; }
  int input_size() const { return 3 * width * height; }
  int feature_size() const { return enc2_channels * w2() * h2(); }

  void validate() const {
    if (width <= 0 || height <= 0 || width % 4 != 0 || height % 4 != 0)
      throw ConfigError("network input size must be positive multiples of 4");
    if (enc1_channels <= 0 || enc2_channels <= 0 || hidden <= 0)
      throw ConfigError("network layer sizes must be positive");
  }

  std::string descriptor() const {
    return "lfp-convrnn-v1 in=3x" + std::to_string(height) + "x" + std::to_string(width) +
           " enc=" + std::to_string(enc1_channels) + "," + std::to_string(enc2_channels) +
           " k=3s2p1 rnn=tanh" + std::to_string(hidden) + " proj=elu dec=k4s2p1,elu out=sigmoid";
  }
  std::uint64_t hash() const { return fnv1a64(descriptor()); }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

// Offsets of every tensor inside the flat parameter vector. Matrices are
// column-major. Convolution weights are (out_channels x in_channels*k*k) with
// column c*k*k + ky*k + kx; transposed-convolution weights are
// (in_channels x out_channels*k*k) with column c_out*k*k + ky*k + kx.
struct Layout {
  struct Block {
    Eigen::Index offset = 0, rows = 0, cols = 0;
    Eigen::Index size() const { return rows * cols; }
  };

  Block enc1_w, enc1_b, enc2_w, enc2_b;
  Block rnn_wx, rnn_wh, rnn_b;
  Block proj_w, proj_b;
  Block dec1_w, dec1_b, dec2_w, dec2_b;
  Eigen::Index total = 0;

  explicit Layout(const Architecture& a) {
    constexpr int ke = Architecture::kEncKernel * Architecture::kEncKernel;
    constexpr int kd = Architecture::kDecKernel * Architecture::kDecKernel;
    auto add = [this](Eigen::Index rows, Eigen::Index cols) {
      Block b{total, rows, cols};
      total += rows * cols;
      return b;
    };
    enc1_w = add(a.enc1_channels, 3 * ke);
    enc1_b = add(a.enc1_channels, 1);
    enc2_w = add(a.enc2_channels, a.enc1_channels * ke);
    enc2_b = add(a.enc2_channels, 1);
    rnn_wx = add(a.hidden, a.feature_size());
    rnn_wh = add(a.hidden, a.hidden);
    rnn_b = add(a.hidden, 1);
    proj_w = add(a.feature_size(), a.hidden);
    proj_b = add(a.feature_size(), 1);
    dec1_w = add(a.enc2_channels, a.enc1_channels * kd);
    dec1_b = add(a.enc1_channels, 1);
    dec2_w = add(a.enc1_channels, 3 * kd);
    dec2_b = add(3, 1);
  }

  template <typename Scalar>
  static Eigen::Map<Mat<Scalar>> map(Vec<Scalar>& v, const Block& b) {
    return {v.data() + b.offset, b.rows, b.cols};
  }
  template <typename Scalar>
  static Eigen::Map<const Mat<Scalar>> map(const Vec<Scalar>& v, const Block& b) {
    return {v.data() + b.offset, b.rows, b.cols};
  }
};

// Index table for a k x k, stride s, pad p convolution over a C x H x W map:
// entry (r, q) is the input element feeding patch row r = c*k*k + ky*k + kx
// of output pixel q, or -1 inside the padding. The same table drives the
// transposed convolution whose output is that C x H x W map.
class PatchTable {
public:
  PatchTable(int channels, int height, int width, int k, int stride, int pad)
      : in_size_(channels * height * width), rows_(channels * k * k),
        out_h_((height + 2 * pad - k) / stride + 1), out_w_((width + 2 * pad - k) / stride + 1) {
    index_.resize(static_cast<std::size_t>(rows_) * out_h_ * out_w_);
    std::size_t i = 0;
    for (int oy = 0; oy < out_h_; ++oy)
      for (int ox = 0; ox < out_w_; ++ox)
        for (int c = 0; c < channels; ++c)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int y = oy * stride - pad + ky;
              const int x = ox * stride - pad + kx;
              const bool inside = y >= 0 && y < height && x >= 0 && x < width;
              index_[i++] = inside ? c + channels * (y * width + x) : -1;
            }
  }

  int rows() const { return rows_; }
  int positions() const { return out_h_ * out_w_; }
  int in_size() const { return in_size_; }

  // in: (C, B*H*W) channel-fastest; cols: (rows, B*positions).
  template <typename Scalar>
  void gather(const Mat<Scalar>& in, Mat<Scalar>& cols, int batch) const {
    cols.resize(rows_, static_cast<Eigen::Index>(batch) * positions());
    const std::size_t per = index_.size();
    for (int b = 0; b < batch; ++b) {
      const Scalar* src = in.data() + static_cast<std::size_t>(b) * in_size_;
      Scalar* dst = cols.data() + static_cast<std::size_t>(b) * per;
      for (std::size_t i = 0; i < per; ++i)
        dst[i] = index_[i] >= 0 ? src[index_[i]] : Scalar(0);
    }
  }

  // Adjoint of gather: out += scatter(cols). `out` must already be sized.
  template <typename Scalar>
  void scatter_add(const Mat<Scalar>& cols, Mat<Scalar>& out, int batch) const {
    const std::size_t per = index_.size();
    for (int b = 0; b < batch; ++b) {
      const Scalar* src = cols.data() + static_cast<std::size_t>(b) * per;
      Scalar* dst = out.data() + static_cast<std::size_t>(b) * in_size_;
      for (std::size_t i = 0; i < per; ++i)
        if (index_[i] >= 0)
          dst[index_[i]] += src[i];
    }
  }

private:
  int in_size_;
  int rows_;
  int out_h_;
  int out_w_;
  std::vector<int> index_;
};

// One training/validation sequence: frames as [0,1] vectors in channel-fastest
// order.
template <typename Scalar>
using Sequence = std::vector<Vec<Scalar>>;

template <typename Scalar>
Vec<Scalar> frame_to_input(const Frame& f) {
  Vec<Scalar> v(static_cast<Eigen::Index>(f.pixels().size()));
  for (std::size_t i = 0; i < f.pixels().size(); ++i)
    v[static_cast<Eigen::Index>(i)] = static_cast<Scalar>(f.pixels()[i] / 255.0);
  return v;
}

template <typename Scalar>
Frame output_to_frame(const Scalar* values, int width, int height) {
  Frame f(width, height);
  auto px = f.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    const double v = std::clamp(static_cast<double>(values[i]), 0.0, 1.0);
    px[i] = static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
  }
  return f;
}

// Scalar is float for training and inference, double for finite-difference
// checks of the same code.
template <typename Scalar>
class BasicConvRecurrentNet {
public:
  using MatrixT = Mat<Scalar>;
  using VectorT = Vec<Scalar>;

  explicit BasicConvRecurrentNet(Architecture arch = {})
      : arch_(arch), layout_((arch.validate(), arch)), params_(VectorT::Zero(layout_.total)),
        enc1_(3, arch.height, arch.width, Architecture::kEncKernel, 2, 1),
        enc2_(arch.enc1_channels, arch.h1(), arch.w1(), Architecture::kEncKernel, 2, 1),
        dec1_(arch.enc1_channels, arch.h1(), arch.w1(), Architecture::kDecKernel, 2, 1),
        dec2_(3, arch.height, arch.width, Architecture::kDecKernel, 2, 1) {}

  const Architecture& architecture() const { return arch_; }
  const Layout& layout() const { return layout_; }
  const VectorT& params() const { return params_; }
  VectorT& params() { return params_; }
  Eigen::Index parameter_count() const { return layout_.total; }

  // Uniform fan-in/fan-out initialisation; zero biases.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    auto fill = [&](const Layout::Block& b, double limit) {
      for (Eigen::Index i = 0; i < b.size(); ++i) {
        const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
        params_[b.offset + i] = static_cast<Scalar>((2.0 * u - 1.0) * limit);
      }
    };
    constexpr double ke = Architecture::kEncKernel * Architecture::kEncKernel;
    constexpr double kd = Architecture::kDecKernel * Architecture::kDecKernel;
    params_.setZero();
    fill(layout_.enc1_w, std::sqrt(6.0 / (3 * ke)));
    fill(layout_.enc2_w, std::sqrt(6.0 / (arch_.enc1_channels * ke)));
    fill(layout_.rnn_wx, std::sqrt(6.0 / (arch_.feature_size() + arch_.hidden)));
    fill(layout_.rnn_wh, std::sqrt(6.0 / (2.0 * arch_.hidden)) * 0.5);
    fill(layout_.proj_w, std::sqrt(6.0 / arch_.hidden));
    fill(layout_.dec1_w, std::sqrt(6.0 / (arch_.enc2_channels * kd / 4)));
    fill(layout_.dec2_w, std::sqrt(6.0 / (arch_.enc1_channels * kd / 4 + 3 * kd / 4)));
  }

  bool all_finite() const { return params_.allFinite(); }

  // Per-timestep activations kept for backpropagation.
  struct StepCache {
    MatrixT col1, a1_pre, a1, col2, a2_pre, a2, h_prev, h, z_pre, z, y1_pre, y1, out;
    MatrixT scratch_cols, scratch_pre;
  };

  // Reusable buffers; one per thread of execution.
  struct Workspace {
    std::vector<StepCache> steps;
    MatrixT x, h, dh, d_out, d_out_pre, d_cols, d_y1, d_z, d_h_pre, d_a2, d_col2, d_a1;
  };

  // Decoder activation.
  static MatrixT elu(const MatrixT& x) {
    return x.unaryExpr([](Scalar v) { return v > Scalar(0) ? v : std::expm1(v); });
  }
  // Its derivative, from input and output.
  static MatrixT elu_slope(const MatrixT& x, const MatrixT& y) {
    return x.binaryExpr(y, [](Scalar v, Scalar e) { return v > Scalar(0) ? Scalar(1) : e + Scalar(1); });
  }

  // Runs one timestep for a batch. `x` is (3, B*H*W); `h` carries the hidden
  // state (hidden x B) and is updated in place.
  void forward_step(const MatrixT& x, MatrixT& h, int batch, StepCache& c) const {
    const auto& L = layout_;
    const int p1 = arch_.w1() * arch_.h1();
    const int p2 = arch_.w2() * arch_.h2();

    enc1_.gather(x, c.col1, batch);
    c.a1_pre.noalias() = Layout::map<Scalar>(params_, L.enc1_w) * c.col1;
    c.a1_pre.colwise() += Layout::map<Scalar>(params_, L.enc1_b).col(0);
    c.a1 = c.a1_pre.cwiseMax(Scalar(0));

    enc2_.gather(c.a1, c.col2, batch);
    c.a2_pre.noalias() = Layout::map<Scalar>(params_, L.enc2_w) * c.col2;
    c.a2_pre.colwise() += Layout::map<Scalar>(params_, L.enc2_b).col(0);
    c.a2 = c.a2_pre.cwiseMax(Scalar(0));
    const Eigen::Map<const MatrixT> features(c.a2.data(), arch_.feature_size(), batch);

    c.h_prev = h;
    MatrixT& pre = c.scratch_pre;
    pre.noalias() = Layout::map<Scalar>(params_, L.rnn_wx) * features;
    pre.noalias() += Layout::map<Scalar>(params_, L.rnn_wh) * h;
    pre.colwise() += Layout::map<Scalar>(params_, L.rnn_b).col(0);
    c.h = pre.array().tanh().matrix();
    h = c.h;

    c.z_pre.noalias() = Layout::map<Scalar>(params_, L.proj_w) * c.h;
    c.z_pre.colwise() += Layout::map<Scalar>(params_, L.proj_b).col(0);
    c.z = elu(c.z_pre);
    const Eigen::Map<const MatrixT> zmap(c.z.data(), arch_.enc2_channels, static_cast<Eigen::Index>(batch) * p2);

    MatrixT& cols = c.scratch_cols;
    cols.noalias() = Layout::map<Scalar>(params_, L.dec1_w).transpose() * zmap;
    c.y1_pre.setZero(arch_.enc1_channels, static_cast<Eigen::Index>(batch) * p1);
    dec1_.scatter_add(cols, c.y1_pre, batch);
    c.y1_pre.colwise() += Layout::map<Scalar>(params_, L.dec1_b).col(0);
    c.y1 = elu(c.y1_pre);

    cols.noalias() = Layout::map<Scalar>(params_, L.dec2_w).transpose() * c.y1;
    c.out.setZero(3, static_cast<Eigen::Index>(batch) * arch_.width * arch_.height);
    dec2_.scatter_add(cols, c.out, batch);
    c.out.colwise() += Layout::map<Scalar>(params_, L.dec2_b).col(0);
    c.out = (Scalar(1) / (Scalar(1) + (-c.out.array()).exp())).matrix();
  }

  // Backpropagates d(loss)/d(out) of one timestep. `dh` is the gradient
  // flowing into this step's hidden state from the future; on return it holds
  // the gradient for the previous step's hidden state.
  void backward_step(const StepCache& c, Workspace& ws, int batch, VectorT& grad) const {
    const auto& L = layout_;
    const int p1 = arch_.w1() * arch_.h1();
    const int p2 = arch_.w2() * arch_.h2();
    MatrixT& dh = ws.dh;

    ws.d_out_pre = (ws.d_out.array() * c.out.array() * (Scalar(1) - c.out.array())).matrix();
    Layout::map<Scalar>(grad, L.dec2_b).col(0) += ws.d_out_pre.rowwise().sum();
    dec2_.gather(ws.d_out_pre, ws.d_cols, batch);
    Layout::map<Scalar>(grad, L.dec2_w).noalias() += c.y1 * ws.d_cols.transpose();
    ws.d_y1.noalias() = Layout::map<Scalar>(params_, L.dec2_w) * ws.d_cols;
    ws.d_y1.array() *= elu_slope(c.y1_pre, c.y1).array();

    Layout::map<Scalar>(grad, L.dec1_b).col(0) += ws.d_y1.rowwise().sum();
    dec1_.gather(ws.d_y1, ws.d_cols, batch);
    const Eigen::Map<const MatrixT> zmap(c.z.data(), arch_.enc2_channels, static_cast<Eigen::Index>(batch) * p2);
    Layout::map<Scalar>(grad, L.dec1_w).noalias() += zmap * ws.d_cols.transpose();
    ws.d_z.noalias() = Layout::map<Scalar>(params_, L.dec1_w) * ws.d_cols; // (16, B*p2) == (feature, B) in memory
    ws.d_z.array() *= Eigen::Map<const MatrixT>(elu_slope(c.z_pre, c.z).data(), ws.d_z.rows(), ws.d_z.cols()).array();
    const Eigen::Map<const MatrixT> d_z_pre(ws.d_z.data(), arch_.feature_size(), batch);

    Layout::map<Scalar>(grad, L.proj_w).noalias() += d_z_pre * c.h.transpose();
    Layout::map<Scalar>(grad, L.proj_b).col(0) += d_z_pre.rowwise().sum();
    dh.noalias() += Layout::map<Scalar>(params_, L.proj_w).transpose() * d_z_pre;

    ws.d_h_pre = (dh.array() * (Scalar(1) - c.h.array().square())).matrix();
    const Eigen::Map<const MatrixT> features(c.a2.data(), arch_.feature_size(), batch);
    Layout::map<Scalar>(grad, L.rnn_wx).noalias() += ws.d_h_pre * features.transpose();
    Layout::map<Scalar>(grad, L.rnn_wh).noalias() += ws.d_h_pre * c.h_prev.transpose();
    Layout::map<Scalar>(grad, L.rnn_b).col(0) += ws.d_h_pre.rowwise().sum();
    dh.noalias() = Layout::map<Scalar>(params_, L.rnn_wh).transpose() * ws.d_h_pre;

    ws.d_a2.noalias() = Layout::map<Scalar>(params_, L.rnn_wx).transpose() * ws.d_h_pre; // (feature, B)
    Eigen::Map<MatrixT> d_a2_pre(ws.d_a2.data(), arch_.enc2_channels, static_cast<Eigen::Index>(batch) * p2);
    d_a2_pre.array() *= (c.a2_pre.array() > Scalar(0)).template cast<Scalar>();
    Layout::map<Scalar>(grad, L.enc2_w).noalias() += d_a2_pre * c.col2.transpose();
    Layout::map<Scalar>(grad, L.enc2_b).col(0) += d_a2_pre.rowwise().sum();
    ws.d_col2.noalias() = Layout::map<Scalar>(params_, L.enc2_w).transpose() * d_a2_pre;
    ws.d_a1.setZero(arch_.enc1_channels, static_cast<Eigen::Index>(batch) * p1);
    enc2_.scatter_add(ws.d_col2, ws.d_a1, batch);
    ws.d_a1.array() *= (c.a1_pre.array() > Scalar(0)).template cast<Scalar>();
    Layout::map<Scalar>(grad, L.enc1_w).noalias() += ws.d_a1 * c.col1.transpose();
    Layout::map<Scalar>(grad, L.enc1_b).col(0) += ws.d_a1.rowwise().sum();
  }

  // Mean squared next-frame error over a batch of equal-length windows:
  // frames 0..T-2 are inputs, 1..T-1 targets. When `grad` is non-null the
  // loss gradient is accumulated into it.
  double window_loss(std::span<const Sequence<Scalar>* const> batch, VectorT* grad) const {
    const int b = static_cast<int>(batch.size());
    if (b == 0)
      throw DomainError("window_loss: empty batch");
    const std::size_t len = batch[0]->size();
    if (len < 2)
      throw DomainError("window_loss: windows need at least two frames");
    for (const Sequence<Scalar>* s : batch)
      if (s->size() != len)
        throw DomainError("window_loss: windows in a batch must share a length");
    const Eigen::Index in = arch_.input_size();
    const Eigen::Index pixels = static_cast<Eigen::Index>(arch_.width) * arch_.height;

    thread_local Workspace ws;
    if (ws.steps.size() < len - 1)
      ws.steps.resize(len - 1);
    auto& caches = ws.steps;
    MatrixT& h = ws.h;
    MatrixT& x = ws.x;
    h.setZero(arch_.hidden, b);
    x.resize(3, b * pixels);
    const double norm = 1.0 / (static_cast<double>(len - 1) * b * static_cast<double>(in));
    double loss = 0.0;
    const Scalar grad_scale = static_cast<Scalar>(2.0 * norm);
    for (std::size_t t = 0; t + 1 < len; ++t) {
      for (int s = 0; s < b; ++s) {
        const VectorT& f = (*batch[s])[t];
        if (f.size() != in)
          throw DomainError("window_loss: frame size does not match the architecture");
        std::memcpy(x.data() + s * in, f.data(), sizeof(Scalar) * static_cast<std::size_t>(in));
      }
      forward_step(x, h, b, caches[t]);
      for (int s = 0; s < b; ++s) {
        const VectorT& target = (*batch[s])[t + 1];
        loss += static_cast<double>((Eigen::Map<const VectorT>(caches[t].out.data() + s * in, in) - target).squaredNorm());
      }
    }
    loss *= norm;
    if (grad) {
      if (grad->size() != layout_.total)
        grad->setZero(layout_.total);
      ws.dh.setZero(arch_.hidden, b);
      ws.d_out.resize(3, b * pixels);
      for (std::size_t t = len - 1; t-- > 0;) {
        for (int s = 0; s < b; ++s) {
          const VectorT& target = (*batch[s])[t + 1];
          Eigen::Map<VectorT>(ws.d_out.data() + s * in, in) =
              grad_scale * (Eigen::Map<const VectorT>(caches[t].out.data() + s * in, in) - target);
        }
        backward_step(caches[t], ws, b, *grad);
      }
    }
    return loss;
  }

  // Next-frame prediction after consuming the whole history.
  VectorT predict(std::span<const VectorT> history) const {
    if (history.empty())
      throw DomainError("neural predict: empty history");
    MatrixT h = MatrixT::Zero(arch_.hidden, 1);
    MatrixT x(3, static_cast<Eigen::Index>(arch_.width) * arch_.height);
    StepCache c;
    for (const VectorT& f : history) {
      if (f.size() != arch_.input_size())
        throw DomainError("neural predict: frame size does not match the trained resolution");
      std::memcpy(x.data(), f.data(), sizeof(Scalar) * static_cast<std::size_t>(f.size()));
      forward_step(x, h, 1, c);
    }
    return Eigen::Map<const VectorT>(c.out.data(), c.out.size());
  }

private:
  Architecture arch_;
  Layout layout_;
  VectorT params_;
  PatchTable enc1_, enc2_, dec1_, dec2_;
};

using ConvRecurrentNet = BasicConvRecurrentNet<float>;


// ---- optimisation --------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

template <typename Scalar>
class Adam {
public:
  Adam(AdamConfig cfg, Eigen::Index n) : cfg_(cfg), m_(Vec<Scalar>::Zero(n)), v_(Vec<Scalar>::Zero(n)) {}

  void step(Vec<Scalar>& params, const Vec<Scalar>& grad) {
    ++t_;
    const auto b1 = static_cast<Scalar>(cfg_.beta1);
    const auto b2 = static_cast<Scalar>(cfg_.beta2);
    const auto lr_t = static_cast<Scalar>(cfg_.lr / (1.0 - std::pow(cfg_.beta1, static_cast<double>(t_))));
    const auto inv_c2 = static_cast<Scalar>(1.0 / (1.0 - std::pow(cfg_.beta2, static_cast<double>(t_))));
    const auto eps = static_cast<Scalar>(cfg_.epsilon);
    m_.array() = b1 * m_.array() + (Scalar(1) - b1) * grad.array();
    v_.array() = b2 * v_.array() + (Scalar(1) - b2) * grad.array().square();
    params.array() -= lr_t * m_.array() / ((v_.array() * inv_c2).sqrt() + eps);
  }

private:
  AdamConfig cfg_;
  Vec<Scalar> m_, v_;
  long t_ = 0;
};

struct TrainConfig {
  int sequence_length = 5;
  int batch_size = 4;
  int sequences_per_epoch = 64;
  int max_epochs = 500;
  // Stop once validation loss has not improved for this many epochs; 0 runs
  // all max_epochs.
  int patience = 60;
  // Stop as soon as validation loss drops below this; 0 disables.
  double target_val_mse = 1e-4;
  int downsample = 2;
  AdamConfig adam;
  std::uint64_t seed = 1;

  void validate() const {
    if (sequence_length < 2 || batch_size < 1 || sequences_per_epoch < 1 || max_epochs < 1 || patience < 0 ||
        downsample < 1 || !(target_val_mse >= 0))
      throw ConfigError("train config counts must be positive (sequence_length >= 2)");
    if (sequences_per_epoch % batch_size != 0)
      throw ConfigError("sequences_per_epoch must be a multiple of batch_size");
    if (!(adam.lr > 0) || !(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1) ||
        !(adam.epsilon > 0))
      throw ConfigError("invalid Adam hyper-parameters");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochLog {
  int epoch = 0;
  double train_mse = 0;
  double val_mse = 0;
};

template <typename Scalar>
struct BasicTrainResult {
  BasicConvRecurrentNet<Scalar> net;
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_val_mse = 0;
};

using TrainResult = BasicTrainResult<float>;

// Every contiguous window of min(length, demo size) frames, downsampled.
template <typename Scalar = float>
std::vector<Sequence<Scalar>> make_windows(std::span<const Demonstration> demos, int length, int downsample_factor) {
  std::vector<Sequence<Scalar>> out;
  for (const auto& d : demos) {
    Sequence<Scalar> frames;
    for (const Frame& f : d.frames())
      frames.push_back(frame_to_input<Scalar>(downsample(f, downsample_factor)));
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(length), frames.size());
    for (std::size_t s = 0; s + n <= frames.size(); ++s)
      out.emplace_back(frames.begin() + static_cast<std::ptrdiff_t>(s),
                       frames.begin() + static_cast<std::ptrdiff_t>(s + n));
  }
  return out;
}

inline Architecture architecture_for(const Demonstration& d, int downsample_factor) {
  Architecture a;
  const Frame& f = d.frames().front();
  if (downsample_factor < 1 || f.width() % downsample_factor != 0 || f.height() % downsample_factor != 0)
    throw ConfigError("downsample factor does not divide the frame size");
  a.width = f.width() / downsample_factor;
  a.height = f.height() / downsample_factor;
  a.validate();
  return a;
}

// Mean loss over windows, batched among runs of equal length.
template <typename Scalar>
double mean_loss(const BasicConvRecurrentNet<Scalar>& net, const std::vector<Sequence<Scalar>>& windows,
                 int batch_size) {
  double total = 0;
  double weight = 0;
  std::vector<const Sequence<Scalar>*> batch;
  auto flush = [&] {
    if (batch.empty())
      return;
    const double w = static_cast<double>(batch.size()) * static_cast<double>(batch[0]->size() - 1);
    total += net.window_loss(batch, nullptr) * w;
    weight += w;
    batch.clear();
  };
  for (const auto& s : windows) {
    if (!batch.empty() && (batch[0]->size() != s.size() || static_cast<int>(batch.size()) == batch_size))
      flush();
    batch.push_back(&s);
  }
  flush();
  return total / weight;
}

// Draws a batch of equal-length windows uniformly with replacement; the
// length class is that of the first draw.
template <typename Scalar>
void sample_batch(const std::vector<Sequence<Scalar>>& windows, int batch_size, std::mt19937_64& gen,
                  std::vector<const Sequence<Scalar>*>& batch) {
  batch.clear();
  const auto* first = &windows[gen() % windows.size()];
  batch.push_back(first);
  while (static_cast<int>(batch.size()) < batch_size) {
    const auto* s = &windows[gen() % windows.size()];
    if (s->size() == first->size())
      batch.push_back(s);
  }
}

// Sets the output bias to the logit of the per-channel mean pixel over
// `windows`, so an untrained net predicts the average colour.
template <typename Scalar>
void init_output_bias(BasicConvRecurrentNet<Scalar>& net, const std::vector<Sequence<Scalar>>& windows) {
  double sum[3] = {0, 0, 0};
  double count = 0;
  for (const auto& s : windows)
    for (const auto& f : s) {
      for (Eigen::Index i = 0; i < f.size(); ++i)
        sum[i % 3] += static_cast<double>(f[i]);
      count += static_cast<double>(f.size() / 3);
    }
  if (count == 0)
    return;
  for (int c = 0; c < 3; ++c) {
    const double p = std::clamp(sum[c] / count, 1e-3, 1 - 1e-3);
    net.params()[net.layout().dec2_b.offset + c] = static_cast<Scalar>(std::log(p / (1 - p)));
  }
}

// Next-frame MSE training with Adam. Each epoch draws sequences_per_epoch
// windows; the returned weights are those with the lowest validation loss.
template <typename Scalar = float>
BasicTrainResult<Scalar> train(std::span<const Demonstration> train_demos, std::span<const Demonstration> val_demos,
                               const TrainConfig& tc) {
  tc.validate();
  if (train_demos.empty() || val_demos.empty())
    throw ConfigError("training needs at least one training and one validation demonstration");
  const Architecture arch = architecture_for(train_demos.front(), tc.downsample);
  const auto windows = make_windows<Scalar>(train_demos, tc.sequence_length, tc.downsample);
  const auto val_windows = make_windows<Scalar>(val_demos, tc.sequence_length, tc.downsample);
  if (windows.empty() || val_windows.empty())
    throw DomainError("no training windows");

  BasicConvRecurrentNet<Scalar> net(arch);
  net.initialize(tc.seed);
  init_output_bias(net, windows);
  Adam<Scalar> adam(tc.adam, net.parameter_count());
  std::mt19937_64 gen(tc.seed ^ 0x9e3779b97f4a7c15ULL);

  BasicTrainResult<Scalar> result{net, {}, 0, std::numeric_limits<double>::infinity()};
  Vec<Scalar> grad(net.parameter_count());
  std::vector<const Sequence<Scalar>*> batch;
  int since_best = 0;
  for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    double train_sum = 0;
    int batches = 0;
    for (int k = 0; k < tc.sequences_per_epoch; k += tc.batch_size) {
      sample_batch(windows, tc.batch_size, gen, batch);
      grad.setZero();
      const double loss = net.window_loss(batch, &grad);
      if (!std::isfinite(loss))
        throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch));
      adam.step(net.params(), grad);
      train_sum += loss;
      ++batches;
    }
    if (!net.all_finite())
      throw TrainingError("non-finite parameters after epoch " + std::to_string(epoch));
    const double val = mean_loss(net, val_windows, tc.batch_size);
    if (!std::isfinite(val))
      throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
    result.log.push_back({epoch, train_sum / batches, val});
    if (val < result.best_val_mse) {
      result.best_val_mse = val;
      result.best_epoch = epoch;
      result.net = net;
      since_best = 0;
      if (val < tc.target_val_mse)
        break;
    } else if (tc.patience > 0 && ++since_best >= tc.patience) {
      break;
    }
  }
  return result;
}

inline std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,train_mse,val_mse\n";
  for (const auto& e : log)
    out += std::to_string(e.epoch) + "," + format_double(e.train_mse) + "," + format_double(e.val_mse) + "\n";
  return out;
}

// ---- gradient check ---------------------------------------------------------

struct GradientCheckResult {
  double max_relative_error = 0;
  double max_abs_analytic = 0;
  std::size_t checked = 0;
};

// Central differences on `samples` randomly chosen parameters versus backprop.
// Relative error is |g_a - g_n| / max(|g_a|, |g_n|, 1e-8).
inline GradientCheckResult gradient_check(const BasicConvRecurrentNet<double>& net,
                                          std::span<const Sequence<double>* const> batch, std::uint64_t seed,
                                          std::size_t samples = 200, double h = 1e-4) {
  Vec<double> grad = Vec<double>::Zero(net.parameter_count());
  net.window_loss(batch, &grad);
  BasicConvRecurrentNet<double> probe = net;
  std::mt19937_64 gen(seed);
  GradientCheckResult r;
  for (std::size_t k = 0; k < samples; ++k) {
    const auto i = static_cast<Eigen::Index>(gen() % static_cast<std::uint64_t>(net.parameter_count()));
    const double orig = probe.params()[i];
    probe.params()[i] = orig + h;
    const double up = probe.window_loss(batch, nullptr);
    probe.params()[i] = orig - h;
    const double down = probe.window_loss(batch, nullptr);
    probe.params()[i] = orig;
    const double numeric = (up - down) / (2 * h);
    const double analytic = grad[i];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    r.max_relative_error = std::max(r.max_relative_error, std::abs(analytic - numeric) / denom);
    r.max_abs_analytic = std::max(r.max_abs_analytic, std::abs(analytic));
    ++r.checked;
  }
  return r;
}

template <typename To, typename From>
BasicConvRecurrentNet<To> convert(const BasicConvRecurrentNet<From>& net) {
  BasicConvRecurrentNet<To> out(net.architecture());
  out.params() = net.params().template cast<To>();
  return out;
}

// ---- weight files -------------------------------------------------------------
//
// 8-byte magic "LFPNNW01", 8-byte little-endian architecture hash, then every
// parameter as a little-endian IEEE-754 binary64 in Layout order.

inline constexpr char kWeightMagic[8] = {'L', 'F', 'P', 'N', 'N', 'W', '0', '1'};

namespace detail {

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(in[pos + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

} // namespace detail

inline std::size_t weight_file_size(const Architecture& arch) {
  return 16 + 8 * static_cast<std::size_t>(Layout(arch).total);
}

template <typename Scalar>
std::vector<std::uint8_t> encode_weights(const BasicConvRecurrentNet<Scalar>& net) {
  std::vector<std::uint8_t> out(std::begin(kWeightMagic), std::end(kWeightMagic));
  out.reserve(weight_file_size(net.architecture()));
  detail::put_u64(out, net.architecture().hash());
  for (Eigen::Index i = 0; i < net.parameter_count(); ++i)
    detail::put_u64(out, std::bit_cast<std::uint64_t>(static_cast<double>(net.params()[i])));
  return out;
}

template <typename Scalar = float>
BasicConvRecurrentNet<Scalar> decode_weights(std::span<const std::uint8_t> bytes, const Architecture& arch) {
  if (bytes.size() < 16 || !std::equal(std::begin(kWeightMagic), std::end(kWeightMagic), bytes.begin()))
    throw ModelLoadError("weight file: bad magic");
  if (detail::get_u64(bytes, 8) != arch.hash())
    throw ModelLoadError("weight file: architecture hash mismatch (expected " + arch.descriptor() + ")");
  if (bytes.size() != weight_file_size(arch))
    throw ModelLoadError("weight file: expected " + std::to_string(weight_file_size(arch)) + " bytes, got " +
                         std::to_string(bytes.size()));
  BasicConvRecurrentNet<Scalar> net(arch);
  for (Eigen::Index i = 0; i < net.parameter_count(); ++i)
    net.params()[i] =
        static_cast<Scalar>(std::bit_cast<double>(detail::get_u64(bytes, 16 + 8 * static_cast<std::size_t>(i))));
  if (!net.all_finite())
    throw ModelLoadError("weight file: non-finite parameters");
  return net;
}

template <typename Scalar>
void save_weights(const BasicConvRecurrentNet<Scalar>& net, const std::filesystem::path& path) {
  write_bytes(path, encode_weights(net));
}

template <typename Scalar = float>
BasicConvRecurrentNet<Scalar> load_weights(const std::filesystem::path& path, const Architecture& arch) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_bytes(path);
  } catch (const IoError& e) {
    throw ModelLoadError(e.what());
  }
  return decode_weights<Scalar>(bytes, arch);
}

// ---- predictor adapters -----------------------------------------------------------

// Native frames in, frames at the network's resolution out.
class NeuralExpertPredictor final : public ExpertPredictor {
public:
  explicit NeuralExpertPredictor(std::shared_ptr<const ConvRecurrentNet> net) : net_(std::move(net)) {}

  Frame predict(std::span<const Frame> history) const override {
    std::vector<Vec<float>> inputs;
    inputs.reserve(history.size());
    for (const Frame& f : history)
      inputs.push_back(frame_to_input<float>(to_input_resolution(f)));
    const Vec<float> out = net_->predict(inputs);
    return output_to_frame(out.data(), net_->architecture().width, net_->architecture().height);
  }
  PredictorKind kind() const override { return PredictorKind::Neural; }

  Frame to_input_resolution(const Frame& f) const {
    const auto& a = net_->architecture();
    try {
      return to_resolution(f, a.width, a.height);
    } catch (const DomainError&) {
      throw DomainError("neural predictor: frame size " + std::to_string(f.width()) + "x" +
                        std::to_string(f.height()) + " incompatible with trained resolution " +
                        std::to_string(a.width) + "x" + std::to_string(a.height));
    }
  }

private:
  std::shared_ptr<const ConvRecurrentNet> net_;
};

// Action networks always see a single frame.
class NeuralActionPredictor final : public ActionPredictor {
public:
  explicit NeuralActionPredictor(std::shared_ptr<const ConvRecurrentNet> net) : inner_(std::move(net)) {}
  Frame predict(const Frame& current) const override { return inner_.predict(std::span<const Frame>(&current, 1)); }
  PredictorKind kind() const override { return PredictorKind::Neural; }

private:
  NeuralExpertPredictor inner_;
};

} // namespace lfp::nn
