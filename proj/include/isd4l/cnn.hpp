#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "isd4l/errors.hpp"
#include "isd4l/rng.hpp"

namespace isd4l {

// Stack of [3x3 same-pad conv, ReLU, 2x2 max-pool] blocks followed by global
// average pooling, one hidden dense layer with ReLU and a single-logit output
// head. Odd spatial sides lose their last row/column at the pool, as usual.
struct NetworkArch {
  int input_size = 380;
  std::vector<int> conv_channels = {8, 16, 32, 64};
  int dense_units = 32;

  int blocks() const { return static_cast<int>(conv_channels.size()); }

  // Spatial side of the input to block b (b == blocks() gives the GAP side).
  int side_at(int b) const {
    int s = input_size;
    for (int i = 0; i < b; ++i) s /= 2;
    return s;
  }

  int feature_count() const { return conv_channels.back(); }

  void validate() const {
    if (input_size < 8) throw ArchitectureMismatch("input size must be >= 8");
    if (conv_channels.empty()) throw ArchitectureMismatch("need at least one conv block");
    for (int c : conv_channels)
      if (c < 1) throw ArchitectureMismatch("conv widths must be >= 1");
    if (dense_units < 1) throw ArchitectureMismatch("dense width must be >= 1");
    if (side_at(blocks()) < 1)
      throw ArchitectureMismatch("input size " + std::to_string(input_size) +
                                 " collapses after " + std::to_string(blocks()) +
                                 " pooling steps");
  }

  std::size_t weight_count() const {
    std::size_t n = 0;
    int in_ch = 3;
    for (int out_ch : conv_channels) {
      n += static_cast<std::size_t>(out_ch) * in_ch * 9 + out_ch;
      in_ch = out_ch;
    }
    n += static_cast<std::size_t>(dense_units) * feature_count() + dense_units;
    n += static_cast<std::size_t>(dense_units) + 1;
    return n;
  }

  bool operator==(const NetworkArch&) const = default;
};

template <typename T>
struct NetWorkspace {
  std::vector<std::vector<T>> conv_out;   // post-ReLU, per block
  std::vector<std::vector<T>> pool_out;   // per block
  std::vector<std::vector<int>> pool_arg; // flat argmax into the conv plane
  std::vector<T> features;
  std::vector<T> hidden;                  // post-ReLU
  T logit = T(0);

  // scratch
  std::vector<T> pad, dpad, da, db_buf, dfeat, dhid;
};

// Deterministic reduction: fixed partial-sum layout regardless of target, so
// results are reproducible while still vectorizing.
template <typename T>
T dot_stride1(const T* a, const T* b, int n) {
  T acc0 = 0, acc1 = 0, acc2 = 0, acc3 = 0;
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 += a[i] * b[i];
    acc1 += a[i + 1] * b[i + 1];
    acc2 += a[i + 2] * b[i + 2];
    acc3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) acc0 += a[i] * b[i];
  return ((acc0 + acc1) + (acc2 + acc3));
}

template <typename T>
class Network {
 public:
  explicit Network(NetworkArch arch) : arch_(std::move(arch)) {
    arch_.validate();
    // weight layout, in serialization order:
    //   per block: kernel [out][in][3][3], bias [out]
    //   dense1 kernel [units][features], bias [units]
    //   dense2 kernel [1][units], bias [1]
    std::size_t off = 0;
    int in_ch = 3;
    for (int out_ch : arch_.conv_channels) {
      kernel_off_.push_back(off);
      off += static_cast<std::size_t>(out_ch) * in_ch * 9;
      bias_off_.push_back(off);
      off += static_cast<std::size_t>(out_ch);
      in_ch = out_ch;
    }
    dense1_w_off_ = off;
    off += static_cast<std::size_t>(arch_.dense_units) * arch_.feature_count();
    dense1_b_off_ = off;
    off += static_cast<std::size_t>(arch_.dense_units);
    dense2_w_off_ = off;
    off += static_cast<std::size_t>(arch_.dense_units);
    dense2_b_off_ = off;
    off += 1;
    weights_.assign(off, T(0));
  }

  const NetworkArch& arch() const { return arch_; }
  std::size_t weight_count() const { return weights_.size(); }
  std::vector<T>& weights() { return weights_; }
  const std::vector<T>& weights() const { return weights_; }

  // He-uniform kernels, zero biases; draw order equals weight layout order.
  void init_he_uniform(Xoshiro256pp& rng) {
    auto uniform = [&rng](double limit) {
      return static_cast<T>((2.0 * rng.unit() - 1.0) * limit);
    };
    int in_ch = 3;
    for (int b = 0; b < arch_.blocks(); ++b) {
      const int out_ch = arch_.conv_channels[b];
      const double limit = std::sqrt(6.0 / (in_ch * 9.0));
      T* k = weights_.data() + kernel_off_[b];
      for (std::size_t i = 0; i < static_cast<std::size_t>(out_ch) * in_ch * 9; ++i)
        k[i] = uniform(limit);
      std::fill_n(weights_.data() + bias_off_[b], out_ch, T(0));
      in_ch = out_ch;
    }
    const double limit1 = std::sqrt(6.0 / arch_.feature_count());
    T* w1 = weights_.data() + dense1_w_off_;
    for (std::size_t i = 0;
         i < static_cast<std::size_t>(arch_.dense_units) * arch_.feature_count(); ++i)
      w1[i] = uniform(limit1);
    std::fill_n(weights_.data() + dense1_b_off_, arch_.dense_units, T(0));
    const double limit2 = std::sqrt(6.0 / arch_.dense_units);
    T* w2 = weights_.data() + dense2_w_off_;
    for (int i = 0; i < arch_.dense_units; ++i) w2[i] = uniform(limit2);
    weights_[dense2_b_off_] = T(0);
  }

  NetWorkspace<T> make_workspace() const {
    NetWorkspace<T> ws;
    const int blocks = arch_.blocks();
    ws.conv_out.resize(blocks);
    ws.pool_out.resize(blocks);
    ws.pool_arg.resize(blocks);
    std::size_t max_plane_set = static_cast<std::size_t>(3) * arch_.input_size *
                                arch_.input_size;
    std::size_t max_pad = 0;
    for (int b = 0; b < blocks; ++b) {
      const int s = arch_.side_at(b);
      const int sp = arch_.side_at(b + 1);
      const int ch = arch_.conv_channels[b];
      ws.conv_out[b].assign(static_cast<std::size_t>(ch) * s * s, T(0));
      ws.pool_out[b].assign(static_cast<std::size_t>(ch) * sp * sp, T(0));
      ws.pool_arg[b].assign(static_cast<std::size_t>(ch) * sp * sp, 0);
      max_plane_set = std::max(max_plane_set, static_cast<std::size_t>(ch) * s * s);
      max_pad = std::max(max_pad, static_cast<std::size_t>(s + 2) * (s + 2));
    }
    ws.features.assign(arch_.feature_count(), T(0));
    ws.hidden.assign(arch_.dense_units, T(0));
    ws.pad.assign(max_pad, T(0));
    ws.dpad.assign(max_pad, T(0));
    ws.da.assign(max_plane_set, T(0));
    ws.db_buf.assign(max_plane_set, T(0));
    ws.dfeat.assign(arch_.feature_count(), T(0));
    ws.dhid.assign(arch_.dense_units, T(0));
    return ws;
  }

  // input: CHW, 3 x input_size x input_size, values in [0, 1].
  T forward(std::span<const T> input, NetWorkspace<T>& ws) const {
    const T* cur = input.data();
    int in_ch = 3;
    for (int b = 0; b < arch_.blocks(); ++b) {
      const int s = arch_.side_at(b);
      const int out_ch = arch_.conv_channels[b];
      conv3x3_forward(b, cur, in_ch, s, ws.conv_out[b].data(), out_ch, ws.pad.data());
      relu_inplace(ws.conv_out[b]);
      maxpool2(ws.conv_out[b].data(), out_ch, s, ws.pool_out[b].data(),
               ws.pool_arg[b].data());
      cur = ws.pool_out[b].data();
      in_ch = out_ch;
    }

    // global average pool
    const int fs = arch_.side_at(arch_.blocks());
    const T inv = T(1) / static_cast<T>(fs * fs);
    for (int c = 0; c < arch_.feature_count(); ++c) {
      const T* plane = ws.pool_out.back().data() + static_cast<std::size_t>(c) * fs * fs;
      T acc = 0;
      for (int i = 0; i < fs * fs; ++i) acc += plane[i];
      ws.features[c] = acc * inv;
    }

    const T* w1 = weights_.data() + dense1_w_off_;
    const T* b1 = weights_.data() + dense1_b_off_;
    for (int j = 0; j < arch_.dense_units; ++j) {
      const T pre = b1[j] + dot_stride1(w1 + static_cast<std::size_t>(j) *
                                                 arch_.feature_count(),
                                        ws.features.data(), arch_.feature_count());
      ws.hidden[j] = pre > T(0) ? pre : T(0);
    }
    const T* w2 = weights_.data() + dense2_w_off_;
    ws.logit = weights_[dense2_b_off_] +
               dot_stride1(w2, ws.hidden.data(), arch_.dense_units);
    return ws.logit;
  }

  // Accumulates dLoss/dWeights into grad (same layout as weights) given
  // dLoss/dLogit. Requires the workspace of the matching forward pass.
  void backward(std::span<const T> input, NetWorkspace<T>& ws, T dlogit,
                std::span<T> grad) const {
    // output head
    const T* w2 = weights_.data() + dense2_w_off_;
    T* gw2 = grad.data() + dense2_w_off_;
    for (int j = 0; j < arch_.dense_units; ++j) {
      gw2[j] += dlogit * ws.hidden[j];
      ws.dhid[j] = ws.hidden[j] > T(0) ? dlogit * w2[j] : T(0);
    }
    grad[dense2_b_off_] += dlogit;

    const T* w1 = weights_.data() + dense1_w_off_;
    T* gw1 = grad.data() + dense1_w_off_;
    T* gb1 = grad.data() + dense1_b_off_;
    const int nf = arch_.feature_count();
    std::fill(ws.dfeat.begin(), ws.dfeat.end(), T(0));
    for (int j = 0; j < arch_.dense_units; ++j) {
      const T dj = ws.dhid[j];
      if (dj == T(0)) continue;
      T* row = gw1 + static_cast<std::size_t>(j) * nf;
      const T* wrow = w1 + static_cast<std::size_t>(j) * nf;
      for (int f = 0; f < nf; ++f) {
        row[f] += dj * ws.features[f];
        ws.dfeat[f] += dj * wrow[f];
      }
      gb1[j] += dj;
    }

    // GAP backward into the last pool plane
    const int blocks = arch_.blocks();
    const int fs = arch_.side_at(blocks);
    const T inv = T(1) / static_cast<T>(fs * fs);
    T* dpool = ws.da.data();
    for (int c = 0; c < nf; ++c) {
      const T g = ws.dfeat[c] * inv;
      T* plane = dpool + static_cast<std::size_t>(c) * fs * fs;
      for (int i = 0; i < fs * fs; ++i) plane[i] = g;
    }

    for (int b = blocks - 1; b >= 0; --b) {
      const int s = arch_.side_at(b);
      const int sp = arch_.side_at(b + 1);
      const int out_ch = arch_.conv_channels[b];
      const int in_ch = b == 0 ? 3 : arch_.conv_channels[b - 1];
      const T* block_in = b == 0 ? input.data() : ws.pool_out[b - 1].data();

      // unpool + ReLU mask -> gradient at the conv output
      T* dconv = ws.db_buf.data();
      std::fill_n(dconv, static_cast<std::size_t>(out_ch) * s * s, T(0));
      const std::size_t pool_n = static_cast<std::size_t>(out_ch) * sp * sp;
      for (std::size_t i = 0; i < pool_n; ++i) dconv[ws.pool_arg[b][i]] += dpool[i];
      const T* conv = ws.conv_out[b].data();
      for (std::size_t i = 0; i < static_cast<std::size_t>(out_ch) * s * s; ++i)
        if (conv[i] <= T(0)) dconv[i] = T(0);

      conv3x3_backward(b, block_in, in_ch, s, dconv, out_ch, grad.data(),
                       b > 0 ? ws.da.data() : nullptr, ws.pad.data(),
                       ws.dpad.data());
      dpool = ws.da.data();  // now holds dLoss/d(pool_out[b-1])
    }
  }

 private:
  static void relu_inplace(std::vector<T>& v) {
    for (auto& x : v)
      if (x < T(0)) x = T(0);
  }

  static void pad_plane(const T* src, int s, T* dst) {
    const int ps = s + 2;
    std::fill_n(dst, static_cast<std::size_t>(ps) * ps, T(0));
    for (int y = 0; y < s; ++y)
      std::copy_n(src + static_cast<std::size_t>(y) * s, s,
                  dst + static_cast<std::size_t>(y + 1) * ps + 1);
  }

  void conv3x3_forward(int b, const T* in, int in_ch, int s, T* out, int out_ch,
                       T* pad) const {
    const T* kernels = weights_.data() + kernel_off_[b];
    const T* bias = weights_.data() + bias_off_[b];
    const int ps = s + 2;
    const std::size_t plane = static_cast<std::size_t>(s) * s;
    for (int co = 0; co < out_ch; ++co) std::fill_n(out + co * plane, plane, bias[co]);
    for (int ci = 0; ci < in_ch; ++ci) {
      pad_plane(in + ci * plane, s, pad);
      for (int co = 0; co < out_ch; ++co) {
        const T* k = kernels + (static_cast<std::size_t>(co) * in_ch + ci) * 9;
        T* outp = out + co * plane;
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const T w = k[ky * 3 + kx];
            if (w == T(0)) continue;
            for (int y = 0; y < s; ++y) {
              const T* ip = pad + static_cast<std::size_t>(y + ky) * ps + kx;
              T* op = outp + static_cast<std::size_t>(y) * s;
              for (int x = 0; x < s; ++x) op[x] += w * ip[x];
            }
          }
        }
      }
    }
  }

  void conv3x3_backward(int b, const T* in, int in_ch, int s, const T* dout,
                        int out_ch, T* grad, T* din, T* pad, T* dpad) const {
    const T* kernels = weights_.data() + kernel_off_[b];
    T* gk = grad + kernel_off_[b];
    T* gb = grad + bias_off_[b];
    const int ps = s + 2;
    const std::size_t plane = static_cast<std::size_t>(s) * s;

    for (int co = 0; co < out_ch; ++co) {
      T acc = 0;
      const T* dp = dout + co * plane;
      for (std::size_t i = 0; i < plane; ++i) acc += dp[i];
      gb[co] += acc;
    }

    for (int ci = 0; ci < in_ch; ++ci) {
      pad_plane(in + ci * plane, s, pad);
      if (din) std::fill_n(dpad, static_cast<std::size_t>(ps) * ps, T(0));
      for (int co = 0; co < out_ch; ++co) {
        const T* k = kernels + (static_cast<std::size_t>(co) * in_ch + ci) * 9;
        T* gkp = gk + (static_cast<std::size_t>(co) * in_ch + ci) * 9;
        const T* dp = dout + co * plane;
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            T acc = 0;
            for (int y = 0; y < s; ++y) {
              acc += dot_stride1(dp + static_cast<std::size_t>(y) * s,
                                 pad + static_cast<std::size_t>(y + ky) * ps + kx, s);
            }
            gkp[ky * 3 + kx] += acc;
            if (din) {
              const T w = k[ky * 3 + kx];
              if (w == T(0)) continue;
              for (int y = 0; y < s; ++y) {
                T* dpp = dpad + static_cast<std::size_t>(y + ky) * ps + kx;
                const T* dor = dp + static_cast<std::size_t>(y) * s;
                for (int x = 0; x < s; ++x) dpp[x] += w * dor[x];
              }
            }
          }
        }
      }
      if (din) {
        T* dst = din + ci * plane;
        for (int y = 0; y < s; ++y)
          std::copy_n(dpad + static_cast<std::size_t>(y + 1) * ps + 1, s,
                      dst + static_cast<std::size_t>(y) * s);
      }
    }
  }

  static void maxpool2(const T* in, int ch, int s, T* out, int* arg) {
    const int sp = s / 2;
    const std::size_t in_plane = static_cast<std::size_t>(s) * s;
    const std::size_t out_plane = static_cast<std::size_t>(sp) * sp;
    for (int c = 0; c < ch; ++c) {
      const T* ip = in + c * in_plane;
      T* op = out + c * out_plane;
      int* ap = arg + c * out_plane;
      for (int oy = 0; oy < sp; ++oy) {
        for (int ox = 0; ox < sp; ++ox) {
          const int y0 = 2 * oy, x0 = 2 * ox;
          int best = y0 * s + x0;
          T bv = ip[best];
          const int cand[3] = {y0 * s + x0 + 1, (y0 + 1) * s + x0, (y0 + 1) * s + x0 + 1};
          for (int idx : cand) {
            if (ip[idx] > bv) {
              bv = ip[idx];
              best = idx;
            }
          }
          op[oy * sp + ox] = bv;
          ap[oy * sp + ox] = static_cast<int>(c * in_plane) + best;
        }
      }
    }
  }

  NetworkArch arch_;
  std::vector<T> weights_;
  std::vector<std::size_t> kernel_off_, bias_off_;
  std::size_t dense1_w_off_ = 0, dense1_b_off_ = 0, dense2_w_off_ = 0, dense2_b_off_ = 0;
};

}  // namespace isd4l
