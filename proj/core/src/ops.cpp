// Copyright 2026 The Chromatix Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "chromatix/ops.hpp"

#include <cmath>
#include <string>

#include "gemm.hpp"

namespace chromatix::nn {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kInput: return "input";
    case OpKind::kParameter: return "parameter";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kConvTranspose2d: return "conv_transpose2d";
    case OpKind::kBatchNorm: return "batch_norm";
    case OpKind::kRelu: return "relu";
    case OpKind::kTanh: return "tanh";
    case OpKind::kConcat: return "concat";
    case OpKind::kSliceBatch: return "slice_batch";
    case OpKind::kUpsampleBilinear: return "upsample_bilinear";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kSum: return "sum";
    case OpKind::kSpatialMean: return "spatial_mean";
    case OpKind::kSmoothL1: return "smooth_l1";
    case OpKind::kSoftmaxCrossEntropy: return "softmax_cross_entropy";
  }
  return "unknown";
}

namespace {

[[noreturn]] void shape_fail(std::string_view op, const std::string& what) {
  throw ShapeError(std::string(op) + ": " + what);
}

void require_rank4(std::string_view op, const char* name, const Dims& d) {
  if (d.size() != 4) {
    shape_fail(op, std::string(name) + " must be rank 4, got " + dims_string(d));
  }
}

void require_same(std::string_view op, const Dims& a, const Dims& b) {
  if (a != b) shape_fail(op, "extent mismatch " + dims_string(a) + " vs " + dims_string(b));
}

// Geometry of a convolution reading a [c, h, w] image into [oh, ow].
struct ConvGeom {
  int c, h, w, k, stride, pad, dil, oh, ow;
  std::size_t rows() const { return static_cast<std::size_t>(c) * k * k; }
  std::size_t cols() const { return static_cast<std::size_t>(oh) * ow; }
};

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* col) {
  const std::size_t ncols = g.cols();
  for (int ci = 0; ci < g.c; ++ci) {
    const T* xc = x + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ki = 0; ki < g.k; ++ki) {
      for (int kj = 0; kj < g.k; ++kj) {
        T* row = col + ((static_cast<std::size_t>(ci) * g.k + ki) * g.k + kj) * ncols;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ki * g.dil;
          T* out = row + static_cast<std::size_t>(oy) * g.ow;
          if (iy < 0 || iy >= g.h) {
            for (int ox = 0; ox < g.ow; ++ox) out[ox] = T{0};
            continue;
          }
          const T* xrow = xc + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kj * g.dil;
            out[ox] = (ix >= 0 && ix < g.w) ? xrow[ix] : T{0};
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const ConvGeom& g, T* x) {
  const std::size_t ncols = g.cols();
  for (int ci = 0; ci < g.c; ++ci) {
    T* xc = x + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ki = 0; ki < g.k; ++ki) {
      for (int kj = 0; kj < g.k; ++kj) {
        const T* row = col + ((static_cast<std::size_t>(ci) * g.k + ki) * g.k + kj) * ncols;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ki * g.dil;
          if (iy < 0 || iy >= g.h) continue;
          const T* in = row + static_cast<std::size_t>(oy) * g.ow;
          T* xrow = xc + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kj * g.dil;
            if (ix >= 0 && ix < g.w) xrow[ix] += in[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void check_bias(std::string_view op, BasicGraph<T>& g, Var bias, int channels) {
  if (!bias.valid()) return;
  const Dims& bd = g.value(bias).dims();
  if (bd.size() != 1 || bd[0] != channels) {
    shape_fail(op, "bias " + dims_string(bd) + " does not match " +
                       std::to_string(channels) + " output channels");
  }
}

template <typename T>
void add_bias(BasicTensor<T>& out, const BasicTensor<T>& bias) {
  const int n = out.batch(), c = out.channels();
  const std::size_t plane = static_cast<std::size_t>(out.height()) * out.width();
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      T* p = &out.at(b, ch, 0, 0);
      const T v = bias[static_cast<std::size_t>(ch)];
      for (std::size_t i = 0; i < plane; ++i) p[i] += v;
    }
  }
}

template <typename T>
void accumulate_bias_grad(const BasicTensor<T>& gy, BasicTensor<T>& gb) {
  const int n = gy.batch(), c = gy.channels();
  const std::size_t plane = static_cast<std::size_t>(gy.height()) * gy.width();
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const T* p = &gy.at(b, ch, 0, 0);
      T s{0};
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
      gb[static_cast<std::size_t>(ch)] += s;
    }
  }
}

}  // namespace

template <typename T>
Var conv2d(BasicGraph<T>& g, Var x, Var weight, Var bias, Conv2dOptions opt) {
  constexpr std::string_view op = "conv2d";
  const BasicTensor<T>& xv = g.value(x);
  const BasicTensor<T>& wv = g.value(weight);
  require_rank4(op, "input", xv.dims());
  require_rank4(op, "weight", wv.dims());
  if (wv.dim(1) != xv.channels()) {
    shape_fail(op, "weight " + dims_string(wv.dims()) + " expects " +
                       std::to_string(wv.dim(1)) + " input channels, input is " +
                       dims_string(xv.dims()));
  }
  if (wv.dim(2) != wv.dim(3)) shape_fail(op, "kernel must be square, got " + dims_string(wv.dims()));
  if (opt.stride != 1 && opt.stride != 2) shape_fail(op, "stride must be 1 or 2");
  if (opt.dilation < 1) shape_fail(op, "dilation must be >= 1");
  if (opt.padding < 0) shape_fail(op, "padding must be >= 0");
  const int cout = wv.dim(0), k = wv.dim(2);
  const int span = opt.dilation * (k - 1) + 1;
  const int oh = (xv.height() + 2 * opt.padding - span) / opt.stride + 1;
  const int ow = (xv.width() + 2 * opt.padding - span) / opt.stride + 1;
  if (xv.height() + 2 * opt.padding < span || xv.width() + 2 * opt.padding < span) {
    shape_fail(op, "input " + dims_string(xv.dims()) + " smaller than dilated kernel extent " +
                       std::to_string(span));
  }
  check_bias(op, g, bias, cout);

  const ConvGeom geom{xv.channels(), xv.height(), xv.width(), k, opt.stride,
                      opt.padding, opt.dilation, oh, ow};
  const bool pointwise = k == 1 && opt.stride == 1 && opt.padding == 0;
  BasicTensor<T> out(Dims{xv.batch(), cout, oh, ow}, T{0});
  std::vector<T> col(pointwise ? 0 : geom.rows() * geom.cols());
  const std::size_t in_item = static_cast<std::size_t>(xv.channels()) * xv.height() * xv.width();
  const std::size_t out_item = static_cast<std::size_t>(cout) * oh * ow;
  for (int n = 0; n < xv.batch(); ++n) {
    const T* xn = xv.ptr() + n * in_item;
    const T* cols = xn;
    if (!pointwise) {
      im2col(xn, geom, col.data());
      cols = col.data();
    }
    detail::gemm_nn(cout, static_cast<int>(geom.cols()), static_cast<int>(geom.rows()),
                    wv.ptr(), cols, out.ptr() + n * out_item);
  }
  if (bias.valid()) add_bias(out, g.value(bias));

  const int xi = x.id, wi = weight.id, bi = bias.id;
  return g.record(OpKind::kConv2d, bias.valid() ? std::vector<int>{xi, wi, bi} : std::vector<int>{xi, wi},
                  std::move(out),
                  [=](BasicGraph<T>& gr, int self) {
                    const BasicTensor<T>& gy = gr.grad_buffer(self);
                    const BasicTensor<T>& xval = gr.value(xi);
                    const BasicTensor<T>& wval = gr.value(wi);
                    const bool need_x = gr.requires_grad(xi);
                    const bool need_w = gr.requires_grad(wi);
                    std::vector<T> colb(pointwise ? 0 : geom.rows() * geom.cols());
                    std::vector<T> dcol(geom.rows() * geom.cols());
                    std::vector<T> scratch;
                    const int m = static_cast<int>(geom.rows());
                    const int ncol = static_cast<int>(geom.cols());
                    for (int n = 0; n < xval.batch(); ++n) {
                      const T* gyn = gy.ptr() + n * out_item;
                      if (need_w) {
                        const T* xn = xval.ptr() + n * in_item;
                        const T* cols = xn;
                        if (!pointwise) {
                          im2col(xn, geom, colb.data());
                          cols = colb.data();
                        }
                        detail::gemm_nt(cout, m, ncol, gyn, cols, gr.grad_buffer(wi).ptr(), scratch);
                      }
                      if (need_x) {
                        T* gxn = gr.grad_buffer(xi).ptr() + n * in_item;
                        if (pointwise) {
                          detail::gemm_tn(m, ncol, cout, wval.ptr(), gyn, gxn);
                        } else {
                          std::fill(dcol.begin(), dcol.end(), T{0});
                          detail::gemm_tn(m, ncol, cout, wval.ptr(), gyn, dcol.data());
                          col2im(dcol.data(), geom, gxn);
                        }
                      }
                    }
                    if (bi >= 0 && gr.requires_grad(bi)) accumulate_bias_grad(gy, gr.grad_buffer(bi));
                  });
}

template <typename T>
Var conv_transpose2d(BasicGraph<T>& g, Var x, Var weight, Var bias,
                     ConvTranspose2dOptions opt) {
  constexpr std::string_view op = "conv_transpose2d";
  const BasicTensor<T>& xv = g.value(x);
  const BasicTensor<T>& wv = g.value(weight);
  require_rank4(op, "input", xv.dims());
  require_rank4(op, "weight", wv.dims());
  if (wv.dim(0) != xv.channels()) {
    shape_fail(op, "weight " + dims_string(wv.dims()) + " expects " +
                       std::to_string(wv.dim(0)) + " input channels, input is " +
                       dims_string(xv.dims()));
  }
  if (wv.dim(2) != wv.dim(3)) shape_fail(op, "kernel must be square, got " + dims_string(wv.dims()));
  if (opt.stride != 1 && opt.stride != 2) shape_fail(op, "stride must be 1 or 2");
  const int cin = xv.channels(), cout = wv.dim(1), k = wv.dim(2);
  const int oh = (xv.height() - 1) * opt.stride - 2 * opt.padding + k;
  const int ow = (xv.width() - 1) * opt.stride - 2 * opt.padding + k;
  if (oh < 1 || ow < 1) shape_fail(op, "non-positive output extent for input " + dims_string(xv.dims()));
  check_bias(op, g, bias, cout);

  // The conv that maps the output back onto the input grid.
  const ConvGeom geom{cout, oh, ow, k, opt.stride, opt.padding, 1, xv.height(), xv.width()};
  BasicTensor<T> out(Dims{xv.batch(), cout, oh, ow}, T{0});
  std::vector<T> col(geom.rows() * geom.cols());
  const std::size_t in_item = static_cast<std::size_t>(cin) * xv.height() * xv.width();
  const std::size_t out_item = static_cast<std::size_t>(cout) * oh * ow;
  const int m = static_cast<int>(geom.rows());
  const int ncol = static_cast<int>(geom.cols());
  for (int n = 0; n < xv.batch(); ++n) {
    std::fill(col.begin(), col.end(), T{0});
    detail::gemm_tn(m, ncol, cin, wv.ptr(), xv.ptr() + n * in_item, col.data());
    col2im(col.data(), geom, out.ptr() + n * out_item);
  }
  if (bias.valid()) add_bias(out, g.value(bias));

  const int xi = x.id, wi = weight.id, bi = bias.id;
  return g.record(OpKind::kConvTranspose2d,
                  bias.valid() ? std::vector<int>{xi, wi, bi} : std::vector<int>{xi, wi},
                  std::move(out),
                  [=](BasicGraph<T>& gr, int self) {
                    const BasicTensor<T>& gy = gr.grad_buffer(self);
                    const BasicTensor<T>& xval = gr.value(xi);
                    const BasicTensor<T>& wval = gr.value(wi);
                    const bool need_x = gr.requires_grad(xi);
                    const bool need_w = gr.requires_grad(wi);
                    std::vector<T> dcol(geom.rows() * geom.cols());
                    std::vector<T> scratch;
                    for (int n = 0; n < xval.batch(); ++n) {
                      im2col(gy.ptr() + n * out_item, geom, dcol.data());
                      if (need_x) {
                        detail::gemm_nn(cin, ncol, m, wval.ptr(), dcol.data(),
                                        gr.grad_buffer(xi).ptr() + n * in_item);
                      }
                      if (need_w) {
                        detail::gemm_nt(cin, m, ncol, xval.ptr() + n * in_item, dcol.data(),
                                        gr.grad_buffer(wi).ptr(), scratch);
                      }
                    }
                    if (bi >= 0 && gr.requires_grad(bi)) accumulate_bias_grad(gy, gr.grad_buffer(bi));
                  });
}

template <typename T>
Var batch_norm(BasicGraph<T>& g, Var x, Var gamma, Var beta,
               BatchNormRunning<T> running, BatchNormOptions opt) {
  constexpr std::string_view op = "batch_norm";
  const BasicTensor<T>& xv = g.value(x);
  require_rank4(op, "input", xv.dims());
  const int n = xv.batch(), c = xv.channels();
  const std::size_t plane = static_cast<std::size_t>(xv.height()) * xv.width();
  const Dims cdims{c};
  require_same(op, g.value(gamma).dims(), cdims);
  require_same(op, g.value(beta).dims(), cdims);
  if (running.mean) require_same(op, running.mean->dims(), cdims);
  if (running.var) require_same(op, running.var->dims(), cdims);
  const std::size_t count = static_cast<std::size_t>(n) * plane;
  if (opt.training && count < 2) shape_fail(op, "training mode needs >= 2 values per channel");

  const BasicTensor<T>& gv = g.value(gamma);
  const BasicTensor<T>& bv = g.value(beta);
  std::vector<T> invstd(static_cast<std::size_t>(c));
  BasicTensor<T> xhat(xv.dims());
  BasicTensor<T> out(xv.dims());
  for (int ch = 0; ch < c; ++ch) {
    double mean, var;
    if (opt.training) {
      double s = 0.0;
      for (int b = 0; b < n; ++b) {
        const T* p = &xv.at(b, ch, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      mean = s / static_cast<double>(count);
      double ss = 0.0;
      for (int b = 0; b < n; ++b) {
        const T* p = &xv.at(b, ch, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - mean;
          ss += d * d;
        }
      }
      var = ss / static_cast<double>(count);
      if (running.mean && running.var) {
        const double unbiased = ss / static_cast<double>(count - 1);
        T& rm = (*running.mean)[static_cast<std::size_t>(ch)];
        T& rv = (*running.var)[static_cast<std::size_t>(ch)];
        rm = static_cast<T>((1.0 - opt.momentum) * rm + opt.momentum * mean);
        rv = static_cast<T>((1.0 - opt.momentum) * rv + opt.momentum * unbiased);
      }
    } else {
      if (!running.mean || !running.var) {
        throw ContractError("batch_norm: inference mode requires running statistics");
      }
      mean = (*running.mean)[static_cast<std::size_t>(ch)];
      var = (*running.var)[static_cast<std::size_t>(ch)];
    }
    const T is = static_cast<T>(1.0 / std::sqrt(var + opt.eps));
    invstd[static_cast<std::size_t>(ch)] = is;
    const T m = static_cast<T>(mean);
    const T gm = gv[static_cast<std::size_t>(ch)], bt = bv[static_cast<std::size_t>(ch)];
    for (int b = 0; b < n; ++b) {
      const T* p = &xv.at(b, ch, 0, 0);
      T* h = &xhat.at(b, ch, 0, 0);
      T* o = &out.at(b, ch, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) {
        h[i] = (p[i] - m) * is;
        o[i] = gm * h[i] + bt;
      }
    }
  }

  const int xi = x.id, gi = gamma.id, bi = beta.id;
  const bool training = opt.training;
  return g.record(OpKind::kBatchNorm, {xi, gi, bi}, std::move(out),
                  [=, xhat = std::move(xhat), invstd = std::move(invstd)](BasicGraph<T>& gr, int self) {
                    const BasicTensor<T>& gy = gr.grad_buffer(self);
                    const BasicTensor<T>& gval = gr.value(gi);
                    const double m = static_cast<double>(count);
                    for (int ch = 0; ch < c; ++ch) {
                      double sdy = 0.0, sdyx = 0.0;
                      for (int b = 0; b < n; ++b) {
                        const T* dy = &gy.at(b, ch, 0, 0);
                        const T* h = &xhat.at(b, ch, 0, 0);
                        for (std::size_t i = 0; i < plane; ++i) {
                          sdy += dy[i];
                          sdyx += static_cast<double>(dy[i]) * h[i];
                        }
                      }
                      if (gr.requires_grad(gi)) gr.grad_buffer(gi)[static_cast<std::size_t>(ch)] += static_cast<T>(sdyx);
                      if (gr.requires_grad(bi)) gr.grad_buffer(bi)[static_cast<std::size_t>(ch)] += static_cast<T>(sdy);
                      if (!gr.requires_grad(xi)) continue;
                      const double gm = gval[static_cast<std::size_t>(ch)];
                      const double is = invstd[static_cast<std::size_t>(ch)];
                      BasicTensor<T>& gx = gr.grad_buffer(xi);
                      for (int b = 0; b < n; ++b) {
                        const T* dy = &gy.at(b, ch, 0, 0);
                        const T* h = &xhat.at(b, ch, 0, 0);
                        T* dx = &gx.at(b, ch, 0, 0);
                        for (std::size_t i = 0; i < plane; ++i) {
                          if (training) {
                            dx[i] += static_cast<T>(gm * is / m * (m * dy[i] - sdy - h[i] * sdyx));
                          } else {
                            dx[i] += static_cast<T>(gm * is * dy[i]);
                          }
                        }
                      }
                    }
                  });
}

template <typename T>
Var relu(BasicGraph<T>& g, Var x) {
  const BasicTensor<T>& xv = g.value(x);
  BasicTensor<T> out(xv.dims());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > T{0} ? xv[i] : T{0};
  const int xi = x.id;
  return g.record(OpKind::kRelu, {xi}, std::move(out), [xi](BasicGraph<T>& gr, int self) {
    const BasicTensor<T>& gy = gr.grad_buffer(self);
    const BasicTensor<T>& xval = gr.value(xi);
    BasicTensor<T>& gx = gr.grad_buffer(xi);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      if (xval[i] > T{0}) gx[i] += gy[i];
    }
  });
}

template <typename T>
Var tanh(BasicGraph<T>& g, Var x) {
  const BasicTensor<T>& xv = g.value(x);
  BasicTensor<T> out(xv.dims());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = std::tanh(xv[i]);
  const int xi = x.id;
  return g.record(OpKind::kTanh, {xi}, std::move(out), [xi](BasicGraph<T>& gr, int self) {
    const BasicTensor<T>& gy = gr.grad_buffer(self);
    const BasicTensor<T>& y = gr.value(self);
    BasicTensor<T>& gx = gr.grad_buffer(xi);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * (T{1} - y[i] * y[i]);
  });
}

template <typename T>
Var concat_channels(BasicGraph<T>& g, std::span<const Var> xs) {
  constexpr std::string_view op = "concat";
  if (xs.empty()) shape_fail(op, "no inputs");
  const Dims& first = g.value(xs[0]).dims();
  require_rank4(op, "input", first);
  int total = 0;
  std::vector<int> ids;
  std::vector<int> chans;
  for (Var v : xs) {
    const Dims& d = g.value(v).dims();
    require_rank4(op, "input", d);
    if (d[0] != first[0] || d[2] != first[2] || d[3] != first[3]) {
      shape_fail(op, "extent mismatch " + dims_string(first) + " vs " + dims_string(d));
    }
    total += d[1];
    ids.push_back(v.id);
    chans.push_back(d[1]);
  }
  const int n = first[0];
  const std::size_t plane = static_cast<std::size_t>(first[2]) * first[3];
  BasicTensor<T> out(Dims{n, total, first[2], first[3]});
  for (int b = 0; b < n; ++b) {
    int offset = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const BasicTensor<T>& v = g.value(ids[k]);
      std::copy_n(&v.at(b, 0, 0, 0), chans[k] * plane, &out.at(b, offset, 0, 0));
      offset += chans[k];
    }
  }
  return g.record(OpKind::kConcat, ids, std::move(out), [=](BasicGraph<T>& gr, int self) {
    const BasicTensor<T>& gy = gr.grad_buffer(self);
    for (int b = 0; b < n; ++b) {
      int offset = 0;
      for (std::size_t k = 0; k < ids.size(); ++k) {
        if (gr.requires_grad(ids[k])) {
          T* dst = &gr.grad_buffer(ids[k]).at(b, 0, 0, 0);
          const T* src = &gy.at(b, offset, 0, 0);
          for (std::size_t i = 0; i < chans[k] * plane; ++i) dst[i] += src[i];
        }
        offset += chans[k];
      }
    }
  });
}

template <typename T>
Var slice_batch(BasicGraph<T>& g, Var x, int begin, int end) {
  constexpr std::string_view op = "slice_batch";
  const Dims d = g.value(x).dims();
  require_rank4(op, "input", d);
  if (begin < 0 || end > d[0] || begin >= end) {
    shape_fail(op, "range [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " + dims_string(d));
  }
  const std::size_t item = static_cast<std::size_t>(d[1]) * d[2] * d[3];
  BasicTensor<T> out(Dims{end - begin, d[1], d[2], d[3]});
  std::copy_n(&g.value(x).at(begin, 0, 0, 0), (end - begin) * item, out.ptr());
  const int src = x.id;
  return g.record(OpKind::kSliceBatch, {src}, std::move(out), [=](BasicGraph<T>& gr, int self) {
    if (!gr.requires_grad(src)) return;
    const BasicTensor<T>& gy = gr.grad_buffer(self);
    T* dst = &gr.grad_buffer(src).at(begin, 0, 0, 0);
    for (std::size_t i = 0; i < gy.size(); ++i) dst[i] += gy[i];
  });
}

namespace {

struct LerpAxis {
  std::vector<int> lo, hi;
  std::vector<double> frac;
};

LerpAxis lerp_axis(int in, int out) {
  LerpAxis a;
  a.lo.resize(static_cast<std::size_t>(out));
  a.hi.resize(static_cast<std::size_t>(out));
  a.frac.resize(static_cast<std::size_t>(out));
  const double ratio = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    double src = (i + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(src);
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t u = static_cast<std::size_t>(i);
    a.lo[u] = i0;
    a.hi[u] = std::min(i0 + 1, in - 1);
    a.frac[u] = src - i0;
  }
  return a;
}

}  // namespace

template <typename T>
Var upsample_bilinear(BasicGraph<T>& g, Var x, int out_h, int out_w) {
  constexpr std::string_view op = "upsample_bilinear";
  const BasicTensor<T>& xv = g.value(x);
  require_rank4(op, "input", xv.dims());
  if (out_h < 1 || out_w < 1) shape_fail(op, "output extent must be >= 1");
  const int n = xv.batch(), c = xv.channels(), h = xv.height(), w = xv.width();
  const LerpAxis ay = lerp_axis(h, out_h), ax = lerp_axis(w, out_w);
  BasicTensor<T> out(Dims{n, c, out_h, out_w});
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const T* src = &xv.at(b, ch, 0, 0);
      T* dst = &out.at(b, ch, 0, 0);
      for (int y = 0; y < out_h; ++y) {
        const std::size_t uy = static_cast<std::size_t>(y);
        const T* r0 = src + static_cast<std::size_t>(ay.lo[uy]) * w;
        const T* r1 = src + static_cast<std::size_t>(ay.hi[uy]) * w;
        const T fy = static_cast<T>(ay.frac[uy]);
        for (int xx = 0; xx < out_w; ++xx) {
          const std::size_t ux = static_cast<std::size_t>(xx);
          const T fx = static_cast<T>(ax.frac[ux]);
          const T top = r0[ax.lo[ux]] * (T{1} - fx) + r0[ax.hi[ux]] * fx;
          const T bot = r1[ax.lo[ux]] * (T{1} - fx) + r1[ax.hi[ux]] * fx;
          dst[static_cast<std::size_t>(y) * out_w + ux] = top * (T{1} - fy) + bot * fy;
        }
      }
    }
  }
  const int xi = x.id;
  return g.record(OpKind::kUpsampleBilinear, {xi}, std::move(out),
                  [=](BasicGraph<T>& gr, int self) {
                    const BasicTensor<T>& gy = gr.grad_buffer(self);
                    BasicTensor<T>& gx = gr.grad_buffer(xi);
                    for (int b = 0; b < n; ++b) {
                      for (int ch = 0; ch < c; ++ch) {
                        T* dst = &gx.at(b, ch, 0, 0);
                        const T* src = &gy.at(b, ch, 0, 0);
                        for (int y = 0; y < out_h; ++y) {
                          const std::size_t uy = static_cast<std::size_t>(y);
                          T* r0 = dst + static_cast<std::size_t>(ay.lo[uy]) * w;
                          T* r1 = dst + static_cast<std::size_t>(ay.hi[uy]) * w;
                          const T fy = static_cast<T>(ay.frac[uy]);
                          for (int xx = 0; xx < out_w; ++xx) {
                            const std::size_t ux = static_cast<std::size_t>(xx);
                            const T fx = static_cast<T>(ax.frac[ux]);
                            const T v = src[uy * out_w + ux];
                            r0[ax.lo[ux]] += v * (T{1} - fy) * (T{1} - fx);
                            r0[ax.hi[ux]] += v * (T{1} - fy) * fx;
                            r1[ax.lo[ux]] += v * fy * (T{1} - fx);
                            r1[ax.hi[ux]] += v * fy * fx;
                          }
                        }
                      }
                    }
                  });
}

namespace {

template <typename T, typename F>
Var binary_elementwise(BasicGraph<T>& g, OpKind kind, Var a, Var b, F f) {
  const BasicTensor<T>& av = g.value(a);
  const BasicTensor<T>& bv = g.value(b);
  require_same(op_name(kind), av.dims(), bv.dims());
  BasicTensor<T> out(av.dims());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[i]);
  const int ai = a.id, bi = b.id;
  return g.record(kind, {ai, bi}, std::move(out), [=](BasicGraph<T>& gr, int self) {
    const BasicTensor<T>& gy = gr.grad_buffer(self);
    const BasicTensor<T>& aval = gr.value(ai);
    const BasicTensor<T>& bval = gr.value(bi);
    const bool need_a = gr.requires_grad(ai), need_b = gr.requires_grad(bi);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      T da{0}, db{0};
      switch (kind) {
        case OpKind::kAdd: da = gy[i]; db = gy[i]; break;
        case OpKind::kSub: da = gy[i]; db = -gy[i]; break;
        case OpKind::kMul: da = gy[i] * bval[i]; db = gy[i] * aval[i]; break;
        case OpKind::kSmoothL1: {
          const T d = aval[i] - bval[i];
          const T s = std::abs(d) < T{1} ? d : (d > T{0} ? T{1} : T{-1});
          da = gy[i] * s;
          db = -gy[i] * s;
          break;
        }
        default: break;
      }
      if (need_a) gr.grad_buffer(ai)[i] += da;
      if (need_b) gr.grad_buffer(bi)[i] += db;
    }
  });
}

}  // namespace

template <typename T>
Var add(BasicGraph<T>& g, Var a, Var b) {
  return binary_elementwise(g, OpKind::kAdd, a, b, [](T x, T y) { return x + y; });
}

template <typename T>
Var sub(BasicGraph<T>& g, Var a, Var b) {
  return binary_elementwise(g, OpKind::kSub, a, b, [](T x, T y) { return x - y; });
}

template <typename T>
Var mul(BasicGraph<T>& g, Var a, Var b) {
  return binary_elementwise(g, OpKind::kMul, a, b, [](T x, T y) { return x * y; });
}

template <typename T>
Var smooth_l1(BasicGraph<T>& g, Var a, Var b) {
  return binary_elementwise(g, OpKind::kSmoothL1, a, b, [](T x, T y) {
    const T d = std::abs(x - y);
    return d < T{1} ? T{0.5} * d * d : d - T{0.5};
  });
}

template <typename T>
Var scale(BasicGraph<T>& g, Var x, T factor) {
  const BasicTensor<T>& xv = g.value(x);
  BasicTensor<T> out(xv.dims());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * factor;
  const int xi = x.id;
  return g.record(OpKind::kScale, {xi}, std::move(out), [=](BasicGraph<T>& gr, int self) {
    const BasicTensor<T>& gy = gr.grad_buffer(self);
    BasicTensor<T>& gx = gr.grad_buffer(xi);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * factor;
  });
}

template <typename T>
Var sum(BasicGraph<T>& g, Var x) {
  const BasicTensor<T>& xv = g.value(x);
  double s = 0.0;
  for (T v : xv.data()) s += v;
  const int xi = x.id;
  return g.record(OpKind::kSum, {xi}, BasicTensor<T>::scalar(static_cast<T>(s)),
                  [xi](BasicGraph<T>& gr, int self) {
                    const T gy = gr.grad_buffer(self)[0];
                    BasicTensor<T>& gx = gr.grad_buffer(xi);
                    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy;
                  });
}

template <typename T>
Var spatial_mean(BasicGraph<T>& g, Var x) {
  const BasicTensor<T>& xv = g.value(x);
  require_rank4("spatial_mean", "input", xv.dims());
  const int n = xv.batch(), c = xv.channels();
  const std::size_t plane = static_cast<std::size_t>(xv.height()) * xv.width();
  BasicTensor<T> out(Dims{n, c, 1, 1});
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const T* p = &xv.at(b, ch, 0, 0);
      double s = 0.0;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
      out.at(b, ch, 0, 0) = static_cast<T>(s / static_cast<double>(plane));
    }
  }
  const int xi = x.id;
  return g.record(OpKind::kSpatialMean, {xi}, std::move(out), [=](BasicGraph<T>& gr, int self) {
    const BasicTensor<T>& gy = gr.grad_buffer(self);
    BasicTensor<T>& gx = gr.grad_buffer(xi);
    const T inv = static_cast<T>(1.0 / static_cast<double>(plane));
    for (int b = 0; b < n; ++b) {
      for (int ch = 0; ch < c; ++ch) {
        const T v = gy.at(b, ch, 0, 0) * inv;
        T* p = &gx.at(b, ch, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) p[i] += v;
      }
    }
  });
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : p) v /= z;
  return p;
}

template <typename T>
Var softmax_cross_entropy(BasicGraph<T>& g, Var logits, std::span<const int> labels) {
  constexpr std::string_view op = "softmax_cross_entropy";
  const BasicTensor<T>& lv = g.value(logits);
  if (lv.rank() < 2) shape_fail(op, "logits must have rank >= 2, got " + dims_string(lv.dims()));
  const int n = lv.dim(0);
  const int c = static_cast<int>(lv.size() / static_cast<std::size_t>(n));
  if (static_cast<int>(labels.size()) != n) {
    shape_fail(op, std::to_string(labels.size()) + " labels for batch of " + std::to_string(n));
  }
  std::vector<double> probs(lv.size());
  double loss = 0.0;
  for (int b = 0; b < n; ++b) {
    const int label = labels[static_cast<std::size_t>(b)];
    if (label < 0 || label >= c) shape_fail(op, "label " + std::to_string(label) + " outside [0," + std::to_string(c) + ")");
    std::vector<double> row(static_cast<std::size_t>(c));
    for (int k = 0; k < c; ++k) row[static_cast<std::size_t>(k)] = lv[static_cast<std::size_t>(b) * c + k];
    const std::vector<double> p = softmax(row);
    std::copy(p.begin(), p.end(), probs.begin() + static_cast<std::ptrdiff_t>(b) * c);
    loss -= std::log(std::max(p[static_cast<std::size_t>(label)], 1e-300));
  }
  loss /= n;
  std::vector<int> lab(labels.begin(), labels.end());
  const int li = logits.id;
  return g.record(OpKind::kSoftmaxCrossEntropy, {li}, BasicTensor<T>::scalar(static_cast<T>(loss)),
                  [=, probs = std::move(probs)](BasicGraph<T>& gr, int self) {
                    const double gy = gr.grad_buffer(self)[0];
                    BasicTensor<T>& gx = gr.grad_buffer(li);
                    for (int b = 0; b < n; ++b) {
                      for (int k = 0; k < c; ++k) {
                        const std::size_t i = static_cast<std::size_t>(b) * c + k;
                        const double t = (k == lab[static_cast<std::size_t>(b)]) ? 1.0 : 0.0;
                        gx[i] += static_cast<T>(gy * (probs[i] - t) / n);
                      }
                    }
                  });
}

#define CHROMATIX_INSTANTIATE_OPS(T)                                                        \
  template Var conv2d<T>(BasicGraph<T>&, Var, Var, Var, Conv2dOptions);                      \
  template Var conv_transpose2d<T>(BasicGraph<T>&, Var, Var, Var, ConvTranspose2dOptions);   \
  template Var batch_norm<T>(BasicGraph<T>&, Var, Var, Var, BatchNormRunning<T>,             \
                             BatchNormOptions);                                              \
  template Var relu<T>(BasicGraph<T>&, Var);                                                 \
  template Var tanh<T>(BasicGraph<T>&, Var);                                                 \
  template Var concat_channels<T>(BasicGraph<T>&, std::span<const Var>);                     \
  template Var slice_batch<T>(BasicGraph<T>&, Var, int, int);                                \
  template Var upsample_bilinear<T>(BasicGraph<T>&, Var, int, int);                          \
  template Var add<T>(BasicGraph<T>&, Var, Var);                                             \
  template Var sub<T>(BasicGraph<T>&, Var, Var);                                             \
  template Var mul<T>(BasicGraph<T>&, Var, Var);                                             \
  template Var scale<T>(BasicGraph<T>&, Var, T);                                             \
  template Var sum<T>(BasicGraph<T>&, Var);                                                  \
  template Var spatial_mean<T>(BasicGraph<T>&, Var);                                         \
  template Var smooth_l1<T>(BasicGraph<T>&, Var, Var);                                       \
  template Var softmax_cross_entropy<T>(BasicGraph<T>&, Var, std::span<const int>);

CHROMATIX_INSTANTIATE_OPS(float)
CHROMATIX_INSTANTIATE_OPS(double)

}  // namespace chromatix::nn
