#include "osad/autograd.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace osad {
namespace ag {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;

namespace {

void check(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

struct ConvGeom {
  int n, ci, h, w, co, kh, kw, stride;
  int ho, wo, pt, pl;
  std::int64_t cols() const { return static_cast<std::int64_t>(ci) * kh * kw; }
  std::int64_t outhw() const { return static_cast<std::int64_t>(ho) * wo; }
};

ConvGeom conv_geom(const Tensor& x, const Tensor& w, int stride) {
  ConvGeom g;
  g.n = x.size(0);
  g.ci = x.size(1);
  g.h = x.size(2);
  g.w = x.size(3);
  g.co = w.size(0);
  g.kh = w.size(2);
  g.kw = w.size(3);
  g.stride = stride;
  g.ho = conv_out(g.h, stride);
  g.wo = conv_out(g.w, stride);
  int pad_h = std::max(0, (g.ho - 1) * stride + g.kh - g.h);
  int pad_w = std::max(0, (g.wo - 1) * stride + g.kw - g.w);
  g.pt = pad_h / 2;
  g.pl = pad_w / 2;
  return g;
}

// Gathers one sample's receptive fields into [ci*kh*kw, ho*wo].
void im2col(const double* x, const ConvGeom& g, double* col) {
  std::int64_t ohw = g.outhw();
  for (int ci = 0; ci < g.ci; ++ci) {
    const double* xc = x + static_cast<std::int64_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        double* row = col + ((static_cast<std::int64_t>(ci) * g.kh + ky) * g.kw + kx) * ohw;
        for (int oy = 0; oy < g.ho; ++oy) {
          int iy = oy * g.stride + ky - g.pt;
          double* dst = row + static_cast<std::int64_t>(oy) * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          const double* src = xc + static_cast<std::int64_t>(iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            int ix = ox * g.stride + kx - g.pl;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

// Scatter-add transpose of im2col.
void col2im(const double* col, const ConvGeom& g, double* gx) {
  std::int64_t ohw = g.outhw();
  for (int ci = 0; ci < g.ci; ++ci) {
    double* xc = gx + static_cast<std::int64_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        const double* row = col + ((static_cast<std::int64_t>(ci) * g.kh + ky) * g.kw + kx) * ohw;
        for (int oy = 0; oy < g.ho; ++oy) {
          int iy = oy * g.stride + ky - g.pt;
          if (iy < 0 || iy >= g.h) continue;
          double* dst = xc + static_cast<std::int64_t>(iy) * g.w;
          const double* src = row + static_cast<std::int64_t>(oy) * g.wo;
          for (int ox = 0; ox < g.wo; ++ox) {
            int ix = ox * g.stride + kx - g.pl;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& bias, int stride) {
  check(x.val().dim() == 4, "conv2d: input must be [N,C,H,W]");
  check(w.val().dim() == 4, "conv2d: weight must be [Co,Ci,kh,kw]");
  check(x.val().size(1) == w.val().size(1), "conv2d: channel mismatch");
  check(stride >= 1, "conv2d: stride must be >= 1");
  if (bias.defined()) check(bias.val().numel() == w.val().size(0), "conv2d: bias size mismatch");

  ConvGeom g = conv_geom(x.val(), w.val(), stride);
  std::int64_t cols = g.cols(), ohw = g.outhw();
  Tensor out({g.n, g.co, g.ho, g.wo});
  std::vector<double> col(static_cast<size_t>(cols * ohw));
  CMatMap wm(w.val().data(), g.co, cols);
  for (int ni = 0; ni < g.n; ++ni) {
    im2col(x.val().data() + static_cast<std::int64_t>(ni) * g.ci * g.h * g.w, g, col.data());
    MatMap om(out.data() + static_cast<std::int64_t>(ni) * g.co * ohw, g.co, ohw);
    om.noalias() = wm * CMatMap(col.data(), cols, ohw);
    if (bias.defined()) {
      for (int co = 0; co < g.co; ++co) {
        double b = bias.val()[co];
        double* p = out.data() + (static_cast<std::int64_t>(ni) * g.co + co) * ohw;
        for (std::int64_t i = 0; i < ohw; ++i) p[i] += b;
      }
    }
  }

  std::vector<NodePtr> parents = {x.node(), w.node()};
  if (bias.defined()) parents.push_back(bias.node());
  return Var::wrap(detail::make_node(std::move(out), std::move(parents), "conv2d", [g](Node& self) {
    std::int64_t cols = g.cols(), ohw = g.outhw();
    bool want_x = self.parents[0] && self.parents[0]->requires_grad;
    bool want_w = self.parents[1] && self.parents[1]->requires_grad;
    bool want_b = self.parents.size() > 2 && self.parents[2] && self.parents[2]->requires_grad;
    std::vector<double> col;
    if (want_x || want_w) col.resize(static_cast<size_t>(cols * ohw));
    for (int ni = 0; ni < g.n; ++ni) {
      CMatMap go(self.grad.data() + static_cast<std::int64_t>(ni) * g.co * ohw, g.co, ohw);
      if (want_w) {
        im2col(self.parents[0]->value.data() + static_cast<std::int64_t>(ni) * g.ci * g.h * g.w,
               g, col.data());
        MatMap(self.parents[1]->g().data(), g.co, cols).noalias() +=
            go * CMatMap(col.data(), cols, ohw).transpose();
      }
      if (want_x) {
        MatMap(col.data(), cols, ohw).noalias() =
            CMatMap(self.parents[1]->value.data(), g.co, cols).transpose() * go;
        col2im(col.data(), g,
               self.parents[0]->g().data() + static_cast<std::int64_t>(ni) * g.ci * g.h * g.w);
      }
      if (want_b) {
        Tensor& gb = self.parents[2]->g();
        for (int co = 0; co < g.co; ++co) {
          const double* p = self.grad.data() + (static_cast<std::int64_t>(ni) * g.co + co) * ohw;
          double s = 0.0;
          for (std::int64_t i = 0; i < ohw; ++i) s += p[i];
          gb[co] += s;
        }
      }
    }
  }));
}

Var maxpool2d(const Var& x, int k, int stride) {
  check(x.val().dim() == 4, "maxpool2d: input must be [N,C,H,W]");
  int n = x.val().size(0), c = x.val().size(1), h = x.val().size(2), w = x.val().size(3);
  int ho = conv_out(h, stride), wo = conv_out(w, stride);
  int pad_h = std::max(0, (ho - 1) * stride + k - h);
  int pad_w = std::max(0, (wo - 1) * stride + k - w);
  int pt = pad_h / 2, pl = pad_w / 2;
  Tensor out({n, c, ho, wo});
  std::vector<std::int64_t> arg(static_cast<size_t>(out.numel()));
  std::int64_t oi = 0;
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const double* xc = x.val().data() + (static_cast<std::int64_t>(ni) * c + ci) * h * w;
      std::int64_t base = (static_cast<std::int64_t>(ni) * c + ci) * h * w;
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox, ++oi) {
          double best = -1e300;
          std::int64_t bidx = -1;
          for (int ky = 0; ky < k; ++ky) {
            int iy = oy * stride + ky - pt;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < k; ++kx) {
              int ix = ox * stride + kx - pl;
              if (ix < 0 || ix >= w) continue;
              double v = xc[static_cast<std::int64_t>(iy) * w + ix];
              if (v > best) {
                best = v;
                bidx = base + static_cast<std::int64_t>(iy) * w + ix;
              }
            }
          }
          out[oi] = bidx >= 0 ? best : 0.0;
          arg[static_cast<size_t>(oi)] = bidx;
        }
      }
    }
  }
  return Var::wrap(detail::make_node(std::move(out), {x.node()}, "maxpool2d",
                                    [arg = std::move(arg)](Node& self) {
    if (!(self.parents[0] && self.parents[0]->requires_grad)) return;
    Tensor& g = self.parents[0]->g();
    for (std::int64_t i = 0; i < self.grad.numel(); ++i)
      if (arg[static_cast<size_t>(i)] >= 0) g[arg[static_cast<size_t>(i)]] += self.grad[i];
  }));
}

Var upsample_bilinear(const Var& x, int out_h, int out_w) {
  check(x.val().dim() == 4, "upsample_bilinear: input must be [N,C,H,W]");
  check(out_h >= 1 && out_w >= 1, "upsample_bilinear: invalid target size");
  int n = x.val().size(0), c = x.val().size(1), h = x.val().size(2), w = x.val().size(3);
  double sy = static_cast<double>(h) / out_h;
  double sx = static_cast<double>(w) / out_w;
  // Per-axis interpolation taps, shared by forward and backward.
  struct Tap { int i0, i1; double w1; };
  std::vector<Tap> ty(static_cast<size_t>(out_h)), tx(static_cast<size_t>(out_w));
  auto make_tap = [](int o, double scale, int extent) {
    double src = (o + 0.5) * scale - 0.5;
    src = std::min(std::max(src, 0.0), static_cast<double>(extent - 1));
    Tap t;
    t.i0 = static_cast<int>(std::floor(src));
    t.i1 = std::min(t.i0 + 1, extent - 1);
    t.w1 = src - t.i0;
    return t;
  };
  for (int o = 0; o < out_h; ++o) ty[static_cast<size_t>(o)] = make_tap(o, sy, h);
  for (int o = 0; o < out_w; ++o) tx[static_cast<size_t>(o)] = make_tap(o, sx, w);

  Tensor out({n, c, out_h, out_w});
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const double* src = x.val().data() + (static_cast<std::int64_t>(ni) * c + ci) * h * w;
      double* dst = out.data() + (static_cast<std::int64_t>(ni) * c + ci) * out_h * out_w;
      for (int oy = 0; oy < out_h; ++oy) {
        const Tap& a = ty[static_cast<size_t>(oy)];
        for (int ox = 0; ox < out_w; ++ox) {
          const Tap& b = tx[static_cast<size_t>(ox)];
          double v00 = src[static_cast<std::int64_t>(a.i0) * w + b.i0];
          double v01 = src[static_cast<std::int64_t>(a.i0) * w + b.i1];
          double v10 = src[static_cast<std::int64_t>(a.i1) * w + b.i0];
          double v11 = src[static_cast<std::int64_t>(a.i1) * w + b.i1];
          dst[static_cast<std::int64_t>(oy) * out_w + ox] =
              (1 - a.w1) * ((1 - b.w1) * v00 + b.w1 * v01) +
              a.w1 * ((1 - b.w1) * v10 + b.w1 * v11);
        }
      }
    }
  }
  return Var::wrap(detail::make_node(
      std::move(out), {x.node()}, "upsample_bilinear",
      [n, c, h, w, out_h, out_w, ty = std::move(ty), tx = std::move(tx)](Node& self) {
        if (!(self.parents[0] && self.parents[0]->requires_grad)) return;
        Tensor& g = self.parents[0]->g();
        for (int ni = 0; ni < n; ++ni) {
          for (int ci = 0; ci < c; ++ci) {
            double* dst = g.data() + (static_cast<std::int64_t>(ni) * c + ci) * h * w;
            const double* src =
                self.grad.data() + (static_cast<std::int64_t>(ni) * c + ci) * out_h * out_w;
            for (int oy = 0; oy < out_h; ++oy) {
              const auto& a = ty[static_cast<size_t>(oy)];
              for (int ox = 0; ox < out_w; ++ox) {
                const auto& b = tx[static_cast<size_t>(ox)];
                double gv = src[static_cast<std::int64_t>(oy) * out_w + ox];
                dst[static_cast<std::int64_t>(a.i0) * w + b.i0] += (1 - a.w1) * (1 - b.w1) * gv;
                dst[static_cast<std::int64_t>(a.i0) * w + b.i1] += (1 - a.w1) * b.w1 * gv;
                dst[static_cast<std::int64_t>(a.i1) * w + b.i0] += a.w1 * (1 - b.w1) * gv;
                dst[static_cast<std::int64_t>(a.i1) * w + b.i1] += a.w1 * b.w1 * gv;
              }
            }
          }
        }
      }));
}

}  // namespace ag
}  // namespace osad
