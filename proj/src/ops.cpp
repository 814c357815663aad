#include "kneemark/ops.hpp"

#include <cmath>
#include <limits>

namespace kneemark {

namespace {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

struct ConvGeometry {
  int channels, height, width, kernel, stride, padding, out_h, out_w;
  Eigen::Index patches() const { return Eigen::Index(out_h) * out_w; }
  Eigen::Index taps() const { return Eigen::Index(channels) * kernel * kernel; }
  bool pointwise() const { return kernel == 1 && stride == 1 && padding == 0; }
};

// col is (patches x taps), column-major: column (c, ky, kx) holds one shifted copy of channel c.
template <typename Scalar>
void im2col(const Scalar* src, const ConvGeometry& g, Scalar* col) {
  const Eigen::Index patches = g.patches();
  for (int c = 0; c < g.channels; ++c) {
    const Scalar* plane = src + Eigen::Index(c) * g.height * g.width;
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        Scalar* dst = col + (Eigen::Index(c * g.kernel + ky) * g.kernel + kx) * patches;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          Scalar* row = dst + Eigen::Index(oy) * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill(row, row + g.out_w, Scalar(0));
            continue;
          }
          const Scalar* line = plane + Eigen::Index(iy) * g.width;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            row[ox] = (ix >= 0 && ix < g.width) ? line[ix] : Scalar(0);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const Scalar* col, const ConvGeometry& g, Scalar* dst_image) {
  const Eigen::Index patches = g.patches();
  for (int c = 0; c < g.channels; ++c) {
    Scalar* plane = dst_image + Eigen::Index(c) * g.height * g.width;
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        const Scalar* src = col + (Eigen::Index(c * g.kernel + ky) * g.kernel + kx) * patches;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.height) continue;
          Scalar* line = plane + Eigen::Index(iy) * g.width;
          const Scalar* row = src + Eigen::Index(oy) * g.out_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            if (ix >= 0 && ix < g.width) line[ix] += row[ox];
          }
        }
      }
    }
  }
}

template <typename Scalar>
Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> plane_view(const Tensor<Scalar>& t, int n, int c) {
  return {t.plane(n, c), t.shape().plane()};
}

template <typename Scalar>
Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>> plane_view(Tensor<Scalar>& t, int n, int c) {
  return {t.plane(n, c), t.shape().plane()};
}

}  // namespace

template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias, int stride,
                   int padding) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (ws.c != xs.c) {
    throw ShapeError("conv2d: input has " + std::to_string(xs.c) + " channels, kernel expects " +
                     std::to_string(ws.c));
  }
  if (ws.h != ws.w) throw ShapeError("conv2d: kernel must be square, got " + ws.str());
  if (bias.value().size() != ws.n) {
    throw ShapeError("conv2d: bias length " + std::to_string(bias.value().size()) + " != output channels " +
                     std::to_string(ws.n));
  }
  if (stride < 1 || padding < 0) throw InvalidArgument("conv2d: stride must be >= 1 and padding >= 0");
  const int k = ws.h;
  if (xs.h + 2 * padding < k || xs.w + 2 * padding < k) {
    throw ShapeError("conv2d: kernel " + std::to_string(k) + " larger than padded input " + xs.str());
  }
  const ConvGeometry g{xs.c, xs.h, xs.w, k, stride, padding, (xs.h + 2 * padding - k) / stride + 1,
                       (xs.w + 2 * padding - k) / stride + 1};
  const int cout = ws.n;
  Tensor<Scalar> out(Shape{xs.n, cout, g.out_h, g.out_w});

  const Eigen::Index patches = g.patches();
  const Eigen::Index taps = g.taps();
  Eigen::Map<const Mat<Scalar>> kernel(weight.value().data().data(), taps, cout);
  Eigen::Map<const RowVec<Scalar>> b(bias.value().data().data(), cout);
  Mat<Scalar> col;
  if (!g.pointwise()) col.resize(patches, taps);
  for (int n = 0; n < xs.n; ++n) {
    Eigen::Map<Mat<Scalar>> o(out.sample(n), patches, cout);
    if (g.pointwise()) {
      o.noalias() = Eigen::Map<const Mat<Scalar>>(x.value().sample(n), patches, taps) * kernel;
    } else {
      im2col(x.value().sample(n), g, col.data());
      o.noalias() = col * kernel;
    }
    o.rowwise() += b;
  }

  return make_result<Scalar>(std::move(out), {x, weight, bias}, [g, cout](Node<Scalar>& self) {
    auto& xn = *self.parents[0];
    auto& wn = *self.parents[1];
    auto& bn = *self.parents[2];
    const Eigen::Index patches = g.patches();
    const Eigen::Index taps = g.taps();
    Eigen::Map<const Mat<Scalar>> kernel(wn.value.data().data(), taps, cout);
    Mat<Scalar> col;
    Mat<Scalar> dcol;
    if (!g.pointwise()) col.resize(patches, taps);
    for (int n = 0; n < self.value.shape().n; ++n) {
      Eigen::Map<const Mat<Scalar>> dout(self.grad.sample(n), patches, cout);
      if (wn.requires_grad) {
        Eigen::Map<Mat<Scalar>> dw(wn.grad_data().data(), taps, cout);
        if (g.pointwise()) {
          dw.noalias() += Eigen::Map<const Mat<Scalar>>(xn.value.sample(n), patches, taps).transpose() * dout;
        } else {
          im2col(xn.value.sample(n), g, col.data());
          dw.noalias() += col.transpose() * dout;
        }
      }
      if (bn.requires_grad) {
        Eigen::Map<RowVec<Scalar>>(bn.grad_data().data(), cout) += dout.colwise().sum();
      }
      if (xn.requires_grad) {
        xn.grad_data();
        if (g.pointwise()) {
          Eigen::Map<Mat<Scalar>>(xn.grad.sample(n), patches, taps).noalias() += dout * kernel.transpose();
        } else {
          dcol.noalias() = dout * kernel.transpose();
          col2im_add(dcol.data(), g, xn.grad.sample(n));
        }
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> batchnorm2d(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                        Tensor<Scalar>& running_mean, Tensor<Scalar>& running_var, Mode mode,
                        const BatchNormOptions& options) {
  const Shape& xs = x.shape();
  for (const Tensor<Scalar>* t : std::initializer_list<const Tensor<Scalar>*>{&gamma.value(), &beta.value(), &running_mean, &running_var}) {
    if (t->size() != xs.c) {
      throw ShapeError("batchnorm2d: parameter length " + std::to_string(t->size()) + " != channels " +
                       std::to_string(xs.c));
    }
  }
  const Eigen::Index count = Eigen::Index(xs.n) * xs.plane();
  Tensor<Scalar> xhat(xs);
  Tensor<Scalar> out(xs);
  Eigen::Array<Scalar, Eigen::Dynamic, 1> inv_std(xs.c);

  for (int c = 0; c < xs.c; ++c) {
    Scalar mean;
    Scalar var;
    if (mode == Mode::kTrain) {
      Scalar sum = 0;
      for (int n = 0; n < xs.n; ++n) sum += plane_view(x.value(), n, c).sum();
      mean = sum / Scalar(count);
      Scalar sq = 0;
      for (int n = 0; n < xs.n; ++n) sq += (plane_view(x.value(), n, c) - mean).square().sum();
      var = sq / Scalar(count);
      const Scalar m = Scalar(options.momentum);
      const Scalar unbiased = count > 1 ? sq / Scalar(count - 1) : var;
      running_mean.data()[c] = (Scalar(1) - m) * running_mean.data()[c] + m * mean;
      running_var.data()[c] = (Scalar(1) - m) * running_var.data()[c] + m * unbiased;
    } else {
      mean = running_mean.data()[c];
      var = running_var.data()[c];
    }
    inv_std[c] = Scalar(1) / std::sqrt(var + Scalar(options.eps));
    const Scalar g = gamma.value().data()[c];
    const Scalar b = beta.value().data()[c];
    for (int n = 0; n < xs.n; ++n) {
      auto xh = plane_view(xhat, n, c);
      xh = (plane_view(x.value(), n, c) - mean) * inv_std[c];
      plane_view(out, n, c) = xh * g + b;
    }
  }

  return make_result<Scalar>(
      std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), mode, count](Node<Scalar>& self) {
        auto& xn = *self.parents[0];
        auto& gn = *self.parents[1];
        auto& bn = *self.parents[2];
        const Shape& s = self.value.shape();
        for (int c = 0; c < s.c; ++c) {
          Scalar sum_dy = 0;
          Scalar sum_dy_xhat = 0;
          for (int n = 0; n < s.n; ++n) {
            auto dy = plane_view(self.grad, n, c);
            sum_dy += dy.sum();
            sum_dy_xhat += (dy * plane_view(xhat, n, c)).sum();
          }
          if (gn.requires_grad) gn.grad_data()[c] += sum_dy_xhat;
          if (bn.requires_grad) bn.grad_data()[c] += sum_dy;
          if (!xn.requires_grad) continue;
          xn.grad_data();
          const Scalar g = gn.value.data()[c];
          for (int n = 0; n < s.n; ++n) {
            auto dy = plane_view(self.grad, n, c);
            auto dx = plane_view(xn.grad, n, c);
            if (mode == Mode::kTrain) {
              dx += (dy * Scalar(count) - sum_dy - plane_view(xhat, n, c) * sum_dy_xhat) *
                    (g * inv_std[c] / Scalar(count));
            } else {
              dx += dy * (g * inv_std[c]);
            }
          }
        }
      });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x) {
  Tensor<Scalar> out(x.shape(), x.value().data().max(Scalar(0)));
  return make_result<Scalar>(std::move(out), {x}, [](Node<Scalar>& self) {
    auto& xn = *self.parents[0];
    xn.grad_data() += (xn.value.data() > Scalar(0)).select(self.grad.data(), Scalar(0));
  });
}

template <typename Scalar>
Var<Scalar> dropout(const Var<Scalar>& x, double p, Mode mode, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) throw InvalidArgument("dropout: p must lie in [0, 1)");
  if (mode == Mode::kEval || p == 0.0) return x;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const Scalar keep_scale = Scalar(1.0 / (1.0 - p));
  Tensor<Scalar> mask(x.shape());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = uniform(rng) >= p ? keep_scale : Scalar(0);
  Tensor<Scalar> out(x.shape(), x.value().data() * mask.data());
  return make_result<Scalar>(std::move(out), {x}, [mask = std::move(mask)](Node<Scalar>& self) {
    self.parents[0]->grad_data() += self.grad.data() * mask.data();
  });
}

template <typename Scalar>
Var<Scalar> maxpool2(const Var<Scalar>& x) {
  const Shape& xs = x.shape();
  if (xs.h % 2 != 0 || xs.w % 2 != 0) throw ShapeError("maxpool2: spatial sides must be even, got " + xs.str());
  const Shape os{xs.n, xs.c, xs.h / 2, xs.w / 2};
  Tensor<Scalar> out(os);
  std::vector<Eigen::Index> argmax(static_cast<size_t>(os.size()));
  Eigen::Index o = 0;
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < xs.c; ++c) {
      const Scalar* src = x.value().plane(n, c);
      const Eigen::Index base = src - x.value().data().data();
      for (int y = 0; y < os.h; ++y) {
        for (int xx = 0; xx < os.w; ++xx, ++o) {
          Eigen::Index best = Eigen::Index(2 * y) * xs.w + 2 * xx;
          for (Eigen::Index cand : {best + 1, best + xs.w, best + xs.w + 1}) {
            if (src[cand] > src[best]) best = cand;
          }
          out.data()[o] = src[best];
          argmax[static_cast<size_t>(o)] = base + best;
        }
      }
    }
  }
  return make_result<Scalar>(std::move(out), {x}, [argmax = std::move(argmax)](Node<Scalar>& self) {
    auto& dx = self.parents[0]->grad_data();
    for (size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += self.grad.data()[Eigen::Index(i)];
  });
}

template <typename Scalar>
Var<Scalar> upsample_nearest2(const Var<Scalar>& x) {
  const Shape& xs = x.shape();
  const Shape os{xs.n, xs.c, xs.h * 2, xs.w * 2};
  Tensor<Scalar> out(os);
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < xs.c; ++c) {
      for (int y = 0; y < os.h; ++y) {
        for (int xx = 0; xx < os.w; ++xx) out(n, c, y, xx) = x.value()(n, c, y / 2, xx / 2);
      }
    }
  }
  return make_result<Scalar>(std::move(out), {x}, [](Node<Scalar>& self) {
    auto& xn = *self.parents[0];
    xn.grad_data();
    const Shape& s = self.value.shape();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        for (int y = 0; y < s.h; ++y) {
          for (int xx = 0; xx < s.w; ++xx) xn.grad(n, c, y / 2, xx / 2) += self.grad(n, c, y, xx);
        }
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (!(a.shape() == b.shape())) throw ShapeError("add: " + a.shape().str() + " vs " + b.shape().str());
  Tensor<Scalar> out(a.shape(), a.value().data() + b.value().data());
  return make_result<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) p->grad_data() += self.grad.data();
    }
  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& x, Scalar factor) {
  Tensor<Scalar> out(x.shape(), x.value().data() * factor);
  return make_result<Scalar>(std::move(out), {x}, [factor](Node<Scalar>& self) {
    self.parents[0]->grad_data() += self.grad.data() * factor;
  });
}

template <typename Scalar>
Var<Scalar> concat_channels(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_channels: nothing to concatenate");
  Shape os = parts.front().shape();
  os.c = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.n != os.n || s.h != os.h || s.w != os.w) {
      throw ShapeError("concat_channels: " + s.str() + " does not match batch/spatial extents of " +
                       parts.front().shape().str());
    }
    os.c += s.c;
  }
  Tensor<Scalar> out(os);
  for (int n = 0; n < os.n; ++n) {
    Scalar* dst = out.sample(n);
    for (const auto& p : parts) {
      const Eigen::Index len = Eigen::Index(p.shape().c) * p.shape().plane();
      std::copy_n(p.value().sample(n), len, dst);
      dst += len;
    }
  }
  return make_result<Scalar>(std::move(out), parts, [](Node<Scalar>& self) {
    for (int n = 0; n < self.value.shape().n; ++n) {
      const Scalar* src = self.grad.sample(n);
      for (auto& p : self.parents) {
        const Eigen::Index len = Eigen::Index(p->value.shape().c) * p->value.shape().plane();
        if (p->requires_grad) {
          p->grad_data();
          Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(p->grad.sample(n), len) +=
              Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(src, len);
        }
        src += len;
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> weighted_sum(const Var<Scalar>& x, const Tensor<Scalar>& weights) {
  if (!(x.shape() == weights.shape())) {
    throw ShapeError("weighted_sum: " + x.shape().str() + " vs " + weights.shape().str());
  }
  Tensor<Scalar> out = Tensor<Scalar>::constant(Shape{}, (x.value().data() * weights.data()).sum());
  return make_result<Scalar>(std::move(out), {x}, [weights](Node<Scalar>& self) {
    self.parents[0]->grad_data() += weights.data() * self.grad.data()[0];
  });
}

template <typename Scalar>
Var<Scalar> soft_argmax(const Var<Scalar>& h, double beta) {
  const Shape& hs = h.shape();
  if (beta < 0.0) throw InvalidArgument("soft_argmax: beta must be non-negative");
  const Scalar b = Scalar(beta);
  Tensor<Scalar> phi(hs);
  Tensor<Scalar> out(Shape{hs.n, hs.c, 1, 2});
  for (int n = 0; n < hs.n; ++n) {
    for (int c = 0; c < hs.c; ++c) {
      auto src = plane_view(h.value(), n, c);
      auto p = plane_view(phi, n, c);
      p = ((src - src.maxCoeff()) * b).exp();
      p /= p.sum();
      Scalar ex = 0;
      Scalar ey = 0;
      for (int j = 0; j < hs.h; ++j) {
        for (int i = 0; i < hs.w; ++i) {
          const Scalar w = p[Eigen::Index(j) * hs.w + i];
          ex += w * (Scalar(i) / Scalar(hs.w));
          ey += w * (Scalar(j) / Scalar(hs.h));
        }
      }
      out(n, c, 0, 0) = ex;
      out(n, c, 0, 1) = ey;
    }
  }
  return make_result<Scalar>(std::move(out), {h}, [phi = std::move(phi), b](Node<Scalar>& self) {
    auto& hn = *self.parents[0];
    hn.grad_data();
    const Shape& s = phi.shape();
    Eigen::Array<Scalar, Eigen::Dynamic, 1> dphi(s.plane());
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const Scalar gx = self.grad(n, c, 0, 0);
        const Scalar gy = self.grad(n, c, 0, 1);
        for (int j = 0; j < s.h; ++j) {
          for (int i = 0; i < s.w; ++i) {
            dphi[Eigen::Index(j) * s.w + i] = gx * (Scalar(i) / Scalar(s.w)) + gy * (Scalar(j) / Scalar(s.h));
          }
        }
        auto p = plane_view(phi, n, c);
        const Scalar mean = (p * dphi).sum();
        plane_view(hn.grad, n, c) += b * p * (dphi - mean);
      }
    }
  });
}

#define KNEEMARK_INSTANTIATE_OPS(T)                                                                            \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int, int);                           \
  template Var<T> batchnorm2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, Tensor<T>&, Tensor<T>&, Mode,   \
                                 const BatchNormOptions&);                                                     \
  template Var<T> relu<T>(const Var<T>&);                                                                      \
  template Var<T> dropout<T>(const Var<T>&, double, Mode, std::mt19937_64&);                                   \
  template Var<T> maxpool2<T>(const Var<T>&);                                                                  \
  template Var<T> upsample_nearest2<T>(const Var<T>&);                                                         \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                                        \
  template Var<T> scale<T>(const Var<T>&, T);                                                                  \
  template Var<T> concat_channels<T>(const std::vector<Var<T>>&);                                              \
  template Var<T> weighted_sum<T>(const Var<T>&, const Tensor<T>&);                                            \
  template Var<T> soft_argmax<T>(const Var<T>&, double);

KNEEMARK_INSTANTIATE_OPS(float)
KNEEMARK_INSTANTIATE_OPS(double)

}  // namespace kneemark
