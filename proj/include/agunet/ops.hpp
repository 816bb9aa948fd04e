#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "agunet/autograd.hpp"

namespace agunet {

struct Conv2dOptions {
  Index stride = 1;
  Index padding = 0;
  Index groups = 1;
};

namespace detail {

inline Index conv_out(Index in, Index kernel, Index stride, Index pad) { return (in + 2 * pad - kernel) / stride + 1; }

// Unfolds `channels` planes into a (channels*kh*kw) x (ho*wo) row-major matrix.
template <typename Scalar>
void im2col(const Scalar* src, Index channels, Index h, Index w, Index kh, Index kw, Index stride, Index pad,
            Index ho, Index wo, Scalar* col) {
  for (Index c = 0; c < channels; ++c) {
    const Scalar* plane = src + c * h * w;
    for (Index ki = 0; ki < kh; ++ki) {
      for (Index kj = 0; kj < kw; ++kj) {
        Scalar* dst = col + ((c * kh + ki) * kw + kj) * ho * wo;
        for (Index oy = 0; oy < ho; ++oy) {
          const Index iy = oy * stride - pad + ki;
          Scalar* row = dst + oy * wo;
          if (iy < 0 || iy >= h) {
            std::fill(row, row + wo, Scalar(0));
            continue;
          }
          const Scalar* line = plane + iy * w;
          for (Index ox = 0; ox < wo; ++ox) {
            const Index ix = ox * stride - pad + kj;
            row[ox] = (ix >= 0 && ix < w) ? line[ix] : Scalar(0);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const Scalar* col, Index channels, Index h, Index w, Index kh, Index kw, Index stride, Index pad,
                Index ho, Index wo, Scalar* dst) {
  for (Index c = 0; c < channels; ++c) {
    Scalar* plane = dst + c * h * w;
    for (Index ki = 0; ki < kh; ++ki) {
      for (Index kj = 0; kj < kw; ++kj) {
        const Scalar* src = col + ((c * kh + ki) * kw + kj) * ho * wo;
        for (Index oy = 0; oy < ho; ++oy) {
          const Index iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= h) continue;
          Scalar* line = plane + iy * w;
          const Scalar* row = src + oy * wo;
          for (Index ox = 0; ox < wo; ++ox) {
            const Index ix = ox * stride - pad + kj;
            if (ix >= 0 && ix < w) line[ix] += row[ox];
          }
        }
      }
    }
  }
}

inline void require_same(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) throw ConfigurationError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
}

}  // namespace detail

/// Grouped 2-D cross-correlation. `weight` is (out, in/groups, kh, kw);
/// `bias` may be undefined, otherwise (1, out, 1, 1).
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias,
                   const Conv2dOptions& opt = {}) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  const Index groups = opt.groups;
  if (groups < 1 || ws.n % groups != 0 || xs.c != ws.c * groups) {
    throw ConfigurationError("conv2d: input has " + std::to_string(xs.c) + " channels, weight " + ws.str() +
                             " with " + std::to_string(groups) + " groups");
  }
  if (bias.defined() && !(bias.shape() == Shape{1, ws.n, 1, 1})) {
    throw ConfigurationError("conv2d: bias shape " + bias.shape().str());
  }
  const Index ho = detail::conv_out(xs.h, ws.h, opt.stride, opt.padding);
  const Index wo = detail::conv_out(xs.w, ws.w, opt.stride, opt.padding);
  if (ho < 1 || wo < 1) throw ConfigurationError("conv2d: input " + xs.str() + " smaller than kernel " + ws.str());

  const Index cin_g = ws.c;
  const Index cout_g = ws.n / groups;
  const Index K = cin_g * ws.h * ws.w;
  const Index P = ho * wo;
  const bool direct = ws.h == 1 && ws.w == 1 && opt.stride == 1 && opt.padding == 0;

  Tensor<Scalar> out(Shape{xs.n, ws.n, ho, wo});
  RowMatrix<Scalar> col(direct ? 0 : K, direct ? 0 : P);
  const Tensor<Scalar>& xv = x.value();
  const Tensor<Scalar>& wv = weight.value();
  for (Index n = 0; n < xs.n; ++n) {
    for (Index g = 0; g < groups; ++g) {
      const Scalar* src = xv.plane(n, g * cin_g);
      Eigen::Map<const RowMatrix<Scalar>> wg(wv.data() + g * cout_g * K, cout_g, K);
      Eigen::Map<RowMatrix<Scalar>> yg(out.plane(n, g * cout_g), cout_g, P);
      if (direct) {
        yg.noalias() = wg * Eigen::Map<const RowMatrix<Scalar>>(src, K, P);
      } else {
        detail::im2col(src, cin_g, xs.h, xs.w, ws.h, ws.w, opt.stride, opt.padding, ho, wo, col.data());
        yg.noalias() = wg * col;
      }
      if (bias.defined()) yg.colwise() += bias.value().flat().segment(g * cout_g, cout_g);
    }
  }

  return make_result<Scalar>(std::move(out), {x, weight, bias.defined() ? bias : weight},
                             [x, weight, bias, opt, ho, wo, cin_g, cout_g, K, P, direct](Node<Scalar>& self) {
    const Shape xs = x.shape();
    const Shape ws = weight.shape();
    const Tensor<Scalar>& gy = self.grad;
    if (bias.defined() && bias.requires_grad()) {
      auto& gb = bias.mutable_grad().flat();
      for (Index n = 0; n < xs.n; ++n) gb += gy.sample(n).rowwise().sum();
    }
    const bool need_w = weight.requires_grad();
    const bool need_x = x.requires_grad();
    if (!need_w && !need_x) return;
    RowMatrix<Scalar> col(direct ? 0 : K, direct ? 0 : P);
    RowMatrix<Scalar> dcol(direct ? 0 : K, direct ? 0 : P);
    const Tensor<Scalar>& xv = x.value();
    const Tensor<Scalar>& wv = weight.value();
    for (Index n = 0; n < xs.n; ++n) {
      for (Index g = 0; g < opt.groups; ++g) {
        const Scalar* src = xv.plane(n, g * cin_g);
        Eigen::Map<const RowMatrix<Scalar>> wg(wv.data() + g * cout_g * K, cout_g, K);
        Eigen::Map<const RowMatrix<Scalar>> gyg(gy.plane(n, g * cout_g), cout_g, P);
        if (need_w) {
          Eigen::Map<RowMatrix<Scalar>> gw(weight.mutable_grad().data() + g * cout_g * K, cout_g, K);
          if (direct) {
            gw.noalias() += gyg * Eigen::Map<const RowMatrix<Scalar>>(src, K, P).transpose();
          } else {
            detail::im2col(src, cin_g, xs.h, xs.w, ws.h, ws.w, opt.stride, opt.padding, ho, wo, col.data());
            gw.noalias() += gyg * col.transpose();
          }
        }
        if (need_x) {
          Scalar* gx = x.mutable_grad().plane(n, g * cin_g);
          if (direct) {
            Eigen::Map<RowMatrix<Scalar>>(gx, K, P).noalias() += wg.transpose() * gyg;
          } else {
            dcol.noalias() = wg.transpose() * gyg;
            detail::col2im_add(dcol.data(), cin_g, xs.h, xs.w, ws.h, ws.w, opt.stride, opt.padding, ho, wo, gx);
          }
        }
      }
    }
  });
}

/// Per-channel normalisation followed by the learnable scale/shift
/// y = gamma * xhat + beta. In training mode batch statistics are used and
/// the running buffers are updated in place.
template <typename Scalar>
Var<Scalar> batch_norm(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                       const Var<Scalar>& running_mean, const Var<Scalar>& running_var, bool training,
                       Scalar momentum = Scalar(0.1), Scalar eps = Scalar(1e-5)) {
  const Shape xs = x.shape();
  const Shape cs{1, xs.c, 1, 1};
  detail::require_same(gamma.shape(), cs, "batch_norm gamma");
  detail::require_same(beta.shape(), cs, "batch_norm beta");
  const Index M = xs.n * xs.plane();
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  Array mean(xs.c), inv_std(xs.c);
  if (training) {
    mean.setZero();
    Array sq = Array::Zero(xs.c);
    for (Index n = 0; n < xs.n; ++n) mean += x.value().sample(n).rowwise().sum().array();
    mean /= Scalar(M);
    for (Index n = 0; n < xs.n; ++n) {
      sq += (x.value().sample(n).array().colwise() - mean).square().rowwise().sum();
    }
    const Array var = sq / Scalar(M);
    inv_std = (var + eps).rsqrt();
    auto rm = running_mean.mutable_value().flat().array();
    auto rv = running_var.mutable_value().flat().array();
    const Scalar unbias = M > 1 ? Scalar(M) / Scalar(M - 1) : Scalar(1);
    rm = (Scalar(1) - momentum) * rm + momentum * mean;
    rv = (Scalar(1) - momentum) * rv + momentum * var * unbias;
  } else {
    mean = running_mean.value().flat().array();
    inv_std = (running_var.value().flat().array() + eps).rsqrt();
  }
  auto xhat = std::make_shared<Tensor<Scalar>>(xs);
  Tensor<Scalar> out(xs);
  const Array g = gamma.value().flat().array();
  const Array b = beta.value().flat().array();
  for (Index n = 0; n < xs.n; ++n) {
    auto xh = xhat->sample(n);
    xh.array() = (x.value().sample(n).array().colwise() - mean).colwise() * inv_std;
    out.sample(n).array() = (xh.array().colwise() * g).colwise() + b;
  }
  return make_result<Scalar>(std::move(out), {x, gamma, beta}, [x, gamma, beta, xhat, inv_std, training, M](Node<Scalar>& self) {
    const Shape xs = x.shape();
    const Tensor<Scalar>& gy = self.grad;
    Array sum_gy = Array::Zero(xs.c), sum_gy_xhat = Array::Zero(xs.c);
    for (Index n = 0; n < xs.n; ++n) {
      sum_gy += gy.sample(n).array().rowwise().sum();
      sum_gy_xhat += (gy.sample(n).array() * xhat->sample(n).array()).rowwise().sum();
    }
    if (gamma.requires_grad()) gamma.mutable_grad().flat().array() += sum_gy_xhat;
    if (beta.requires_grad()) beta.mutable_grad().flat().array() += sum_gy;
    if (!x.requires_grad()) return;
    const Array scale = gamma.value().flat().array() * inv_std;
    auto& gx = x.mutable_grad();
    for (Index n = 0; n < xs.n; ++n) {
      if (training) {
        const Array mean_gy = sum_gy / Scalar(M);
        const Array mean_gy_xhat = sum_gy_xhat / Scalar(M);
        gx.sample(n).array() += ((gy.sample(n).array().colwise() - mean_gy) -
                                 xhat->sample(n).array().colwise() * mean_gy_xhat)
                                    .colwise() *
                                scale;
      } else {
        gx.sample(n).array() += gy.sample(n).array().colwise() * scale;
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x) {
  Tensor<Scalar> out(x.shape());
  out.flat() = x.value().flat().cwiseMax(Scalar(0));
  return make_result<Scalar>(std::move(out), {x}, [x](Node<Scalar>& self) {
    x.mutable_grad().flat().array() +=
        (x.value().flat().array() > Scalar(0)).select(self.grad.flat().array(), Scalar(0));
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  Tensor<Scalar> out(x.shape());
  out.flat().array() = (Scalar(1) + (-x.value().flat().array()).exp()).inverse();
  return make_result<Scalar>(std::move(out), {x}, [x](Node<Scalar>& self) {
    const auto y = self.value.flat().array();
    x.mutable_grad().flat().array() += self.grad.flat().array() * y * (Scalar(1) - y);
  });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same(a.shape(), b.shape(), "add");
  Tensor<Scalar> out(a.shape(), a.value().flat() + b.value().flat());
  return make_result<Scalar>(std::move(out), {a, b}, [a, b](Node<Scalar>& self) {
    if (a.requires_grad()) a.mutable_grad().flat() += self.grad.flat();
    if (b.requires_grad()) b.mutable_grad().flat() += self.grad.flat();
  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& x, Scalar factor) {
  Tensor<Scalar> out(x.shape(), x.value().flat() * factor);
  return make_result<Scalar>(std::move(out), {x}, [x, factor](Node<Scalar>& self) {
    x.mutable_grad().flat() += self.grad.flat() * factor;
  });
}

/// Elementwise a * b where b broadcasts over a. Supported gate layouts:
/// (N|1, C|1, 1, 1) per-channel scalars and (N|1, 1, H, W) spatial maps.
template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  const Shape as = a.shape();
  const Shape bs = b.shape();
  const bool b_scalar_plane = bs.h == 1 && bs.w == 1;
  const bool ok = (bs.n == as.n || bs.n == 1) && (bs.c == as.c || bs.c == 1) &&
                  (b_scalar_plane || (bs.h == as.h && bs.w == as.w));
  if (!ok) throw ConfigurationError("mul: cannot broadcast " + bs.str() + " over " + as.str());
  auto b_index = [bs](Index n, Index c) { return (bs.n == 1 ? 0 : n) * bs.c + (bs.c == 1 ? 0 : c); };
  const Index P = as.plane();
  Tensor<Scalar> out(as);
  for (Index n = 0; n < as.n; ++n) {
    for (Index c = 0; c < as.c; ++c) {
      Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> ap(a.value().plane(n, c), P);
      Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>> op(out.plane(n, c), P);
      const Scalar* bp = b.value().data() + b_index(n, c) * bs.plane();
      if (b_scalar_plane) {
        op = ap * bp[0];
      } else {
        op = ap * Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(bp, P);
      }
    }
  }
  return make_result<Scalar>(std::move(out), {a, b}, [a, b, b_index, b_scalar_plane](Node<Scalar>& self) {
    const Shape as = a.shape();
    const Shape bs = b.shape();
    const Index P = as.plane();
    using ArrayMap = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
    using ConstArrayMap = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
    for (Index n = 0; n < as.n; ++n) {
      for (Index c = 0; c < as.c; ++c) {
        ConstArrayMap gp(self.grad.plane(n, c), P);
        const Index bi = b_index(n, c) * bs.plane();
        if (a.requires_grad()) {
          ArrayMap ga(a.mutable_grad().plane(n, c), P);
          if (b_scalar_plane) {
            ga += gp * b.value().data()[bi];
          } else {
            ga += gp * ConstArrayMap(b.value().data() + bi, P);
          }
        }
        if (b.requires_grad()) {
          ConstArrayMap ap(a.value().plane(n, c), P);
          if (b_scalar_plane) {
            b.mutable_grad().data()[bi] += (gp * ap).sum();
          } else {
            ArrayMap(b.mutable_grad().data() + bi, P) += gp * ap;
          }
        }
      }
    }
  });
}

/// (N, C, H, W) -> (N, C, 1, 1) spatial mean.
template <typename Scalar>
Var<Scalar> global_avg_pool(const Var<Scalar>& x) {
  const Shape xs = x.shape();
  Tensor<Scalar> out(Shape{xs.n, xs.c, 1, 1});
  for (Index n = 0; n < xs.n; ++n) out.sample(n).col(0) = x.value().sample(n).rowwise().mean();
  return make_result<Scalar>(std::move(out), {x}, [x](Node<Scalar>& self) {
    const Shape xs = x.shape();
    const Scalar inv = Scalar(1) / Scalar(xs.plane());
    for (Index n = 0; n < xs.n; ++n) {
      x.mutable_grad().sample(n).colwise() += self.grad.sample(n).col(0) * inv;
    }
  });
}

/// (N, C, H, W) -> (N, 2, H, W): channel-wise mean in channel 0, max in channel 1.
template <typename Scalar>
Var<Scalar> channel_mean_max(const Var<Scalar>& x) {
  const Shape xs = x.shape();
  const Index P = xs.plane();
  Tensor<Scalar> out(Shape{xs.n, 2, xs.h, xs.w});
  auto argmax = std::make_shared<std::vector<Index>>(xs.n * P);
  for (Index n = 0; n < xs.n; ++n) {
    const auto s = x.value().sample(n);
    out.sample(n).row(0) = s.colwise().mean();
    for (Index p = 0; p < P; ++p) {
      Index best = 0;
      out.sample(n)(1, p) = s.col(p).maxCoeff(&best);
      (*argmax)[n * P + p] = best;
    }
  }
  return make_result<Scalar>(std::move(out), {x}, [x, argmax](Node<Scalar>& self) {
    const Shape xs = x.shape();
    const Index P = xs.plane();
    const Scalar inv = Scalar(1) / Scalar(xs.c);
    for (Index n = 0; n < xs.n; ++n) {
      auto gx = x.mutable_grad().sample(n);
      const auto gy = self.grad.sample(n);
      gx.rowwise() += gy.row(0) * inv;
      for (Index p = 0; p < P; ++p) gx((*argmax)[n * P + p], p) += gy(1, p);
    }
  });
}

template <typename Scalar>
Var<Scalar> concat_channels(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw UsageError("concat_channels: no inputs");
  Shape os = parts.front().shape();
  os.c = 0;
  for (const auto& p : parts) {
    const Shape s = p.shape();
    if (s.n != os.n || s.h != os.h || s.w != os.w) {
      throw ConfigurationError("concat_channels: incompatible " + s.str() + " vs " + parts.front().shape().str());
    }
    os.c += s.c;
  }
  if (parts.size() == 1) return parts.front();
  Tensor<Scalar> out(os);
  for (Index n = 0; n < os.n; ++n) {
    Index c0 = 0;
    for (const auto& p : parts) {
      out.sample(n).middleRows(c0, p.shape().c) = p.value().sample(n);
      c0 += p.shape().c;
    }
  }
  return make_result<Scalar>(std::move(out), parts, [parts](Node<Scalar>& self) {
    for (Index n = 0; n < self.value.shape().n; ++n) {
      Index c0 = 0;
      for (const auto& p : parts) {
        if (p.requires_grad()) p.mutable_grad().sample(n) += self.grad.sample(n).middleRows(c0, p.shape().c);
        c0 += p.shape().c;
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> slice_channels(const Var<Scalar>& x, Index begin, Index count) {
  const Shape xs = x.shape();
  if (begin < 0 || count < 1 || begin + count > xs.c) {
    throw UsageError("slice_channels: [" + std::to_string(begin) + ", +" + std::to_string(count) + ") of " + xs.str());
  }
  Tensor<Scalar> out(Shape{xs.n, count, xs.h, xs.w});
  for (Index n = 0; n < xs.n; ++n) out.sample(n) = x.value().sample(n).middleRows(begin, count);
  return make_result<Scalar>(std::move(out), {x}, [x, begin, count](Node<Scalar>& self) {
    for (Index n = 0; n < x.shape().n; ++n) x.mutable_grad().sample(n).middleRows(begin, count) += self.grad.sample(n);
  });
}

/// Softmax across the channel axis at every (n, h, w).
template <typename Scalar>
Var<Scalar> softmax_channels(const Var<Scalar>& x) {
  const Shape xs = x.shape();
  Tensor<Scalar> out(xs);
  for (Index n = 0; n < xs.n; ++n) {
    auto y = out.sample(n);
    y = x.value().sample(n).rowwise() - x.value().sample(n).colwise().maxCoeff();
    y = y.array().exp().matrix();
    y.array().rowwise() /= y.colwise().sum().array();
  }
  return make_result<Scalar>(std::move(out), {x}, [x](Node<Scalar>& self) {
    for (Index n = 0; n < x.shape().n; ++n) {
      const auto y = self.value.sample(n).array();
      const auto gy = self.grad.sample(n).array();
      const auto dot = (y * gy).colwise().sum();
      x.mutable_grad().sample(n).array() += y * (gy.rowwise() - dot);
    }
  });
}

/// 2x2 max pooling with stride 2; spatial dims must be even.
template <typename Scalar>
Var<Scalar> max_pool2x2(const Var<Scalar>& x) {
  const Shape xs = x.shape();
  if (xs.h % 2 != 0 || xs.w % 2 != 0) throw ConfigurationError("max_pool2x2: odd spatial dims " + xs.str());
  const Shape os{xs.n, xs.c, xs.h / 2, xs.w / 2};
  Tensor<Scalar> out(os);
  auto argmax = std::make_shared<std::vector<Index>>(os.size());
  for (Index n = 0; n < xs.n; ++n) {
    for (Index c = 0; c < xs.c; ++c) {
      const Scalar* src = x.value().plane(n, c);
      Scalar* dst = out.plane(n, c);
      Index* arg = argmax->data() + out.offset(n, c, 0, 0);
      for (Index oy = 0; oy < os.h; ++oy) {
        for (Index ox = 0; ox < os.w; ++ox) {
          Index best = (2 * oy) * xs.w + 2 * ox;
          for (Index dy = 0; dy < 2; ++dy) {
            for (Index dx = 0; dx < 2; ++dx) {
              const Index idx = (2 * oy + dy) * xs.w + 2 * ox + dx;
              if (src[idx] > src[best]) best = idx;
            }
          }
          dst[oy * os.w + ox] = src[best];
          arg[oy * os.w + ox] = best;
        }
      }
    }
  }
  return make_result<Scalar>(std::move(out), {x}, [x, argmax](Node<Scalar>& self) {
    const Shape os = self.value.shape();
    for (Index n = 0; n < os.n; ++n) {
      for (Index c = 0; c < os.c; ++c) {
        Scalar* gx = x.mutable_grad().plane(n, c);
        const Scalar* gy = self.grad.plane(n, c);
        const Index* arg = argmax->data() + self.value.offset(n, c, 0, 0);
        for (Index p = 0; p < os.plane(); ++p) gx[arg[p]] += gy[p];
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> upsample_nearest2x(const Var<Scalar>& x) {
  const Shape xs = x.shape();
  const Shape os{xs.n, xs.c, xs.h * 2, xs.w * 2};
  Tensor<Scalar> out(os);
  for (Index n = 0; n < xs.n; ++n) {
    for (Index c = 0; c < xs.c; ++c) {
      const Scalar* src = x.value().plane(n, c);
      Scalar* dst = out.plane(n, c);
      for (Index y = 0; y < os.h; ++y) {
        for (Index xx = 0; xx < os.w; ++xx) dst[y * os.w + xx] = src[(y / 2) * xs.w + xx / 2];
      }
    }
  }
  return make_result<Scalar>(std::move(out), {x}, [x](Node<Scalar>& self) {
    const Shape os = self.value.shape();
    const Shape xs = x.shape();
    for (Index n = 0; n < os.n; ++n) {
      for (Index c = 0; c < os.c; ++c) {
        Scalar* gx = x.mutable_grad().plane(n, c);
        const Scalar* gy = self.grad.plane(n, c);
        for (Index y = 0; y < os.h; ++y) {
          for (Index xx = 0; xx < os.w; ++xx) gx[(y / 2) * xs.w + xx / 2] += gy[y * os.w + xx];
        }
      }
    }
  });
}

/// Sum of all elements as a (1, 1, 1, 1) value.
template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  Tensor<Scalar> out(Shape{1, 1, 1, 1}, x.value().flat().sum());
  return make_result<Scalar>(std::move(out), {x}, [x](Node<Scalar>& self) {
    x.mutable_grad().flat().array() += self.grad.flat()[0];
  });
}

/// Inner product with a constant tensor, as a (1, 1, 1, 1) value. Used to
/// project outputs onto fixed random directions in gradient checks.
template <typename Scalar>
Var<Scalar> dot_constant(const Var<Scalar>& x, const Tensor<Scalar>& direction) {
  detail::require_same(x.shape(), direction.shape(), "dot_constant");
  Tensor<Scalar> out(Shape{1, 1, 1, 1}, x.value().flat().dot(direction.flat()));
  return make_result<Scalar>(std::move(out), {x}, [x, direction](Node<Scalar>& self) {
    x.mutable_grad().flat() += direction.flat() * self.grad.flat()[0];
  });
}

}  // namespace agunet
