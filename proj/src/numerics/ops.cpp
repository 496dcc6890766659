#include "avil/numerics/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace avil::nn {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

void require(bool cond, const std::string& what) {
  if (!cond) throw DimensionError(what);
}

struct ConvGeometry {
  int in_c, in_h, in_w, k, stride, pad, out_h, out_w;
  int patch() const { return in_c * k * k; }
  int pixels() const { return out_h * out_w; }
};

// cols is (C_in*k*k) x (H'*W'), zero where the kernel overhangs the padding.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  const int npix = g.pixels();
  for (int c = 0; c < g.in_c; ++c) {
    for (int ki = 0; ki < g.k; ++ki) {
      for (int kj = 0; kj < g.k; ++kj) {
        T* row = cols + static_cast<std::ptrdiff_t>((c * g.k + ki) * g.k + kj) * npix;
        for (int oi = 0; oi < g.out_h; ++oi) {
          const int ii = oi * g.stride - g.pad + ki;
          T* dst = row + static_cast<std::ptrdiff_t>(oi) * g.out_w;
          if (ii < 0 || ii >= g.in_h) {
            std::fill(dst, dst + g.out_w, T{0});
            continue;
          }
          const T* src = x + (static_cast<std::ptrdiff_t>(c) * g.in_h + ii) * g.in_w;
          for (int oj = 0; oj < g.out_w; ++oj) {
            const int jj = oj * g.stride - g.pad + kj;
            dst[oj] = (jj >= 0 && jj < g.in_w) ? src[jj] : T{0};
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* dx) {
  const int npix = g.pixels();
  for (int c = 0; c < g.in_c; ++c) {
    for (int ki = 0; ki < g.k; ++ki) {
      for (int kj = 0; kj < g.k; ++kj) {
        const T* row = cols + static_cast<std::ptrdiff_t>((c * g.k + ki) * g.k + kj) * npix;
        for (int oi = 0; oi < g.out_h; ++oi) {
          const int ii = oi * g.stride - g.pad + ki;
          if (ii < 0 || ii >= g.in_h) continue;
          const T* src = row + static_cast<std::ptrdiff_t>(oi) * g.out_w;
          T* dst = dx + (static_cast<std::ptrdiff_t>(c) * g.in_h + ii) * g.in_w;
          for (int oj = 0; oj < g.out_w; ++oj) {
            const int jj = oj * g.stride - g.pad + kj;
            if (jj >= 0 && jj < g.in_w) dst[jj] += src[oj];
          }
        }
      }
    }
  }
}

template <typename T>
T sigmoid(T x) {
  return T{1} / (T{1} + std::exp(-x));
}

}  // namespace

template <typename T>
Var conv2d(Tape<T>& tape, Var input, Var weight, Var bias, int stride, int pad) {
  const auto& x = tape.value(input);
  const auto& w = tape.value(weight);
  const auto& b = tape.value(bias);
  require(x.rank() == 3, "conv2d input must be C x H x W, got " + shape_string(x.shape()));
  require(w.rank() == 4, "conv2d weight must be C_out x C_in x k x k, got " + shape_string(w.shape()));
  require(w.dim(1) == x.dim(0), "conv2d channel mismatch: input " + shape_string(x.shape()) + " weight " +
                                    shape_string(w.shape()));
  require(w.dim(2) == w.dim(3) && w.dim(2) % 2 == 1, "conv2d kernel must be square with odd size");
  require(b.rank() == 1 && b.dim(0) == w.dim(0), "conv2d bias must have C_out elements");
  require(stride >= 1 && pad >= 0, "conv2d needs stride >= 1 and pad >= 0");
  const int k = w.dim(2);
  require(x.dim(1) + 2 * pad >= k && x.dim(2) + 2 * pad >= k, "conv2d kernel larger than padded input");

  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), k, stride, pad,
                 conv_output_extent(x.dim(1), k, stride, pad), conv_output_extent(x.dim(2), k, stride, pad)};
  const int out_c = w.dim(0);

  auto cols = std::make_shared<std::vector<T>>(static_cast<std::size_t>(g.patch()) * g.pixels());
  im2col(x.data().data(), g, cols->data());

  BasicTensor<T> out({out_c, g.out_h, g.out_w});
  MatMap<T> y(out.data().data(), out_c, g.pixels());
  ConstMatMap<T> wm(w.data().data(), out_c, g.patch());
  ConstMatMap<T> cm(cols->data(), g.patch(), g.pixels());
  y.noalias() = wm * cm;
  for (int o = 0; o < out_c; ++o) y.row(o).array() += b[static_cast<std::size_t>(o)];

  return tape.push("conv2d", std::move(out), {input, weight, bias}, [=](Tape<T>& t, Var self) {
    const auto& gy = t.grad(self);
    ConstMatMap<T> dy(gy.data().data(), out_c, g.pixels());
    ConstMatMap<T> cmat(cols->data(), g.patch(), g.pixels());
    if (t.requires_grad(weight)) {
      auto& gw = t.grad_accumulator(weight);
      MatMap<T> dw(gw.data().data(), out_c, g.patch());
      dw.noalias() += dy * cmat.transpose();
    }
    if (t.requires_grad(bias)) {
      auto& gb = t.grad_accumulator(bias);
      // Plain loop: Eigen's vectorised sum peels by runtime address, so its
      // rounding would depend on where the allocator put the buffer.
      for (int o = 0; o < out_c; ++o) {
        T acc = 0;
        for (int p = 0; p < g.pixels(); ++p) acc += dy(o, p);
        gb[static_cast<std::size_t>(o)] += acc;
      }
    }
    if (t.requires_grad(input)) {
      const auto& wv = t.value(weight);
      ConstMatMap<T> wmat(wv.data().data(), out_c, g.patch());
      RowMatrix<T> dcols = wmat.transpose() * dy;
      col2im_add(dcols.data(), g, t.grad_accumulator(input).data().data());
    }
  });
}

template <typename T>
Var channel_pool(Tape<T>& tape, Var input, PoolMode mode) {
  const auto& x = tape.value(input);
  require(x.rank() == 3, "channel_pool input must be C x H x W, got " + shape_string(x.shape()));
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  BasicTensor<T> out({1, h, w});

  if (mode == PoolMode::kMax) {
    auto argmax = std::make_shared<std::vector<int>>(plane, 0);
    for (std::size_t p = 0; p < plane; ++p) {
      T best = x[p];
      int best_c = 0;
      for (int ch = 1; ch < c; ++ch) {
        const T v = x[ch * plane + p];
        if (v > best) {
          best = v;
          best_c = ch;
        }
      }
      out[p] = best;
      (*argmax)[p] = best_c;
    }
    return tape.push("channel_max_pool", std::move(out), {input}, [=](Tape<T>& t, Var self) {
      const auto& gy = t.grad(self);
      auto& gx = t.grad_accumulator(input);
      for (std::size_t p = 0; p < plane; ++p) gx[static_cast<std::size_t>((*argmax)[p]) * plane + p] += gy[p];
    });
  }

  const T inv_c = T{1} / static_cast<T>(c);
  for (std::size_t p = 0; p < plane; ++p) {
    T sum{0};
    for (int ch = 0; ch < c; ++ch) sum += x[ch * plane + p];
    out[p] = sum * inv_c;
  }
  return tape.push("channel_avg_pool", std::move(out), {input}, [=](Tape<T>& t, Var self) {
    const auto& gy = t.grad(self);
    auto& gx = t.grad_accumulator(input);
    for (int ch = 0; ch < c; ++ch) {
      for (std::size_t p = 0; p < plane; ++p) gx[ch * plane + p] += gy[p] * inv_c;
    }
  });
}

template <typename T>
Var linear(Tape<T>& tape, Var input, Var weight, Var bias) {
  const auto& x = tape.value(input);
  const auto& w = tape.value(weight);
  const auto& b = tape.value(bias);
  require(x.rank() == 1, "linear input must be a vector, got " + shape_string(x.shape()));
  require(w.rank() == 2 && w.dim(1) == x.dim(0),
          "linear weight " + shape_string(w.shape()) + " incompatible with input " + shape_string(x.shape()));
  require(b.rank() == 1 && b.dim(0) == w.dim(0), "linear bias must have one entry per output");
  const int d = w.dim(0), n = w.dim(1);

  BasicTensor<T> out({d});
  ConstMatMap<T> wm(w.data().data(), d, n);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> xv(x.data().data(), n);
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> yv(out.data().data(), d);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bv(b.data().data(), d);
  yv.noalias() = wm * xv;
  yv += bv;

  return tape.push("linear", std::move(out), {input, weight, bias}, [=](Tape<T>& t, Var self) {
    const auto& gy = t.grad(self);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> dy(gy.data().data(), d);
    if (t.requires_grad(weight)) {
      const auto& xs = t.value(input);
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> xin(xs.data().data(), n);
      MatMap<T> dw(t.grad_accumulator(weight).data().data(), d, n);
      dw.noalias() += dy * xin.transpose();
    }
    if (t.requires_grad(bias)) {
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(t.grad_accumulator(bias).data().data(), d);
      db += dy;
    }
    if (t.requires_grad(input)) {
      const auto& ws = t.value(weight);
      ConstMatMap<T> wmat(ws.data().data(), d, n);
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> dx(t.grad_accumulator(input).data().data(), n);
      dx.noalias() += wmat.transpose() * dy;
    }
  });
}

template <typename T>
Var activation(Tape<T>& tape, Var input, Activation kind) {
  const auto& x = tape.value(input);
  BasicTensor<T> out(x.shape());
  if (kind == Activation::kRelu) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T{0} ? x[i] : T{0};
    return tape.push("relu", std::move(out), {input}, [=](Tape<T>& t, Var self) {
      const auto& gy = t.grad(self);
      const auto& xs = t.value(input);
      auto& gx = t.grad_accumulator(input);
      for (std::size_t i = 0; i < gx.size(); ++i) {
        if (xs[i] > T{0}) gx[i] += gy[i];
      }
    });
  }
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
  return tape.push("sigmoid", std::move(out), {input}, [=](Tape<T>& t, Var self) {
    const auto& gy = t.grad(self);
    const auto& y = t.value(self);
    auto& gx = t.grad_accumulator(input);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * y[i] * (T{1} - y[i]);
  });
}

template <typename T>
Var concat(Tape<T>& tape, std::span<const Var> inputs, std::size_t axis) {
  require(!inputs.empty(), "concat needs at least one input");
  const Shape& first = tape.value(inputs[0]).shape();
  require(axis < first.size(), "concat axis out of range");
  std::vector<int> extents;
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (Var v : inputs) {
    const Shape& s = tape.value(v).shape();
    require(s.size() == first.size(), "concat rank mismatch");
    for (std::size_t a = 0; a < s.size(); ++a) {
      require(a == axis || s[a] == first[a], "concat dimension mismatch: " + shape_string(first) + " vs " +
                                                 shape_string(s));
    }
    extents.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= static_cast<std::size_t>(first[a]);
  for (std::size_t a = axis + 1; a < first.size(); ++a) inner *= static_cast<std::size_t>(first[a]);

  BasicTensor<T> out(out_shape);
  const std::size_t out_row = static_cast<std::size_t>(out_shape[axis]) * inner;
  std::size_t offset = 0;
  for (std::size_t idx = 0; idx < inputs.size(); ++idx) {
    const auto& src = tape.value(inputs[idx]);
    const std::size_t block = static_cast<std::size_t>(extents[idx]) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.data().begin() + static_cast<std::ptrdiff_t>(o * block), block,
                  out.data().begin() + static_cast<std::ptrdiff_t>(o * out_row + offset));
    }
    offset += block;
  }

  std::vector<Var> parents(inputs.begin(), inputs.end());
  return tape.push("concat", std::move(out), parents, [=](Tape<T>& t, Var self) {
    const auto& gy = t.grad(self);
    std::size_t off = 0;
    for (std::size_t idx = 0; idx < parents.size(); ++idx) {
      const std::size_t block = static_cast<std::size_t>(extents[idx]) * inner;
      if (t.requires_grad(parents[idx])) {
        auto& gx = t.grad_accumulator(parents[idx]);
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t e = 0; e < block; ++e) gx[o * block + e] += gy[o * out_row + off + e];
        }
      }
      off += block;
    }
  });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const auto& x = tape.value(a);
  const auto& y = tape.value(b);
  require(x.shape() == y.shape(), "add shape mismatch: " + shape_string(x.shape()) + " vs " + shape_string(y.shape()));
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return tape.push("add", std::move(out), {a, b}, [=](Tape<T>& t, Var self) {
    const auto& gy = t.grad(self);
    for (Var p : {a, b}) {
      if (!t.requires_grad(p)) continue;
      auto& gx = t.grad_accumulator(p);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
    }
  });
}

template <typename T>
Var reshape(Tape<T>& tape, Var input, Shape shape) {
  BasicTensor<T> out = tape.value(input).reshaped(std::move(shape));
  return tape.push("reshape", std::move(out), {input}, [=](Tape<T>& t, Var self) {
    const auto& gy = t.grad(self);
    auto& gx = t.grad_accumulator(input);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
  });
}

template <typename T>
Var bce_loss(Tape<T>& tape, Var pred, const BasicTensor<T>& target) {
  const auto& p = tape.value(pred);
  require(p.shape() == target.shape(), "bce_loss shape mismatch: " + shape_string(p.shape()) + " vs " +
                                           shape_string(target.shape()));
  for (T v : target.data()) {
    if (v != T{0} && v != T{1}) throw DomainError("bce_loss targets must be 0 or 1");
  }
  const T lo = static_cast<T>(kBceEpsilon);
  const T hi = T{1} - lo;
  const std::size_t n = p.size();
  // Accumulate in double so float and double runs see the same reduction order.
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const T q = std::clamp(p[i], lo, hi);
    sum -= target[i] == T{1} ? std::log(static_cast<double>(q)) : std::log1p(-static_cast<double>(q));
  }
  BasicTensor<T> out({1}, static_cast<T>(sum / static_cast<double>(n)));
  auto tgt = std::make_shared<BasicTensor<T>>(target);
  return tape.push("bce_loss", std::move(out), {pred}, [=](Tape<T>& t, Var self) {
    const T scale = t.grad(self)[0] / static_cast<T>(n);
    const auto& pv = t.value(pred);
    auto& gp = t.grad_accumulator(pred);
    for (std::size_t i = 0; i < n; ++i) {
      const T q = pv[i];
      if (q < lo || q > hi) continue;
      gp[i] += scale * ((*tgt)[i] == T{1} ? -T{1} / q : T{1} / (T{1} - q));
    }
  });
}

template <typename T>
Var mse_loss(Tape<T>& tape, Var pred, const BasicTensor<T>& target) {
  const auto& p = tape.value(pred);
  require(p.shape() == target.shape(), "mse_loss shape mismatch: " + shape_string(p.shape()) + " vs " +
                                           shape_string(target.shape()));
  const std::size_t n = p.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(target[i]);
    sum += d * d;
  }
  BasicTensor<T> out({1}, static_cast<T>(sum / static_cast<double>(n)));
  auto tgt = std::make_shared<BasicTensor<T>>(target);
  return tape.push("mse_loss", std::move(out), {pred}, [=](Tape<T>& t, Var self) {
    const T scale = T{2} * t.grad(self)[0] / static_cast<T>(n);
    const auto& pv = t.value(pred);
    auto& gp = t.grad_accumulator(pred);
    for (std::size_t i = 0; i < n; ++i) gp[i] += scale * (pv[i] - (*tgt)[i]);
  });
}

#define AVIL_INSTANTIATE_OPS(T)                                                         \
  template Var conv2d<T>(Tape<T>&, Var, Var, Var, int, int);                            \
  template Var channel_pool<T>(Tape<T>&, Var, PoolMode);                                \
  template Var linear<T>(Tape<T>&, Var, Var, Var);                                      \
  template Var activation<T>(Tape<T>&, Var, Activation);                                \
  template Var concat<T>(Tape<T>&, std::span<const Var>, std::size_t);                  \
  template Var add<T>(Tape<T>&, Var, Var);                                              \
  template Var reshape<T>(Tape<T>&, Var, Shape);                                        \
  template Var bce_loss<T>(Tape<T>&, Var, const BasicTensor<T>&);                       \
  template Var mse_loss<T>(Tape<T>&, Var, const BasicTensor<T>&);

AVIL_INSTANTIATE_OPS(float)
AVIL_INSTANTIATE_OPS(double)

#undef AVIL_INSTANTIATE_OPS

}  // namespace avil::nn
