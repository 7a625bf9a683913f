#include "ecgr/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ecgr/error.hpp"
#include "ecgr/rng.hpp"

namespace ecgr::ad {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <class T>
Tensor<T>::Tensor(Shape shape, T fill, bool requires_grad) : s_(std::make_shared<Storage>()) {
  s_->data.assign(numel(shape), fill);
  s_->shape = std::move(shape);
  s_->requires_grad = requires_grad;
}

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : s_(std::make_shared<Storage>()) {
  if (data.size() != numel(shape)) {
    fail(ErrorKind::kShapeMismatch, "tensor data does not match shape " + shape_str(shape));
  }
  s_->shape = std::move(shape);
  s_->data = std::move(data);
  s_->requires_grad = requires_grad;
}

template <class T>
std::span<T> Tensor<T>::grad() const {
  if (s_->grad.empty()) s_->grad.assign(s_->data.size(), T(0));
  return s_->grad;
}

template <class T>
void Tensor<T>::zero_grad() const {
  std::fill(s_->grad.begin(), s_->grad.end(), T(0));
}

template <class T>
Tensor<T> Tensor<T>::clone() const {
  Tensor<T> out(s_->shape, s_->data, s_->requires_grad);
  out.s_->grad = s_->grad;
  return out;
}

template <class T>
void Tape<T>::backward(Tensor<T>& loss) {
  if (loss.size() != 1) fail(ErrorKind::kShapeMismatch, "backward expects a scalar loss");
  loss.grad()[0] = T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  nodes_.clear();
}

namespace {

template <class T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Map = Eigen::Map<MatRM<T>>;
template <class T>
using CMap = Eigen::Map<const MatRM<T>>;

template <class T>
bool wants_grad(Tape<T>* tape, std::initializer_list<const Tensor<T>*> inputs) {
  if (!tape) return false;
  for (const Tensor<T>* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

template <class T>
bool needs(const Tensor<T>& t) {
  return t.defined() && t.requires_grad();
}

void expect(bool cond, const std::string& msg) {
  if (!cond) fail(ErrorKind::kShapeMismatch, msg);
}

struct ConvDims {
  std::size_t channels, height, width;  // conv input geometry
  std::size_t kh, kw;
  Geometry2d geo;
  std::size_t out_h, out_w;             // conv output geometry
};

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  expect(in + 2 * pad >= k, "convolution kernel larger than padded input");
  return (in + 2 * pad - k) / stride + 1;
}

// cols[(c*kh + i)*kw + j][oh*out_w + ow] = x[c][oh*sh + i - ph][ow*sw + j - pw]
template <class T>
void im2col(const T* x, const ConvDims& d, T* cols) {
  const std::size_t plane = d.out_h * d.out_w;
  for (std::size_t c = 0; c < d.channels; ++c) {
    for (std::size_t i = 0; i < d.kh; ++i) {
      for (std::size_t j = 0; j < d.kw; ++j) {
        T* dst = cols + ((c * d.kh + i) * d.kw + j) * plane;
        for (std::size_t oh = 0; oh < d.out_h; ++oh) {
          const auto hi = static_cast<std::ptrdiff_t>(oh * d.geo.stride_h + i) -
                          static_cast<std::ptrdiff_t>(d.geo.pad_h);
          T* row = dst + oh * d.out_w;
          if (hi < 0 || hi >= static_cast<std::ptrdiff_t>(d.height)) {
            std::fill(row, row + d.out_w, T(0));
            continue;
          }
          const T* src = x + (c * d.height + static_cast<std::size_t>(hi)) * d.width;
          for (std::size_t ow = 0; ow < d.out_w; ++ow) {
            const auto wi = static_cast<std::ptrdiff_t>(ow * d.geo.stride_w + j) -
                            static_cast<std::ptrdiff_t>(d.geo.pad_w);
            row[ow] = (wi < 0 || wi >= static_cast<std::ptrdiff_t>(d.width))
                          ? T(0)
                          : src[static_cast<std::size_t>(wi)];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into x.
template <class T>
void col2im(const T* cols, const ConvDims& d, T* x) {
  const std::size_t plane = d.out_h * d.out_w;
  for (std::size_t c = 0; c < d.channels; ++c) {
    for (std::size_t i = 0; i < d.kh; ++i) {
      for (std::size_t j = 0; j < d.kw; ++j) {
        const T* src = cols + ((c * d.kh + i) * d.kw + j) * plane;
        for (std::size_t oh = 0; oh < d.out_h; ++oh) {
          const auto hi = static_cast<std::ptrdiff_t>(oh * d.geo.stride_h + i) -
                          static_cast<std::ptrdiff_t>(d.geo.pad_h);
          if (hi < 0 || hi >= static_cast<std::ptrdiff_t>(d.height)) continue;
          T* dst = x + (c * d.height + static_cast<std::size_t>(hi)) * d.width;
          const T* row = src + oh * d.out_w;
          for (std::size_t ow = 0; ow < d.out_w; ++ow) {
            const auto wi = static_cast<std::ptrdiff_t>(ow * d.geo.stride_w + j) -
                            static_cast<std::ptrdiff_t>(d.geo.pad_w);
            if (wi >= 0 && wi < static_cast<std::ptrdiff_t>(d.width)) {
              dst[static_cast<std::size_t>(wi)] += row[ow];
            }
          }
        }
      }
    }
  }
}

template <class T>
void add_bias(T* out, const T* bias, std::size_t channels, std::size_t plane) {
  for (std::size_t c = 0; c < channels; ++c) {
    T* p = out + c * plane;
    for (std::size_t k = 0; k < plane; ++k) p[k] += bias[c];
  }
}

template <class T>
void accumulate_bias_grad(const T* dout, T* dbias, std::size_t channels, std::size_t plane) {
  for (std::size_t c = 0; c < channels; ++c) {
    const T* p = dout + c * plane;
    T acc = T(0);
    for (std::size_t k = 0; k < plane; ++k) acc += p[k];
    dbias[c] += acc;
  }
}

}  // namespace

template <class T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 Geometry2d geo) {
  expect(x.rank() == 4 && w.rank() == 4, "conv2d expects x [B,C,H,W] and w [Co,Ci,kh,kw]");
  expect(x.dim(1) == w.dim(1), "conv2d channel mismatch: x " + shape_str(x.shape()) +
                                   " w " + shape_str(w.shape()));
  expect(geo.stride_h > 0 && geo.stride_w > 0, "conv2d stride must be positive");
  const std::size_t batch = x.dim(0), co = w.dim(0);
  ConvDims d{x.dim(1), x.dim(2), x.dim(3), w.dim(2), w.dim(3), geo, 0, 0};
  d.out_h = conv_out(d.height, d.kh, geo.stride_h, geo.pad_h);
  d.out_w = conv_out(d.width, d.kw, geo.stride_w, geo.pad_w);
  if (bias.defined()) expect(bias.size() == co, "conv2d bias size mismatch");

  const std::size_t k = d.channels * d.kh * d.kw;
  const std::size_t plane = d.out_h * d.out_w;
  const std::size_t in_stride = d.channels * d.height * d.width;
  Tensor<T> out({batch, co, d.out_h, d.out_w});
  std::vector<T> cols(k * plane);
  CMap<T> wm(w.data().data(), co, k);
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(x.data().data() + b * in_stride, d, cols.data());
    Map<T> om(out.data().data() + b * co * plane, co, plane);
    om.noalias() = wm * CMap<T>(cols.data(), k, plane);
    if (bias.defined()) add_bias(out.data().data() + b * co * plane, bias.data().data(), co, plane);
  }

  if (wants_grad(tape, {&x, &w, &bias})) {
    out.set_requires_grad(true);
    tape->record([x, w, bias, out, d, batch, co, k, plane, in_stride]() mutable {
      if (!out.has_grad()) return;
      std::vector<T> buf(k * plane);
      CMap<T> wm(w.data().data(), co, k);
      for (std::size_t b = 0; b < batch; ++b) {
        CMap<T> dout(out.grad().data() + b * co * plane, co, plane);
        if (needs(w)) {
          im2col(x.data().data() + b * in_stride, d, buf.data());
          Map<T>(w.grad().data(), co, k).noalias() += dout * CMap<T>(buf.data(), k, plane).transpose();
        }
        if (needs(bias)) accumulate_bias_grad(dout.data(), bias.grad().data(), co, plane);
        if (needs(x)) {
          Map<T>(buf.data(), k, plane).noalias() = wm.transpose() * dout;
          col2im(buf.data(), d, x.grad().data() + b * in_stride);
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> conv_transpose2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w,
                           const Tensor<T>& bias, Geometry2d geo) {
  expect(x.rank() == 4 && w.rank() == 4,
         "conv_transpose2d expects x [B,Ci,H,W] and w [Ci,Co,kh,kw]");
  expect(x.dim(1) == w.dim(0), "conv_transpose2d channel mismatch: x " + shape_str(x.shape()) +
                                   " w " + shape_str(w.shape()));
  expect(geo.stride_h > 0 && geo.stride_w > 0, "conv_transpose2d stride must be positive");
  const std::size_t batch = x.dim(0), ci = x.dim(1), co = w.dim(1);
  const std::size_t h = x.dim(2), wd = x.dim(3);
  const std::size_t kh = w.dim(2), kw = w.dim(3);
  const auto extent = [](std::size_t in, std::size_t k, std::size_t s, std::size_t p) {
    const std::ptrdiff_t v = static_cast<std::ptrdiff_t>((in - 1) * s + k) -
                             2 * static_cast<std::ptrdiff_t>(p);
    expect(v > 0, "conv_transpose2d produces an empty output");
    return static_cast<std::size_t>(v);
  };
  const std::size_t oh = extent(h, kh, geo.stride_h, geo.pad_h);
  const std::size_t ow = extent(wd, kw, geo.stride_w, geo.pad_w);
  // The equivalent forward convolution maps [Co, oh, ow] to [Ci, h, wd].
  ConvDims d{co, oh, ow, kh, kw, geo, h, wd};
  expect(conv_out(oh, kh, geo.stride_h, geo.pad_h) == h &&
             conv_out(ow, kw, geo.stride_w, geo.pad_w) == wd,
         "conv_transpose2d geometry is not invertible");
  if (bias.defined()) expect(bias.size() == co, "conv_transpose2d bias size mismatch");

  const std::size_t kt = co * kh * kw;
  const std::size_t in_plane = h * wd;
  const std::size_t out_plane = oh * ow;
  Tensor<T> out({batch, co, oh, ow});
  std::vector<T> cols(kt * in_plane);
  CMap<T> wm(w.data().data(), ci, kt);
  for (std::size_t b = 0; b < batch; ++b) {
    Map<T>(cols.data(), kt, in_plane).noalias() =
        wm.transpose() * CMap<T>(x.data().data() + b * ci * in_plane, ci, in_plane);
    col2im(cols.data(), d, out.data().data() + b * co * out_plane);
    if (bias.defined()) add_bias(out.data().data() + b * co * out_plane, bias.data().data(), co, out_plane);
  }

  if (wants_grad(tape, {&x, &w, &bias})) {
    out.set_requires_grad(true);
    tape->record([x, w, bias, out, d, batch, ci, co, kt, in_plane, out_plane]() mutable {
      if (!out.has_grad()) return;
      std::vector<T> buf(kt * in_plane);
      CMap<T> wm(w.data().data(), ci, kt);
      for (std::size_t b = 0; b < batch; ++b) {
        const T* dout = out.grad().data() + b * co * out_plane;
        if (needs(bias)) accumulate_bias_grad(dout, bias.grad().data(), co, out_plane);
        if (!needs(w) && !needs(x)) continue;
        im2col(dout, d, buf.data());
        CMap<T> dcols(buf.data(), kt, in_plane);
        if (needs(w)) {
          Map<T>(w.grad().data(), ci, kt).noalias() +=
              CMap<T>(x.data().data() + b * ci * in_plane, ci, in_plane) * dcols.transpose();
        }
        if (needs(x)) {
          Map<T>(x.grad().data() + b * ci * in_plane, ci, in_plane).noalias() += wm * dcols;
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> rowwise_conv1d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w,
                         const Tensor<T>& bias, std::size_t stride, std::size_t pad) {
  expect(x.rank() == 4 && w.rank() == 4, "rowwise_conv1d expects x [B,Ci,H,W] and w [G,Co,Ci,k]");
  const std::size_t batch = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t groups = w.dim(0), co = w.dim(1), k = w.dim(3);
  expect(w.dim(2) == ci, "rowwise_conv1d channel mismatch: x " + shape_str(x.shape()) +
                             " w " + shape_str(w.shape()));
  expect(groups == h || groups == 1, "rowwise_conv1d weight groups must be 1 or H");
  expect(stride > 0, "rowwise_conv1d stride must be positive");
  if (bias.defined()) expect(bias.size() == groups * co, "rowwise_conv1d bias size mismatch");
  const std::size_t out_w = conv_out(wd, k, stride, pad);
  const ConvDims d{ci, 1, wd, 1, k, Geometry2d{1, stride, 0, pad}, 1, out_w};
  const std::size_t kk = ci * k;

  Tensor<T> out({batch, co, h, out_w});
  std::vector<T> row_in(ci * wd), cols(kk * out_w), row_out(co * out_w);
  const auto gather_row = [h](const T* src, std::size_t channels, std::size_t len,
                             std::size_t b, std::size_t r, T* dst) {
    for (std::size_t c = 0; c < channels; ++c) {
      const T* p = src + ((b * channels + c) * h + r) * len;
      std::copy(p, p + len, dst + c * len);
    }
  };
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t r = 0; r < h; ++r) {
      const std::size_t g = groups == 1 ? 0 : r;
      gather_row(x.data().data(), ci, wd, b, r, row_in.data());
      im2col(row_in.data(), d, cols.data());
      Map<T>(row_out.data(), co, out_w).noalias() =
          CMap<T>(w.data().data() + g * co * kk, co, kk) * CMap<T>(cols.data(), kk, out_w);
      for (std::size_t c = 0; c < co; ++c) {
        const T bv = bias.defined() ? bias.data()[g * co + c] : T(0);
        T* dst = out.data().data() + ((b * co + c) * h + r) * out_w;
        for (std::size_t t = 0; t < out_w; ++t) dst[t] = row_out[c * out_w + t] + bv;
      }
    }
  }

  if (wants_grad(tape, {&x, &w, &bias})) {
    out.set_requires_grad(true);
    tape->record([x, w, bias, out, d, batch, ci, h, wd, groups, co, kk, out_w,
                  gather_row]() mutable {
      if (!out.has_grad()) return;
      std::vector<T> row_in(ci * wd), cols(kk * out_w), dout(co * out_w), dx(ci * wd);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t r = 0; r < h; ++r) {
          const std::size_t g = groups == 1 ? 0 : r;
          gather_row(out.grad().data(), co, out_w, b, r, dout.data());
          CMap<T> dm(dout.data(), co, out_w);
          if (needs(bias)) {
            for (std::size_t c = 0; c < co; ++c) {
              T acc = T(0);
              for (std::size_t t = 0; t < out_w; ++t) acc += dout[c * out_w + t];
              bias.grad()[g * co + c] += acc;
            }
          }
          if (needs(w)) {
            gather_row(x.data().data(), ci, wd, b, r, row_in.data());
            im2col(row_in.data(), d, cols.data());
            Map<T>(w.grad().data() + g * co * kk, co, kk).noalias() +=
                dm * CMap<T>(cols.data(), kk, out_w).transpose();
          }
          if (needs(x)) {
            Map<T>(cols.data(), kk, out_w).noalias() =
                CMap<T>(w.data().data() + g * co * kk, co, kk).transpose() * dm;
            std::fill(dx.begin(), dx.end(), T(0));
            col2im(cols.data(), d, dx.data());
            for (std::size_t c = 0; c < ci; ++c) {
              T* dst = x.grad().data() + ((b * ci + c) * h + r) * wd;
              for (std::size_t t = 0; t < wd; ++t) dst[t] += dx[c * wd + t];
            }
          }
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> conv1d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 std::size_t stride, std::size_t pad) {
  expect(x.rank() == 3 && w.rank() == 3, "conv1d expects x [B,C,M] and w [Co,Ci,k]");
  const Tensor<T> x4 = reshape(tape, x, {x.dim(0), x.dim(1), 1, x.dim(2)});
  const Tensor<T> w4 = reshape(tape, w, {1, w.dim(0), w.dim(1), w.dim(2)});
  const Tensor<T> out = rowwise_conv1d(tape, x4, w4, bias, stride, pad);
  return reshape(tape, out, {out.dim(0), out.dim(1), out.dim(3)});
}

template <class T>
Tensor<T> batch_norm(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, BatchNormStats<T>& stats, Mode mode, T eps,
                     T momentum) {
  expect(x.rank() == 4, "batch_norm expects x [B,C,H,W]");
  const std::size_t batch = x.dim(0), ch = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const bool per_row = gamma.rank() == 2;
  const std::size_t groups = per_row ? h * ch : ch;
  expect(gamma.size() == groups && beta.size() == groups,
         "batch_norm parameter shape " + shape_str(gamma.shape()) + " does not fit x " +
             shape_str(x.shape()));
  expect(stats.running_mean.size() == groups && stats.running_var.size() == groups,
         "batch_norm running statistics have the wrong size");
  const std::size_t count = per_row ? batch * wd : batch * h * wd;
  auto group_of = [=](std::size_t c, std::size_t r) { return per_row ? r * ch + c : c; };

  std::vector<T> mean(groups), invstd(groups);
  if (mode == Mode::kTrain) {
    std::vector<double> s1(groups, 0.0), s2(groups, 0.0);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t r = 0; r < h; ++r) {
          const T* p = x.data().data() + ((b * ch + c) * h + r) * wd;
          double a = 0.0;
          for (std::size_t t = 0; t < wd; ++t) a += p[t];
          s1[group_of(c, r)] += a;
        }
    for (std::size_t g = 0; g < groups; ++g) s1[g] /= static_cast<double>(count);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t r = 0; r < h; ++r) {
          const std::size_t g = group_of(c, r);
          const T* p = x.data().data() + ((b * ch + c) * h + r) * wd;
          double a = 0.0;
          for (std::size_t t = 0; t < wd; ++t) {
            const double dv = p[t] - s1[g];
            a += dv * dv;
          }
          s2[g] += a;
        }
    for (std::size_t g = 0; g < groups; ++g) {
      const double var = s2[g] / static_cast<double>(count);
      mean[g] = static_cast<T>(s1[g]);
      invstd[g] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      const double unbiased = count > 1 ? s2[g] / static_cast<double>(count - 1) : var;
      T& rm = stats.running_mean.data()[g];
      T& rv = stats.running_var.data()[g];
      rm = static_cast<T>((1.0 - momentum) * rm + momentum * s1[g]);
      rv = static_cast<T>((1.0 - momentum) * rv + momentum * unbiased);
    }
  } else {
    for (std::size_t g = 0; g < groups; ++g) {
      mean[g] = stats.running_mean.data()[g];
      invstd[g] = T(1) / std::sqrt(stats.running_var.data()[g] + eps);
    }
  }

  Tensor<T> out(x.shape());
  std::vector<T> xhat(x.size());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t r = 0; r < h; ++r) {
        const std::size_t g = group_of(c, r);
        const std::size_t base = ((b * ch + c) * h + r) * wd;
        const T gm = gamma.data()[g], bt = beta.data()[g];
        for (std::size_t t = 0; t < wd; ++t) {
          const T v = (x.data()[base + t] - mean[g]) * invstd[g];
          xhat[base + t] = v;
          out.data()[base + t] = gm * v + bt;
        }
      }

  if (wants_grad(tape, {&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    tape->record([x, gamma, beta, out, xhat = std::move(xhat), invstd, mode, batch, ch, h, wd,
                  groups, count, group_of]() mutable {
      if (!out.has_grad()) return;
      const auto dy = out.grad();
      std::vector<double> sum_dy(groups, 0.0), sum_dy_xhat(groups, 0.0);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < ch; ++c)
          for (std::size_t r = 0; r < h; ++r) {
            const std::size_t g = group_of(c, r);
            const std::size_t base = ((b * ch + c) * h + r) * wd;
            double a = 0.0, bsum = 0.0;
            for (std::size_t t = 0; t < wd; ++t) {
              a += dy[base + t];
              bsum += dy[base + t] * xhat[base + t];
            }
            sum_dy[g] += a;
            sum_dy_xhat[g] += bsum;
          }
      if (needs(gamma))
        for (std::size_t g = 0; g < groups; ++g) gamma.grad()[g] += static_cast<T>(sum_dy_xhat[g]);
      if (needs(beta))
        for (std::size_t g = 0; g < groups; ++g) beta.grad()[g] += static_cast<T>(sum_dy[g]);
      if (!needs(x)) return;
      const auto dx = x.grad();
      const double inv_count = 1.0 / static_cast<double>(count);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < ch; ++c)
          for (std::size_t r = 0; r < h; ++r) {
            const std::size_t g = group_of(c, r);
            const std::size_t base = ((b * ch + c) * h + r) * wd;
            const T k = gamma.data()[g] * invstd[g];
            if (mode == Mode::kEval) {
              for (std::size_t t = 0; t < wd; ++t) dx[base + t] += k * dy[base + t];
              continue;
            }
            const T m1 = static_cast<T>(sum_dy[g] * inv_count);
            const T m2 = static_cast<T>(sum_dy_xhat[g] * inv_count);
            for (std::size_t t = 0; t < wd; ++t) {
              dx[base + t] += k * (dy[base + t] - m1 - xhat[base + t] * m2);
            }
          }
    });
  }
  return out;
}

template <class T>
Tensor<T> leaky_relu(Tape<T>* tape, const Tensor<T>& x, T slope) {
  Tensor<T> out(x.shape());
  const auto in = x.data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] > T(0) ? in[i] : slope * in[i];
  if (wants_grad(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x, out, slope]() mutable {
      if (!out.has_grad()) return;
      const auto in = x.data();
      const auto dy = out.grad();
      auto dx = x.grad();
      for (std::size_t i = 0; i < in.size(); ++i) dx[i] += in[i] > T(0) ? dy[i] : slope * dy[i];
    });
  }
  return out;
}

template <class T>
Tensor<T> tanh(Tape<T>* tape, const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const auto in = x.data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = std::tanh(in[i]);
  if (wants_grad(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x, out]() mutable {
      if (!out.has_grad()) return;
      const auto y = out.data();
      const auto dy = out.grad();
      auto dx = x.grad();
      for (std::size_t i = 0; i < y.size(); ++i) dx[i] += dy[i] * (T(1) - y[i] * y[i]);
    });
  }
  return out;
}

template <class T>
Tensor<T> dropout(Tape<T>* tape, const Tensor<T>& x, T p, Mode mode, std::uint64_t seed) {
  if (p < T(0) || p >= T(1)) fail(ErrorKind::kConfig, "dropout probability must be in [0, 1)");
  if (mode == Mode::kEval || p == T(0)) return x;
  Tensor<T> out(x.shape());
  std::vector<T> factor(x.size());
  Rng rng(seed);
  const T keep_scale = T(1) / (T(1) - p);
  const auto in = x.data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    factor[i] = rng.uniform() < static_cast<double>(p) ? T(0) : keep_scale;
    o[i] = in[i] * factor[i];
  }
  if (wants_grad(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x, out, factor = std::move(factor)]() mutable {
      if (!out.has_grad()) return;
      const auto dy = out.grad();
      auto dx = x.grad();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * factor[i];
    });
  }
  return out;
}

template <class T>
Tensor<T> concat(Tape<T>* tape, const std::vector<Tensor<T>>& parts, std::size_t axis) {
  expect(!parts.empty(), "concat of no tensors");
  const Shape& ref = parts.front().shape();
  expect(axis < ref.size(), "concat axis out of range");
  Shape shape = ref;
  shape[axis] = 0;
  for (const auto& t : parts) {
    expect(t.rank() == ref.size(), "concat rank mismatch");
    for (std::size_t a = 0; a < ref.size(); ++a) {
      if (a != axis) {
        expect(t.dim(a) == ref[a], "concat shape mismatch: " + shape_str(t.shape()) + " vs " +
                                       shape_str(ref));
      }
    }
    shape[axis] += t.dim(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= ref[a];
  for (std::size_t a = axis + 1; a < ref.size(); ++a) inner *= ref[a];
  const std::size_t out_chunk = shape[axis] * inner;

  Tensor<T> out(shape);
  std::size_t offset = 0;
  for (const auto& t : parts) {
    const std::size_t chunk = t.dim(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(t.data().data() + o * chunk, chunk, out.data().data() + o * out_chunk + offset);
    }
    offset += chunk;
  }

  bool any = false;
  for (const auto& t : parts) any = any || (tape && needs(t));
  if (any) {
    out.set_requires_grad(true);
    tape->record([parts, out, outer, inner, axis, out_chunk]() mutable {
      if (!out.has_grad()) return;
      std::size_t offset = 0;
      for (auto& t : parts) {
        const std::size_t chunk = t.dim(axis) * inner;
        if (needs(t)) {
          for (std::size_t o = 0; o < outer; ++o) {
            const T* src = out.grad().data() + o * out_chunk + offset;
            T* dst = t.grad().data() + o * chunk;
            for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
          }
        }
        offset += chunk;
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> reshape(Tape<T>* tape, const Tensor<T>& x, Shape shape) {
  expect(numel(shape) == x.size(),
         "cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  Tensor<T> out(std::move(shape), x.values());
  if (wants_grad(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x, out]() mutable {
      if (!out.has_grad()) return;
      auto dx = x.grad();
      const auto dy = out.grad();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
    });
  }
  return out;
}

template <class T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  expect(a.shape() == b.shape(), "add shape mismatch");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (wants_grad(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      const auto dy = out.grad();
      if (needs(a))
        for (std::size_t i = 0; i < dy.size(); ++i) a.grad()[i] += dy[i];
      if (needs(b))
        for (std::size_t i = 0; i < dy.size(); ++i) b.grad()[i] += dy[i];
    });
  }
  return out;
}

template <class T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  expect(a.shape() == b.shape(), "mul shape mismatch");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (wants_grad(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      const auto dy = out.grad();
      if (needs(a))
        for (std::size_t i = 0; i < dy.size(); ++i) a.grad()[i] += dy[i] * b.data()[i];
      if (needs(b))
        for (std::size_t i = 0; i < dy.size(); ++i) b.grad()[i] += dy[i] * a.data()[i];
    });
  }
  return out;
}

template <class T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& a, T factor) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * factor;
  if (wants_grad(tape, {&a})) {
    out.set_requires_grad(true);
    tape->record([a, out, factor]() mutable {
      if (!out.has_grad()) return;
      const auto dy = out.grad();
      for (std::size_t i = 0; i < dy.size(); ++i) a.grad()[i] += dy[i] * factor;
    });
  }
  return out;
}

template <class T>
Tensor<T> sum(Tape<T>* tape, const Tensor<T>& a) {
  double acc = 0.0;
  for (T v : a.data()) acc += v;
  Tensor<T> out(Shape{1}, static_cast<T>(acc));
  if (wants_grad(tape, {&a})) {
    out.set_requires_grad(true);
    tape->record([a, out]() mutable {
      if (!out.has_grad()) return;
      const T g = out.grad()[0];
      for (T& v : a.grad()) v += g;
    });
  }
  return out;
}

template <class T>
Tensor<T> mse_loss(Tape<T>* tape, const Tensor<T>& pred, const Tensor<T>& target) {
  expect(pred.shape() == target.shape(), "mse_loss shape mismatch: " + shape_str(pred.shape()) +
                                             " vs " + shape_str(target.shape()));
  const std::size_t n = pred.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pred.data()[i]) - target.data()[i];
    acc += d * d;
  }
  Tensor<T> out(Shape{1}, static_cast<T>(acc / static_cast<double>(n)));
  if (wants_grad(tape, {&pred})) {
    out.set_requires_grad(true);
    tape->record([pred, target, out, n]() mutable {
      if (!out.has_grad()) return;
      const T k = out.grad()[0] * T(2) / static_cast<T>(n);
      auto dp = pred.grad();
      for (std::size_t i = 0; i < n; ++i) dp[i] += k * (pred.data()[i] - target.data()[i]);
    });
  }
  return out;
}

template <class T>
Tensor<T> pearson_loss(Tape<T>* tape, const Tensor<T>& pred, const Tensor<T>& target, T eps) {
  expect(pred.shape() == target.shape(), "pearson_loss shape mismatch: " +
                                             shape_str(pred.shape()) + " vs " +
                                             shape_str(target.shape()));
  expect(pred.rank() >= 1 && pred.size() > 0, "pearson_loss on an empty tensor");
  const std::size_t len = pred.shape().back();
  const std::size_t rows = pred.size() / len;

  struct RowStats {
    double mean_p, mean_t, sxy, root_p, root_t, den_p, den_t, r;
  };
  std::vector<RowStats> st(rows);
  double loss = 0.0;
  for (std::size_t row = 0; row < rows; ++row) {
    const T* p = pred.data().data() + row * len;
    const T* t = target.data().data() + row * len;
    double mp = 0.0, mt = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      mp += p[i];
      mt += t[i];
    }
    mp /= static_cast<double>(len);
    mt /= static_cast<double>(len);
    double sxy = 0.0, sp = 0.0, stt = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double a = p[i] - mp, b = t[i] - mt;
      sxy += a * b;
      sp += a * a;
      stt += b * b;
    }
    RowStats& s = st[row];
    s.mean_p = mp;
    s.mean_t = mt;
    s.sxy = sxy;
    s.root_p = std::sqrt(sp);
    s.root_t = std::sqrt(stt);
    s.den_p = s.root_p + static_cast<double>(eps);
    s.den_t = s.root_t + static_cast<double>(eps);
    s.r = sxy / (s.den_p * s.den_t);
    loss += 1.0 - s.r;
  }
  Tensor<T> out(Shape{1}, static_cast<T>(loss / static_cast<double>(rows)));
  if (wants_grad(tape, {&pred})) {
    out.set_requires_grad(true);
    tape->record([pred, target, out, st = std::move(st), rows, len]() mutable {
      if (!out.has_grad()) return;
      const double g = static_cast<double>(out.grad()[0]) / static_cast<double>(rows);
      auto dp = pred.grad();
      for (std::size_t row = 0; row < rows; ++row) {
        const RowStats& s = st[row];
        const T* p = pred.data().data() + row * len;
        const T* t = target.data().data() + row * len;
        const double inv_den = 1.0 / (s.den_p * s.den_t);
        const double k_p = s.root_p > 0.0 ? s.sxy / (s.den_p * s.den_p * s.den_t * s.root_p) : 0.0;
        for (std::size_t i = 0; i < len; ++i) {
          const double dr = (t[i] - s.mean_t) * inv_den - k_p * (p[i] - s.mean_p);
          dp[row * len + i] += static_cast<T>(-g * dr);
        }
      }
    });
  }
  return out;
}

double fd_check(const std::function<Tensor<double>(Tape<double>*)>& fn,
                std::vector<Tensor<double>> inputs, const FdOptions& options) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tape<double> tape;
  Tensor<double> loss = fn(&tape);
  tape.backward(loss);

  Rng rng(options.seed);
  double worst = 0.0;
  for (auto& t : inputs) {
    std::vector<std::size_t> coords(t.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords > 0 && coords.size() > options.max_coords) {
      for (std::size_t i = 0; i < options.max_coords; ++i) {
        std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
      }
      coords.resize(options.max_coords);
    }
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    for (std::size_t idx : coords) {
      const double orig = t.data()[idx];
      t.data()[idx] = orig + options.step;
      const double up = fn(nullptr).item();
      t.data()[idx] = orig - options.step;
      const double down = fn(nullptr).item();
      t.data()[idx] = orig;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[idx];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

#define ECGR_INSTANTIATE(T)                                                                    \
  template class Tensor<T>;                                                                    \
  template class Tape<T>;                                                                      \
  template Tensor<T> conv2d(Tape<T>*, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                            Geometry2d);                                                       \
  template Tensor<T> conv1d(Tape<T>*, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                            std::size_t, std::size_t);                                         \
  template Tensor<T> rowwise_conv1d(Tape<T>*, const Tensor<T>&, const Tensor<T>&,              \
                                    const Tensor<T>&, std::size_t, std::size_t);               \
  template Tensor<T> conv_transpose2d(Tape<T>*, const Tensor<T>&, const Tensor<T>&,            \
                                      const Tensor<T>&, Geometry2d);                           \
  template Tensor<T> batch_norm(Tape<T>*, const Tensor<T>&, const Tensor<T>&,                  \
                                const Tensor<T>&, BatchNormStats<T>&, Mode, T, T);             \
  template Tensor<T> leaky_relu(Tape<T>*, const Tensor<T>&, T);                                \
  template Tensor<T> tanh(Tape<T>*, const Tensor<T>&);                                         \
  template Tensor<T> dropout(Tape<T>*, const Tensor<T>&, T, Mode, std::uint64_t);              \
  template Tensor<T> concat(Tape<T>*, const std::vector<Tensor<T>>&, std::size_t);             \
  template Tensor<T> reshape(Tape<T>*, const Tensor<T>&, Shape);                               \
  template Tensor<T> add(Tape<T>*, const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> mul(Tape<T>*, const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> scale(Tape<T>*, const Tensor<T>&, T);                                     \
  template Tensor<T> sum(Tape<T>*, const Tensor<T>&);                                          \
  template Tensor<T> mse_loss(Tape<T>*, const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> pearson_loss(Tape<T>*, const Tensor<T>&, const Tensor<T>&, T);

ECGR_INSTANTIATE(float)
ECGR_INSTANTIATE(double)

#undef ECGR_INSTANTIATE

}  // namespace ecgr::ad
