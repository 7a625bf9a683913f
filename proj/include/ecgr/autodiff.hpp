#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ecgr::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

enum class Mode { kTrain, kEval };

/// Reference-counted dense tensor with an optional gradient buffer. Copies
/// share storage, like a handle; use clone() for a deep copy.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(s_); }

  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t i) const { return s_->shape[i]; }
  std::size_t size() const { return s_->data.size(); }

  std::span<T> data() const { return s_->data; }
  std::vector<T>& values() { return s_->data; }
  const std::vector<T>& values() const { return s_->data; }

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool v) { s_->requires_grad = v; }

  bool has_grad() const { return !s_->grad.empty(); }
  /// Gradient buffer, zero-allocated on first access.
  std::span<T> grad() const;
  void zero_grad() const;

  T item() const { return s_->data.at(0); }
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
};

/// Records backward closures in execution order; backward() replays them in
/// reverse, which is a reverse topological order of the graph.
template <class T>
class Tape {
 public:
  void record(std::function<void()> backward_fn) { nodes_.push_back(std::move(backward_fn)); }

  /// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every tensor
  /// that requires them. The tape is consumed.
  void backward(Tensor<T>& loss);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<std::function<void()>> nodes_;
};

struct Geometry2d {
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;
};

/// Running statistics of one batch-norm layer.
template <class T>
struct BatchNormStats {
  Tensor<T> running_mean;
  Tensor<T> running_var;
};

// All ops take an optional tape: with nullptr nothing is recorded.

/// x [B, Ci, H, W], w [Co, Ci, kh, kw], bias [Co] (may be undefined).
template <class T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w,
                 const Tensor<T>& bias, Geometry2d geo);

/// x [B, Ci, M], w [Co, Ci, k], bias [Co] (may be undefined).
template <class T>
Tensor<T> conv1d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w,
                 const Tensor<T>& bias, std::size_t stride, std::size_t pad);

/// Independent 1D convolutions along W for every row h of x [B, Ci, H, W].
/// w [G, Co, Ci, k] and bias [G, Co] with G == H (per-row weights) or G == 1
/// (shared).
template <class T>
Tensor<T> rowwise_conv1d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w,
                         const Tensor<T>& bias, std::size_t stride, std::size_t pad);

/// x [B, Ci, H, W], w [Ci, Co, kh, kw], bias [Co]. Output extent
/// (H - 1) * stride - 2 * pad + k per axis.
template <class T>
Tensor<T> conv_transpose2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w,
                           const Tensor<T>& bias, Geometry2d geo);

/// x [B, C, H, W]. gamma/beta are [C] (statistics over B, H, W) or [H, C]
/// (statistics over B, W for every row separately).
template <class T>
Tensor<T> batch_norm(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, BatchNormStats<T>& stats, Mode mode,
                     T eps = T(1e-5), T momentum = T(0.1));

template <class T>
Tensor<T> leaky_relu(Tape<T>* tape, const Tensor<T>& x, T slope = T(0.2));

template <class T>
Tensor<T> tanh(Tape<T>* tape, const Tensor<T>& x);

/// Inverted dropout; identity in eval mode or when p == 0.
template <class T>
Tensor<T> dropout(Tape<T>* tape, const Tensor<T>& x, T p, Mode mode, std::uint64_t seed);

template <class T>
Tensor<T> concat(Tape<T>* tape, const std::vector<Tensor<T>>& parts, std::size_t axis);

template <class T>
Tensor<T> reshape(Tape<T>* tape, const Tensor<T>& x, Shape shape);

template <class T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& a, T factor);

template <class T>
Tensor<T> sum(Tape<T>* tape, const Tensor<T>& a);

/// Mean squared difference over all elements; gradient flows to `pred` only.
template <class T>
Tensor<T> mse_loss(Tape<T>* tape, const Tensor<T>& pred, const Tensor<T>& target);

/// Mean over rows (all axes but the last) of 1 - r, where r is the sample
/// correlation along the last axis with `eps` added to each root in the
/// denominator. Gradient flows to `pred` only.
template <class T>
Tensor<T> pearson_loss(Tape<T>* tape, const Tensor<T>& pred, const Tensor<T>& target,
                       T eps = T(1e-8));

struct FdOptions {
  double step = 1e-5;
  /// Relative errors are |a - n| / max(|a|, |n|, abs_floor).
  double abs_floor = 1e-6;
  /// Check at most this many coordinates per input (0 = all), sampled with `seed`.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
};

/// Compares tape gradients of the scalar `fn` against central finite
/// differences for every input and returns the maximum relative error.
double fd_check(const std::function<Tensor<double>(Tape<double>*)>& fn,
                std::vector<Tensor<double>> inputs, const FdOptions& options = {});

}  // namespace ecgr::ad
