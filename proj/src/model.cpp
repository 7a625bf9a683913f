#include "ecgr/model.hpp"

#include <algorithm>
#include <cmath>

#include "ecgr/error.hpp"
#include "ecgr/rng.hpp"

namespace ecgr {

using ad::Mode;
using ad::Shape;
using ad::Tensor;

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.enc2d_channels = {8, 16, 16, 32};
  c.enc1d_channels_per_lead = {4, 4, 8, 8};
  return c;
}

void ModelConfig::validate() const {
  for (std::size_t i = 0; i < 4; ++i) {
    if (enc2d_channels[i] == 0 || enc1d_channels_per_lead[i] == 0) {
      fail(ErrorKind::kConfig, "every encoder level needs at least one channel");
    }
  }
  if (time_stride < 2 || time_stride % 2 != 0) {
    fail(ErrorKind::kConfig, "time_stride must be even so the decoder can mirror the encoder");
  }
  std::size_t n = num_samples;
  for (int level = 0; level < 4; ++level) {
    if (n % time_stride != 0 || n < time_stride) {
      fail(ErrorKind::kConfig, "num_samples must be divisible by time_stride^4");
    }
    n /= time_stride;
  }
  if (transition_kh % 2 == 0 || transition_kw % 2 == 0) {
    fail(ErrorKind::kConfig, "transition kernel must be odd to preserve the bottleneck shape");
  }
  if (num_leads == 0) fail(ErrorKind::kConfig, "num_leads must be positive");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) fail(ErrorKind::kConfig, "dropout_p must be in [0, 1)");
}

namespace {

template <class T>
Tensor<T> uniform_tensor(Rng& rng, Shape shape, double bound) {
  Tensor<T> t(std::move(shape));
  for (T& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  t.set_requires_grad(true);
  return t;
}

template <class T>
Tensor<T> constant_tensor(Shape shape, T value, bool trainable) {
  return Tensor<T>(std::move(shape), value, trainable);
}

}  // namespace

template <class T>
void Model<T>::register_block(const std::string& prefix, Block& block, const char* op) {
  tensors_.push_back({prefix + "." + op + ".weight", block.weight, true});
  tensors_.push_back({prefix + "." + op + ".bias", block.bias, true});
  if (block.has_norm) {
    tensors_.push_back({prefix + ".bn.weight", block.gamma, true});
    tensors_.push_back({prefix + ".bn.bias", block.beta, true});
  }
}

template <class T>
Model<T> Model<T>::build(const ModelConfig& config, std::uint64_t init_seed) {
  config.validate();
  Model model(config);
  Rng rng(mix_seed(init_seed, 0x6d6f64656cULL));
  const std::size_t s = config.time_stride;
  const std::size_t enc_k = 2 * s + 1;
  const std::size_t leads = config.num_leads;

  auto init_block = [&](Block& b, Shape weight_shape, Shape bias_shape, Shape norm_shape,
                        std::size_t fan_in, bool norm) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    b.weight = uniform_tensor<T>(rng, std::move(weight_shape), bound);
    b.bias = uniform_tensor<T>(rng, std::move(bias_shape), bound);
    b.has_norm = norm;
    if (norm) {
      b.gamma = constant_tensor<T>(norm_shape, T(1), true);
      b.beta = constant_tensor<T>(norm_shape, T(0), true);
      b.stats.running_mean = constant_tensor<T>(norm_shape, T(0), false);
      b.stats.running_var = constant_tensor<T>(norm_shape, T(1), false);
    }
  };

  std::size_t in2d = 1;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t co = config.enc2d_channels[i];
    init_block(model.enc2d_[i], {co, in2d, 3, enc_k}, {co}, {co}, in2d * 3 * enc_k, true);
    in2d = config.level_channels(i);
  }
  const std::size_t groups = config.share_1d_weights_across_leads ? 1 : leads;
  std::size_t in1d = 1;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t co = config.enc1d_channels_per_lead[i];
    const Shape norm = groups == 1 ? Shape{co} : Shape{leads, co};
    init_block(model.enc1d_[i], {groups, co, in1d, enc_k}, {groups, co}, norm, in1d * enc_k, true);
    in1d = co;
  }
  const std::size_t bottleneck = config.level_channels(3);
  init_block(model.transition_, {bottleneck, bottleneck, config.transition_kh, config.transition_kw},
             {bottleneck}, {bottleneck},
             bottleneck * config.transition_kh * config.transition_kw, true);
  std::size_t prev = bottleneck;
  for (std::size_t j = 0; j < 4; ++j) {
    const std::size_t in = prev + config.level_channels(3 - j);
    const std::size_t out = j < 3 ? config.enc2d_channels[2 - j] : 1;
    init_block(model.dec_[j], {in, out, 3, 2 * s}, {out}, {out}, in * 3 * 2, j < 3);
    prev = out;
  }

  for (std::size_t i = 0; i < 4; ++i) model.register_block("enc2d." + std::to_string(i), model.enc2d_[i], "conv");
  for (std::size_t i = 0; i < 4; ++i) model.register_block("enc1d." + std::to_string(i), model.enc1d_[i], "conv");
  model.register_block("transition", model.transition_, "deconv");
  for (std::size_t j = 0; j < 4; ++j) model.register_block("dec." + std::to_string(j), model.dec_[j], "deconv");

  auto add_stats = [&](const std::string& prefix, Block& b) {
    if (!b.has_norm) return;
    model.tensors_.push_back({prefix + ".bn.running_mean", b.stats.running_mean, false});
    model.tensors_.push_back({prefix + ".bn.running_var", b.stats.running_var, false});
  };
  for (std::size_t i = 0; i < 4; ++i) add_stats("enc2d." + std::to_string(i), model.enc2d_[i]);
  for (std::size_t i = 0; i < 4; ++i) add_stats("enc1d." + std::to_string(i), model.enc1d_[i]);
  add_stats("transition", model.transition_);
  for (std::size_t j = 0; j < 4; ++j) add_stats("dec." + std::to_string(j), model.dec_[j]);
  return model;
}

template <class T>
Tensor<T> Model<T>::forward(ad::Tape<T>* tape, const Tensor<T>& input, Mode mode,
                            std::uint64_t dropout_seed) {
  const ModelConfig& c = config_;
  if (input.rank() != 4 || input.dim(1) != 1 || input.dim(2) != c.num_leads ||
      input.dim(3) != c.num_samples) {
    fail(ErrorKind::kShapeMismatch, "model expects input [B, 1, " + std::to_string(c.num_leads) +
                                        ", " + std::to_string(c.num_samples) + "], got " +
                                        ad::shape_str(input.shape()));
  }
  const std::size_t s = c.time_stride;
  const T slope = static_cast<T>(c.leaky_slope);
  const T drop = static_cast<T>(c.dropout_p);
  std::uint64_t layer = 0;
  auto activate = [&](const Tensor<T>& z, Block& b, bool with_dropout) {
    Tensor<T> y = ad::batch_norm(tape, z, b.gamma, b.beta, b.stats, mode);
    y = ad::leaky_relu(tape, y, slope);
    if (with_dropout) y = ad::dropout(tape, y, drop, mode, mix_seed(dropout_seed, ++layer));
    return y;
  };

  std::array<Tensor<T>, 4> skips;
  Tensor<T> in2d = input;
  Tensor<T> in1d = input;
  for (std::size_t i = 0; i < 4; ++i) {
    Block& b2 = enc2d_[i];
    Tensor<T> a = ad::conv2d(tape, in2d, b2.weight, b2.bias, ad::Geometry2d{1, s, 1, s});
    a = activate(a, b2, true);
    Block& b1 = enc1d_[i];
    Tensor<T> r = ad::rowwise_conv1d(tape, in1d, b1.weight, b1.bias, s, s);
    r = activate(r, b1, true);
    skips[i] = ad::concat<T>(tape, {a, r}, 1);
    in2d = skips[i];
    in1d = r;
  }

  Tensor<T> d = ad::conv_transpose2d(
      tape, skips[3], transition_.weight, transition_.bias,
      ad::Geometry2d{1, 1, (c.transition_kh - 1) / 2, (c.transition_kw - 1) / 2});
  d = activate(d, transition_, false);
  for (std::size_t j = 0; j < 4; ++j) {
    Block& b = dec_[j];
    const Tensor<T> joined = ad::concat<T>(tape, {d, skips[3 - j]}, 1);
    d = ad::conv_transpose2d(tape, joined, b.weight, b.bias, ad::Geometry2d{1, s, 1, s / 2});
    d = j < 3 ? activate(d, b, false) : ad::tanh(tape, d);
  }
  return d;
}

template <class T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) {
    if (t.trainable) n += t.tensor.size();
  }
  return n;
}

template <class T>
void Model<T>::zero_grad() {
  for (auto& t : tensors_) {
    if (t.trainable) t.tensor.zero_grad();
  }
}

template <class T>
Model<T> Model<T>::clone() const {
  return cast<T>();
}

template <class T>
template <class U>
Model<U> Model<T>::cast() const {
  Model<U> out = Model<U>::build(config_, 0);
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto src = tensors_[i].tensor.data();
    auto dst = out.tensors_[i].tensor.data();
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] = static_cast<U>(src[k]);
  }
  return out;
}

template <class T>
Tensor<T> to_input_tensor(const std::vector<const EcgRecord*>& records) {
  if (records.empty()) fail(ErrorKind::kInvalidInput, "empty batch");
  const std::size_t n = records.front()->num_samples();
  Tensor<T> out({records.size(), 1, kNumLeads, n});
  std::size_t offset = 0;
  for (const EcgRecord* r : records) {
    if (r->num_samples() != n) fail(ErrorKind::kShapeMismatch, "batch records differ in length");
    for (float v : r->data()) out.data()[offset++] = static_cast<T>(v);
  }
  return out;
}

EcgRecord reconstruct(Model<float>& model, const MaskedEcg& masked) {
  const Tensor<float> input = to_input_tensor<float>({&masked.samples});
  const Tensor<float> out = model.forward(nullptr, input, Mode::kEval);
  // float tanh saturates to exactly +-1 for large inputs; keep the open interval.
  const float limit = std::nextafter(1.0f, 0.0f);
  std::vector<float> values(out.data().begin(), out.data().end());
  for (float& v : values) v = std::clamp(v, -limit, limit);
  EcgRecord rec(std::move(values), masked.samples.num_samples(), masked.samples.sampling_rate(),
                masked.source_id);
  rec.set_normalized(true);
  return rec;
}

template class Model<float>;
template class Model<double>;
template Model<double> Model<float>::cast<double>() const;
template Model<float> Model<double>::cast<float>() const;
template Tensor<float> to_input_tensor<float>(const std::vector<const EcgRecord*>&);
template Tensor<double> to_input_tensor<double>(const std::vector<const EcgRecord*>&);

}  // namespace ecgr
