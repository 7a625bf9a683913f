#include "ecgr/train.hpp"

#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "ecgr/error.hpp"
#include "ecgr/metrics.hpp"
#include "ecgr/rng.hpp"
#include "ecgr/weights_io.hpp"

namespace ecgr {

LossParams TrainConfig::loss() const {
  LossParams p;
  p.alpha = alpha;
  p.pearson_only = pearson_only;
  return p;
}

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0) fail(ErrorKind::kConfig, "epochs and batch size must be positive");
  if (!(std::isfinite(lr) && lr > 0.0)) fail(ErrorKind::kConfig, "learning rate must be positive and finite");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0 && adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
    fail(ErrorKind::kConfig, "Adam betas must lie in (0, 1)");
  }
  if (!(adam_eps > 0.0)) fail(ErrorKind::kConfig, "Adam epsilon must be positive");
  if (checkpoint_every > 0 && checkpoint_path.empty()) {
    fail(ErrorKind::kConfig, "checkpointing needs a checkpoint path");
  }
  loss().validate();
}

void adam_step(std::span<const ad::Tensor<float>> params, AdamState& state, const TrainConfig& config) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0f);
      state.v.emplace_back(p.size(), 0.0f);
    }
  }
  if (state.m.size() != params.size()) {
    fail(ErrorKind::kShapeMismatch, "Adam state does not match the parameter list");
  }
  ++state.step;
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto theta = params[k].data();
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != theta.size() || v.size() != theta.size()) {
      fail(ErrorKind::kShapeMismatch, "Adam state does not match parameter " + std::to_string(k));
    }
    if (!params[k].has_grad()) continue;
    const auto g = params[k].grad();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double step = config.lr * (mi / c1) / (std::sqrt(vi / c2) + config.adam_eps);
      theta[i] = static_cast<float>(theta[i] - step);
    }
  }
}

namespace {

struct Batch {
  ad::Tensor<float> input;
  ad::Tensor<float> target;
};

Batch make_batch(const PairSet& set, std::span<const std::size_t> indices) {
  std::vector<MaskedEcg> masked;
  masked.reserve(indices.size());
  std::vector<const EcgRecord*> inputs, targets;
  for (std::size_t i : indices) {
    const DatasetPair& pair = set.pairs[i];
    if (pair.record_index >= set.records.size()) {
      fail(ErrorKind::kInvalidInput, "pair refers to a record outside the set");
    }
    const EcgRecord& target = set.records[pair.record_index];
    masked.push_back(materialize(pair, target));
    targets.push_back(&target);
  }
  for (const auto& m : masked) inputs.push_back(&m.samples);
  return {to_input_tensor<float>(inputs), to_input_tensor<float>(targets)};
}

std::vector<ad::Tensor<float>> trainable(Model<float>& model) {
  std::vector<ad::Tensor<float>> out;
  for (const auto& nt : model.tensors()) {
    if (nt.trainable) out.push_back(nt.tensor);
  }
  return out;
}

}  // namespace

std::vector<EpochLog> train(Model<float>& model, const PairSet& train_set, const TrainConfig& config,
                            TrainState* state, std::optional<PairSet> val_set,
                            const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.pairs.empty()) fail(ErrorKind::kInvalidInput, "training set is empty");
  TrainState local;
  TrainState& st = state != nullptr ? *state : local;
  const LossParams loss = config.loss();
  // With alpha = 0 the Pearson term is only measured, never differentiated.
  const bool pearson_in_objective = loss.pearson_only || loss.alpha != 0.0;
  const auto params = trainable(model);

  const std::size_t pool = train_set.pairs.size();
  const std::size_t per_epoch =
      config.pairs_per_epoch == 0 ? pool : std::min(pool, config.pairs_per_epoch);

  std::vector<EpochLog> logs;
  for (std::size_t epoch = st.epochs_done; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order(pool);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(config.seed, epoch, 0x73687566ULL));
    for (std::size_t i = pool; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    order.resize(per_epoch);

    EpochLog log;
    log.epoch = epoch + 1;
    std::size_t seen = 0;
    for (std::size_t b = 0, start = 0; start < per_epoch; ++b, start += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, per_epoch - start);
      const Batch batch = make_batch(train_set, std::span(order).subspan(start, count));

      ad::Tape<float> tape;
      const auto out = model.forward(&tape, batch.input, ad::Mode::kTrain,
                                     mix_seed(config.seed, epoch, b + 1));
      const auto mse = ad::mse_loss(&tape, out, batch.target);
      const auto pearson = ad::pearson_loss(pearson_in_objective ? &tape : nullptr, out,
                                            batch.target, static_cast<float>(loss.pearson_eps));
      ad::Tensor<float> total;
      if (loss.pearson_only) {
        total = pearson;
      } else if (pearson_in_objective) {
        total = ad::add(&tape, mse, ad::scale(&tape, pearson, static_cast<float>(loss.alpha)));
      } else {
        total = mse;
      }
      if (!std::isfinite(total.item())) {
        fail(ErrorKind::kNonFinite, "loss is not finite at epoch " + std::to_string(epoch + 1) +
                                        ", batch " + std::to_string(b + 1) +
                                        " (mse " + format_number(mse.item()) + ", pearson " +
                                        format_number(pearson.item()) + ")");
      }
      model.zero_grad();
      tape.backward(total);
      adam_step(params, st.adam, config);

      const double w = static_cast<double>(count);
      log.composite += w * total.item();
      log.mse += w * mse.item();
      log.pearson += w * pearson.item();
      seen += count;
    }
    log.composite /= static_cast<double>(seen);
    log.mse /= static_cast<double>(seen);
    log.pearson /= static_cast<double>(seen);
    if (val_set && !val_set->pairs.empty()) {
      log.val_composite = validate(model, *val_set, loss, config.batch_size);
    }
    st.epochs_done = epoch + 1;
    if (config.checkpoint_every > 0 && st.epochs_done % config.checkpoint_every == 0) {
      save_checkpoint(config.checkpoint_path, model, st);
    }
    logs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return logs;
}

double validate(Model<float>& model, const PairSet& set, const LossParams& loss,
                std::size_t batch_size) {
  if (set.pairs.empty()) fail(ErrorKind::kInvalidInput, "validation set is empty");
  if (batch_size == 0) fail(ErrorKind::kConfig, "batch size must be positive");
  std::vector<std::size_t> order(set.pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double sum = 0.0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, order.size() - start);
    const Batch batch = make_batch(set, std::span(order).subspan(start, count));
    const auto out = model.forward(nullptr, batch.input, ad::Mode::kEval);
    const auto terms = composite_loss<float>(nullptr, out, batch.target, loss);
    sum += static_cast<double>(count) * terms.total.item();
  }
  return sum / static_cast<double>(order.size());
}

void save_checkpoint(const std::filesystem::path& path, const Model<float>& model,
                     const TrainState& state) {
  std::vector<TensorBlob> blobs = model_blobs(model);
  std::size_t k = 0;
  const std::size_t base = blobs.size();
  for (std::size_t i = 0; i < base; ++i) {
    if (!model.tensors()[i].trainable) continue;
    if (k < state.adam.m.size()) {
      blobs.push_back({"adam.m." + blobs[i].name, blobs[i].dims, state.adam.m[k]});
      blobs.push_back({"adam.v." + blobs[i].name, blobs[i].dims, state.adam.v[k]});
    }
    ++k;
  }
  // Counters are stored as two 16-bit halves per f32 so they stay exact.
  auto counter = [](const std::string& name, std::uint64_t v) {
    TensorBlob b{name, {4}, {}};
    for (int i = 0; i < 4; ++i) b.data.push_back(static_cast<float>((v >> (16 * i)) & 0xFFFFU));
    return b;
  };
  blobs.push_back(counter("train.adam_step", state.adam.step));
  blobs.push_back(counter("train.epochs_done", state.epochs_done));
  write_tensor_file(path, blobs);
}

TrainState load_checkpoint(const std::filesystem::path& path, Model<float>& model) {
  const auto blobs = read_tensor_file(path);
  assign_blobs(model, blobs, true);
  auto find = [&](const std::string& name) -> const TensorBlob* {
    for (const auto& b : blobs) {
      if (b.name == name) return &b;
    }
    return nullptr;
  };
  auto counter = [&](const std::string& name) {
    const TensorBlob* b = find(name);
    if (b == nullptr || b->data.size() != 4) fail(ErrorKind::kCorruptFile, "checkpoint lacks " + name);
    std::uint64_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint64_t>(b->data[static_cast<std::size_t>(i)]) << (16 * i);
    return v;
  };
  TrainState st;
  st.adam.step = counter("train.adam_step");
  st.epochs_done = static_cast<std::size_t>(counter("train.epochs_done"));
  if (st.adam.step > 0) {
    for (const auto& nt : model.tensors()) {
      if (!nt.trainable) continue;
      const TensorBlob* m = find("adam.m." + nt.name);
      const TensorBlob* v = find("adam.v." + nt.name);
      if (m == nullptr || v == nullptr || m->data.size() != nt.tensor.size() ||
          v->data.size() != nt.tensor.size()) {
        fail(ErrorKind::kShapeMismatch, "checkpoint Adam state for '" + nt.name + "' missing or misshapen");
      }
      st.adam.m.push_back(m->data);
      st.adam.v.push_back(v->data);
    }
  }
  return st;
}

void write_epoch_log_csv(std::ostream& out, std::span<const EpochLog> logs) {
  out << "epoch,composite,mse,pearson,val_composite\n";
  for (const EpochLog& l : logs) {
    out << l.epoch << ',' << format_number(l.composite) << ',' << format_number(l.mse) << ','
        << format_number(l.pearson) << ','
        << (l.val_composite ? format_number(*l.val_composite) : std::string("nan")) << '\n';
  }
}

}  // namespace ecgr
