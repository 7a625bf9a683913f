#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "ecgr/dataset.hpp"
#include "ecgr/loss.hpp"
#include "ecgr/model.hpp"

namespace ecgr {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double lr = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double alpha = 0.1;
  bool pearson_only = false;
  std::uint64_t seed = 0;
  /// Write a checkpoint every k epochs to checkpoint_path (0 = never).
  std::size_t checkpoint_every = 0;
  std::filesystem::path checkpoint_path;
  /// Pairs drawn (without replacement, reshuffled every epoch) per epoch;
  /// 0 uses every pair.
  std::size_t pairs_per_epoch = 0;

  LossParams loss() const;
  void validate() const;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
};

/// One bias-corrected Adam update of every tensor in `params` from its
/// gradient buffer. State vectors are allocated on first use; throws
/// kShapeMismatch if they no longer match the parameters.
void adam_step(std::span<const ad::Tensor<float>> params, AdamState& state, const TrainConfig& config);

struct EpochLog {
  std::size_t epoch = 0;
  double composite = 0.0;
  double mse = 0.0;
  double pearson = 0.0;
  std::optional<double> val_composite;
};

/// Optimizer progress; pass it back to train() to resume.
struct TrainState {
  AdamState adam;
  std::size_t epochs_done = 0;
};

/// Pairs index into `records` by record_index.
struct PairSet {
  std::span<const DatasetPair> pairs;
  std::span<const EcgRecord> records;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Minimizes the composite loss with Adam. Epoch e shuffles with a generator
/// seeded from (seed, e) and batch b uses dropout seed (seed, e, b), so a run
/// resumed from a checkpoint continues exactly as an uninterrupted one.
/// Throws kInvalidInput on an empty training set and kNonFinite when a batch
/// loss is not finite.
std::vector<EpochLog> train(Model<float>& model, const PairSet& train_set, const TrainConfig& config,
                            TrainState* state = nullptr, std::optional<PairSet> val_set = std::nullopt,
                            const EpochCallback& on_epoch = {});

/// Mean composite loss in eval mode.
double validate(Model<float>& model, const PairSet& set, const LossParams& loss,
                std::size_t batch_size = 16);

/// Model tensors plus Adam moments ("adam.m.<name>", "adam.v.<name>"),
/// the step counter and the number of finished epochs.
void save_checkpoint(const std::filesystem::path& path, const Model<float>& model,
                     const TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path, Model<float>& model);

void write_epoch_log_csv(std::ostream& out, std::span<const EpochLog> logs);

}  // namespace ecgr
