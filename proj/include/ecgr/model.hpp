#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ecgr/autodiff.hpp"
#include "ecgr/ecg.hpp"
#include "ecgr/masking.hpp"

namespace ecgr {

/// Hyperparameters of the hybrid 1D/2D U-Net. The defaults land near the
/// published 6.1M-parameter network; desk() is a small variant that trains in
/// minutes on one CPU core.
struct ModelConfig {
  std::array<std::size_t, 4> enc2d_channels{32, 64, 128, 256};
  std::array<std::size_t, 4> enc1d_channels_per_lead{8, 16, 32, 64};
  double leaky_slope = 0.2;
  double dropout_p = 0.2;
  std::size_t transition_kh = 13;
  std::size_t transition_kw = 3;
  std::size_t time_stride = 2;
  std::size_t num_leads = kNumLeads;
  std::size_t num_samples = 512;
  bool share_1d_weights_across_leads = false;

  static ModelConfig desk();

  /// Channels of the concatenated 2D/1D feature map at encoder level i.
  std::size_t level_channels(std::size_t i) const {
    return enc2d_channels[i] + enc1d_channels_per_lead[i];
  }

  /// Throws kConfig when the 4-level encoder/decoder cannot be symmetric.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <class T>
struct NamedTensor {
  std::string name;
  ad::Tensor<T> tensor;
  bool trainable = true;
};

template <class T>
class Model {
 public:
  static Model build(const ModelConfig& config, std::uint64_t init_seed);

  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }

  /// input [B, 1, L, N] -> reconstruction [B, 1, L, N] in (-1, 1).
  ad::Tensor<T> forward(ad::Tape<T>* tape, const ad::Tensor<T>& input, ad::Mode mode,
                        std::uint64_t dropout_seed = 0);

  /// Every persisted tensor in a fixed order: trainable parameters followed
  /// by their batch-norm running statistics.
  const std::vector<NamedTensor<T>>& tensors() const { return tensors_; }
  std::vector<NamedTensor<T>>& tensors() { return tensors_; }

  /// Number of trainable scalars.
  std::size_t parameter_count() const;

  void zero_grad();

  Model clone() const;

  /// Same architecture with every tensor converted to U.
  template <class U>
  Model<U> cast() const;

 private:
  struct Block {
    ad::Tensor<T> weight, bias, gamma, beta;
    ad::BatchNormStats<T> stats;
    bool has_norm = true;
  };

  explicit Model(ModelConfig config) : config_(std::move(config)) {}
  void register_block(const std::string& prefix, Block& block, const char* op);

  template <class U>
  friend class Model;

  ModelConfig config_;
  std::array<Block, 4> enc2d_;
  std::array<Block, 4> enc1d_;
  Block transition_;
  std::array<Block, 4> dec_;
  std::vector<NamedTensor<T>> tensors_;
};

/// Eval-mode reconstruction of one masked record.
EcgRecord reconstruct(Model<float>& model, const MaskedEcg& masked);

/// Batches masked records into a [B, 1, L, N] tensor.
template <class T>
ad::Tensor<T> to_input_tensor(const std::vector<const EcgRecord*>& records);

}  // namespace ecgr
