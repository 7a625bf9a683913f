#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ecgr/ecg.hpp"
#include "ecgr/masking.hpp"

namespace ecgr {

/// One (masked input, target) training pair, kept as metadata; the masked
/// record is produced on demand by materialize().
struct DatasetPair {
  std::size_t record_index = 0;
  std::string record_id;
  MaskConfig config;
  std::uint64_t noise_seed = 0;

  std::string config_name() const { return config.name(); }
};

/// Every record crossed with every config, record-major and in config order
/// (17 pairs per record with the default catalog).
std::vector<DatasetPair> build_dataset(std::span<const std::string> record_ids, std::uint64_t seed,
                                       std::span<const MaskConfig> configs);
std::vector<DatasetPair> build_dataset(std::span<const std::string> record_ids,
                                       std::uint64_t seed = 0);

/// The masked input of a pair; `target` must be the record it names.
MaskedEcg materialize(const DatasetPair& pair, const EcgRecord& target);

enum class Split { kTrain, kVal, kTest };

struct SplitFractions {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

/// Deterministic split membership from a hash of the record id, so every
/// augmented copy of a record lands in the same split.
Split split_of(std::string_view record_id, const SplitFractions& fractions = {});

struct DatasetSplits {
  std::vector<std::string> train, val, test;
};

DatasetSplits split_by_id(std::span<const std::string> record_ids,
                          const SplitFractions& fractions = {});

nlohmann::json manifest_json(const DatasetSplits& splits);
DatasetSplits manifest_from_json(const nlohmann::json& j);

}  // namespace ecgr
