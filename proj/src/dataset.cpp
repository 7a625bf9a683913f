#include "ecgr/dataset.hpp"

#include <cmath>

#include "ecgr/error.hpp"
#include "ecgr/rng.hpp"

namespace ecgr {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

}  // namespace

std::vector<DatasetPair> build_dataset(std::span<const std::string> record_ids, std::uint64_t seed,
                                       std::span<const MaskConfig> configs) {
  std::vector<DatasetPair> out;
  out.reserve(record_ids.size() * configs.size());
  for (std::size_t r = 0; r < record_ids.size(); ++r) {
    for (std::size_t c = 0; c < configs.size(); ++c) {
      out.push_back({r, record_ids[r], configs[c], mix_seed(seed, r, c)});
    }
  }
  return out;
}

std::vector<DatasetPair> build_dataset(std::span<const std::string> record_ids, std::uint64_t seed) {
  const auto catalog = mask_catalog();
  return build_dataset(record_ids, seed, catalog);
}

MaskedEcg materialize(const DatasetPair& pair, const EcgRecord& target) {
  if (target.id() != pair.record_id) {
    fail(ErrorKind::kInvalidInput,
         "pair names record '" + pair.record_id + "' but got '" + target.id() + "'");
  }
  return mask_record(target, pair.config, pair.noise_seed, pair.record_index);
}

Split split_of(std::string_view record_id, const SplitFractions& fractions) {
  const double total = fractions.train + fractions.val + fractions.test;
  if (!(fractions.train >= 0.0 && fractions.val >= 0.0 && fractions.test >= 0.0 && total > 0.0)) {
    fail(ErrorKind::kConfig, "split fractions must be non-negative and not all zero");
  }
  const double u = static_cast<double>(mix_seed(fnv1a(record_id)) >> 11) * 0x1.0p-53 * total;
  if (u < fractions.train) return Split::kTrain;
  if (u < fractions.train + fractions.val) return Split::kVal;
  return Split::kTest;
}

DatasetSplits split_by_id(std::span<const std::string> record_ids, const SplitFractions& fractions) {
  DatasetSplits out;
  for (const std::string& id : record_ids) {
    switch (split_of(id, fractions)) {
      case Split::kTrain: out.train.push_back(id); break;
      case Split::kVal: out.val.push_back(id); break;
      case Split::kTest: out.test.push_back(id); break;
    }
  }
  return out;
}

nlohmann::json manifest_json(const DatasetSplits& splits) {
  return {{"train", splits.train}, {"val", splits.val}, {"test", splits.test}};
}

DatasetSplits manifest_from_json(const nlohmann::json& j) {
  DatasetSplits out;
  try {
    j.at("train").get_to(out.train);
    j.at("val").get_to(out.val);
    j.at("test").get_to(out.test);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kSchema, std::string("malformed dataset manifest: ") + e.what());
  }
  return out;
}

}  // namespace ecgr
