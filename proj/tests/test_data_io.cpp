#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <fstream>
#include <set>
#include <sstream>

#include "ecgr/csv_io.hpp"
#include "ecgr/dataset.hpp"
#include "ecgr/error.hpp"
#include "ecgr/synth.hpp"
#include "ecgr/weights_io.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace ecgr;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no ecgr::Error thrown";
  return ErrorKind::kInvalidInput;
}

std::vector<std::string> ids(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("rec-" + std::to_string(i));
  return out;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.enc2d_channels = {2, 2, 3, 3};
  c.enc1d_channels_per_lead = {1, 2, 2, 2};
  c.num_samples = 32;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary);
  f << bytes;
}

}  // namespace

TEST(Synth, DeterministicPerSeed) {
  SynthConfig c;
  c.num_records = 3;
  c.seed = 11;
  const auto a = synth_generate(c);
  const auto b = synth_generate(c);
  ASSERT_EQ(a.records.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a.records[i], b.records[i]);
  c.seed = 12;
  EXPECT_NE(synth_generate(c).records[0], a.records[0]);
  EXPECT_EQ(a.records[1].id(), "synth-11-1");
  EXPECT_EQ(a.records[0].num_samples(), 5000u);
}

TEST(Synth, EinthovenAndTruthConsistency) {
  SynthConfig c;
  c.num_records = 6;
  c.seed = 3;
  const auto out = synth_generate(c);
  for (std::size_t r = 0; r < out.records.size(); ++r) {
    const EcgRecord& rec = out.records[r];
    for (std::size_t n = 0; n < rec.num_samples(); ++n) {
      const float i = rec.at(0, n), ii = rec.at(1, n), iii = rec.at(2, n);
      // 4 ulp of the largest operand.
      const float mag = std::max({std::abs(i), std::abs(ii), std::abs(iii)});
      ASSERT_LE(std::abs((i + iii) - ii), 4 * mag * std::numeric_limits<float>::epsilon() + 1e-30f);
    }
    const GroundTruth& t = out.truth[r];
    EXPECT_EQ(t.record_id, rec.id());
    EXPECT_GE(t.heart_rate_bpm, c.heart_rate_bpm.lo);
    EXPECT_LE(t.heart_rate_bpm, c.heart_rate_bpm.hi);
    EXPECT_TRUE(std::is_sorted(t.r_times.begin(), t.r_times.end()));
    // Beats cut by the record boundary keep their R time but have no full truth.
    EXPECT_LE(t.beats.size(), t.r_times.size());
    EXPECT_GE(t.beats.size() + 2, t.r_times.size());
    for (const BeatTruth& b : t.beats) {
      EXPECT_NE(std::find(t.r_times.begin(), t.r_times.end(), b.r), t.r_times.end());
      EXPECT_NEAR(b.t_end - b.q, t.qt_s, 1e-12);
      EXPECT_LT(b.q, b.r);
      EXPECT_LT(b.r, b.t_end);
    }
  }
}

TEST(Synth, RejectsBadConfig) {
  SynthConfig c;
  c.heart_rate_bpm = {80, 50};
  EXPECT_EQ(kind_of([&] { synth_generate(c); }), ErrorKind::kConfig);
  c = {};
  c.noise_std = -1;
  EXPECT_EQ(kind_of([&] { synth_generate(c); }), ErrorKind::kConfig);
}

TEST(BuildDataset, SeventeenPairsPerRecordInRecordMajorOrder) {
  const auto in = ids(5);
  const auto pairs = build_dataset(in, 9);
  const auto catalog = mask_catalog();
  ASSERT_EQ(pairs.size(), 5u * 17u);
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t c = 0; c < 17; ++c) {
      const DatasetPair& p = pairs[r * 17 + c];
      EXPECT_EQ(p.record_index, r);
      EXPECT_EQ(p.record_id, in[r]);
      EXPECT_EQ(p.config, catalog[c]);
    }
  }
  std::set<std::uint64_t> seeds;
  for (const auto& p : pairs) seeds.insert(p.noise_seed);
  EXPECT_EQ(seeds.size(), pairs.size());
  const auto again = build_dataset(in, 9);
  for (std::size_t i = 0; i < pairs.size(); ++i) EXPECT_EQ(again[i].noise_seed, pairs[i].noise_seed);
}

TEST(BuildDataset, Cardinality) {
  EXPECT_EQ(build_dataset(ids(4498)).size(), 76466u);
  EXPECT_TRUE(build_dataset(std::vector<std::string>{}).empty());
}

TEST(BuildDataset, MaterializeChecksRecord) {
  const EcgRecord rec = oracle::random_record(64, 1);
  const auto pairs = build_dataset(std::vector<std::string>{rec.id()}, 2);
  const MaskedEcg m = materialize(pairs[2], rec);
  EXPECT_EQ(m.mask, primer_mask(pairs[2].config, 64));
  EXPECT_EQ(m.source_id, rec.id());
  EXPECT_EQ(kind_of([&] { materialize(pairs[0], oracle::random_record(64, 2)); }),
            ErrorKind::kInvalidInput);
}

TEST(Csv, RoundTripIsExact) {
  EcgRecord rec = oracle::random_record(512, 4);
  rec.at(3, 7) = 1e-30f;
  rec.at(5, 9) = -0.0f;
  std::stringstream s;
  write_csv(s, rec);
  const EcgRecord back = read_csv(s, rec.id());
  ASSERT_EQ(back.num_samples(), 512u);
  EXPECT_EQ(back.sampling_rate(), rec.sampling_rate());
  for (std::size_t i = 0; i < rec.data().size(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint32_t>(back.data()[i]), std::bit_cast<std::uint32_t>(rec.data()[i]));
  }
}

TEST(Csv, ColumnOrderFollowsHeader) {
  std::string text = "# fs=2\nV6,V5,V4,V3,V2,V1,aVF,aVL,aVR,III,II,I\n";
  text += "12,11,10,9,8,7,6,5,4,3,2,1\n";
  std::istringstream in(text);
  const EcgRecord rec = read_csv(in);
  for (std::size_t l = 0; l < 12; ++l) EXPECT_EQ(rec.at(l, 0), static_cast<float>(l + 1));
}

TEST(Csv, SchemaErrors) {
  const std::string header = "# fs=500\nI,II,III,aVR,aVL,aVF,V1,V2,V3,V4,V5,V6\n";
  const auto kind = [](const std::string& text) {
    return kind_of([&] {
      std::istringstream in(text);
      read_csv(in);
    });
  };
  EXPECT_EQ(kind(header + "1,2,3,4,5,6,7,8,9,10,11,12,13\n"), ErrorKind::kSchema);
  EXPECT_EQ(kind(header + "1,2,3,4,5,6,7,8,9,10,11,x\n"), ErrorKind::kSchema);
  EXPECT_EQ(kind(header + "1,2,3,4,5,6,7,8,9,10,11,12\n1,2,3\n"), ErrorKind::kSchema);
  EXPECT_EQ(kind("# fs=500\nI,II,III,aVR,aVL,aVF,V1,V2,V3,V4,V5,V5\n1,2,3,4,5,6,7,8,9,10,11,12\n"),
            ErrorKind::kSchema);
  EXPECT_EQ(kind("I,II\n"), ErrorKind::kSchema);
  EXPECT_EQ(kind(header), ErrorKind::kSchema);
  EXPECT_EQ(kind(""), ErrorKind::kSchema);
}

TEST(Csv, FileRoundTripAndMissingFile) {
  fixture::TempDir dir;
  const EcgRecord rec = oracle::random_record(100, 5);
  write_csv(dir / "r.csv", rec);
  const EcgRecord back = read_csv(dir / "r.csv");
  EXPECT_EQ(back.data().size(), rec.data().size());
  EXPECT_EQ(back.id(), "r");
  EXPECT_EQ(kind_of([&] { read_csv(dir / "missing.csv"); }), ErrorKind::kIo);
}

TEST(MaskJson, RoundTrip) {
  for (const MaskConfig& c : mask_catalog()) {
    const PrimerMask m = primer_mask(c, 512);
    const auto j = mask_to_json(m, c.name(), "rec");
    EXPECT_EQ(mask_from_json(j), m);
  }
  EXPECT_EQ(kind_of([] { mask_from_json(nlohmann::json{{"x", 1}}); }), ErrorKind::kSchema);
}

TEST(Weights, BitwiseRoundTrip) {
  fixture::TempDir dir;
  Model<float> a = Model<float>::build(tiny_config(), 3);
  save_weights(a, dir / "w.ecgr");
  Model<float> b = load_weights(dir / "w.ecgr", tiny_config());
  ASSERT_EQ(a.tensors().size(), b.tensors().size());
  for (std::size_t t = 0; t < a.tensors().size(); ++t) {
    const auto& x = a.tensors()[t].tensor.data();
    const auto& y = b.tensors()[t].tensor.data();
    ASSERT_EQ(x.size(), y.size());
    EXPECT_EQ(std::memcmp(x.data(), y.data(), x.size() * sizeof(float)), 0) << a.tensors()[t].name;
  }
  save_weights(b, dir / "w2.ecgr");
  EXPECT_EQ(slurp(dir / "w.ecgr"), slurp(dir / "w2.ecgr"));
}

TEST(Weights, CorruptFilesAreRejected) {
  fixture::TempDir dir;
  const Model<float> m = Model<float>::build(tiny_config(), 3);
  save_weights(m, dir / "w.ecgr");
  const std::string bytes = slurp(dir / "w.ecgr");

  spit(dir / "trunc.ecgr", bytes.substr(0, bytes.size() - 3));
  EXPECT_EQ(kind_of([&] { load_weights(dir / "trunc.ecgr", tiny_config()); }), ErrorKind::kCorruptFile);

  std::string magic = bytes;
  magic[0] = 'X';
  spit(dir / "magic.ecgr", magic);
  EXPECT_EQ(kind_of([&] { load_weights(dir / "magic.ecgr", tiny_config()); }), ErrorKind::kBadMagic);

  std::string version = bytes;
  version[4] = static_cast<char>(kWeightsFormatVersion + 1);
  spit(dir / "version.ecgr", version);
  EXPECT_EQ(kind_of([&] { load_weights(dir / "version.ecgr", tiny_config()); }),
            ErrorKind::kVersionMismatch);

  spit(dir / "extra.ecgr", bytes + "x");
  EXPECT_EQ(kind_of([&] { load_weights(dir / "extra.ecgr", tiny_config()); }), ErrorKind::kCorruptFile);
}

TEST(Weights, ShapeMismatchNamesTensor) {
  fixture::TempDir dir;
  save_weights(Model<float>::build(tiny_config(), 3), dir / "w.ecgr");
  ModelConfig other = tiny_config();
  other.enc2d_channels[0] = 4;
  try {
    load_weights(dir / "w.ecgr", other);
    FAIL() << "expected a shape mismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShapeMismatch);
    EXPECT_NE(std::string(e.what()).find("'"), std::string::npos);
  }
}

TEST(Weights, ModelConfigJsonRoundTrip) {
  for (const ModelConfig& c : {ModelConfig{}, ModelConfig::desk(), tiny_config()}) {
    EXPECT_EQ(model_config_from_json(model_config_to_json(c)), c);
  }
  EXPECT_EQ(kind_of([] { model_config_from_json(nlohmann::json{{"x", 1}}); }), ErrorKind::kSchema);
}

TEST(Splits, DeterministicDisjointAndNearTarget) {
  const auto in = ids(2000);
  const DatasetSplits s = split_by_id(in);
  EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), in.size());
  EXPECT_NEAR(static_cast<double>(s.train.size()) / 2000, 0.70, 0.04);
  EXPECT_NEAR(static_cast<double>(s.val.size()) / 2000, 0.15, 0.03);
  for (const auto& id : s.val) EXPECT_EQ(split_of(id), Split::kVal);
  // A record's split does not depend on which other records are present.
  const auto part = split_by_id(std::span<const std::string>(in).subspan(0, 100));
  for (const auto& id : part.test) EXPECT_EQ(split_of(id), Split::kTest);
  EXPECT_EQ(kind_of([] { split_of("a", {-1, 1, 1}); }), ErrorKind::kConfig);
}

TEST(Splits, ManifestRoundTrip) {
  const DatasetSplits s = split_by_id(ids(50));
  const DatasetSplits back = manifest_from_json(manifest_json(s));
  EXPECT_EQ(back.train, s.train);
  EXPECT_EQ(back.val, s.val);
  EXPECT_EQ(back.test, s.test);
  EXPECT_EQ(kind_of([] { manifest_from_json(nlohmann::json::object()); }), ErrorKind::kSchema);
}
