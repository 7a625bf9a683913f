#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ecgr/baseline.hpp"
#include "ecgr/error.hpp"
#include "ecgr/fiducials.hpp"
#include "ecgr/metrics.hpp"
#include "oracles.hpp"
#include "synth_fixtures.hpp"

using namespace ecgr;

namespace {

std::vector<float> f(std::initializer_list<double> v) { return {v.begin(), v.end()}; }

std::vector<EcgRecord> synth_corpus(std::size_t n, std::uint64_t seed) {
  SynthConfig c;
  c.num_records = n;
  c.seed = seed;
  std::vector<EcgRecord> out;
  for (const EcgRecord& r : synth_generate(c).records) out.push_back(preprocess_record(r, {}).record);
  return out;
}

// Replaces +-0.15 s around every other R peak by a straight line.
EcgRecord flatten_every_other_beat(const fixture::Beating& b) {
  EcgRecord out = b.record;
  const double fs = out.sampling_rate();
  auto lead = out.lead(LeadId::II);
  for (std::size_t k = 0; k < b.truth.r_times.size(); k += 2) {
    const auto c = static_cast<long>(std::lround(b.truth.r_times[k] * fs));
    const long lo = std::max(0L, c - 8), hi = std::min<long>(static_cast<long>(lead.size()) - 1, c + 8);
    for (long i = lo; i <= hi; ++i) {
      lead[i] = lead[lo] + (lead[hi] - lead[lo]) * static_cast<float>(i - lo) / static_cast<float>(hi - lo);
    }
  }
  return out;
}

}  // namespace

TEST(Pcc, Examples) {
  const auto x = f({0.1, 0.5, -0.3, 0.9, 0.0});
  std::vector<float> neg(x.size()), aff(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    neg[i] = -x[i];
    aff[i] = 2 * x[i] + 3;
  }
  EXPECT_NEAR(pcc(x, x), 1.0, 1e-12);
  EXPECT_NEAR(pcc(x, neg), -1.0, 1e-12);
  EXPECT_NEAR(pcc(aff, x), 1.0, 1e-6);
  EXPECT_EQ(pcc(x, f({1, 1, 1, 1, 1})), 0.0);
}

TEST(Pcc, SymmetricAndMatchesOracle) {
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    std::vector<float> a(40), b(40);
    for (auto& v : a) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : b) v = static_cast<float>(rng.uniform(-1, 1));
    EXPECT_NEAR(pcc(a, b), pcc(b, a), 1e-12);
    const std::vector<double> da(a.begin(), a.end()), db(b.begin(), b.end());
    EXPECT_NEAR(pcc(a, b), oracle::pearson(da, db), 1e-9);
  }
}

TEST(RmseMae, Examples) {
  const auto a = f({0.2, -0.4, 0.7});
  std::vector<float> b1(a);
  for (auto& v : b1) v += 1;
  EXPECT_EQ(rmse(a, a), 0.0);
  EXPECT_NEAR(rmse(a, b1), 1.0, 1e-6);
  EXPECT_NEAR(rmse(f({0, 0}), f({3, 4})), std::sqrt(12.5), 1e-12);
  EXPECT_EQ(mae(a, a), 0.0);
  EXPECT_EQ(mae(a, a, MaeMode::kMax), 0.0);
  EXPECT_NEAR(mae(a, b1), 1.0, 1e-6);
  EXPECT_NEAR(mae(a, b1, MaeMode::kMax), 1.0, 1e-6);
  EXPECT_EQ(mae(f({0, 0}), f({1, 3})), 2.0);
  EXPECT_EQ(mae(f({0, 0}), f({1, 3}), MaeMode::kMax), 3.0);
}

TEST(RmseMae, PowerMeanInequality) {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    std::vector<float> a(17), b(17);
    for (auto& v : a) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : b) v = static_cast<float>(rng.uniform(-1, 1));
    EXPECT_GE(rmse(a, b) + 1e-12, mae(a, b));
    EXPECT_GE(mae(a, b), 0.0);
  }
}

TEST(Dtw, Examples) {
  const auto x = f({0.3, -0.1, 0.8});
  EXPECT_EQ(dtw(x, x), 0.0);
  EXPECT_EQ(dtw(f({0, 0}), f({1, 1}), false), 2.0);
  EXPECT_EQ(dtw(f({1, 2, 3}), f({1, 1, 2, 2, 3, 3})), 0.0);
  EXPECT_THROW(dtw(f({}), x), Error);
}

TEST(Dtw, MatchesBruteForceOnSmallPairs) {
  // Exhaustive over lengths 1..4 and values {0..3}; the acceptance run covers length 6.
  std::vector<std::vector<double>> seqs;
  for (std::size_t len = 1; len <= 4; ++len) {
    std::size_t total = 1;
    for (std::size_t i = 0; i < len; ++i) total *= 4;
    for (std::size_t code = 0; code < total; ++code) {
      std::vector<double> s(len);
      std::size_t c = code;
      for (auto& v : s) {
        v = static_cast<double>(c % 4);
        c /= 4;
      }
      seqs.push_back(s);
    }
  }
  std::size_t checked = 0;
  for (std::size_t i = 0; i < seqs.size(); i += 3) {
    for (std::size_t j = 0; j < seqs.size(); j += 7) {
      const auto best = oracle::brute_force_dtw(seqs[i], seqs[j]);
      const std::vector<float> a(seqs[i].begin(), seqs[i].end()), b(seqs[j].begin(), seqs[j].end());
      ASSERT_EQ(dtw(a, b, false), best.cost);
      ASSERT_EQ(dtw(a, b, true), best.cost / static_cast<double>(best.length));
      ++checked;
    }
  }
  EXPECT_GT(checked, 5000u);
}

TEST(DeltaQt, IdentityPairAndFailure) {
  const auto b = fixture::synth_beating(65, 0.40, 0.10);
  EXPECT_EQ(delta_qt(b.record, b.record, LeadId::II), 0.0);
  EXPECT_EQ(delta_qrs(b.record, b.record, LeadId::II), 0.0);
  const EcgRecord flat(512, 51.2);
  EXPECT_FALSE(delta_qt(flat, b.record, LeadId::II));
  EXPECT_FALSE(delta_qrs(flat, b.record, LeadId::II));
}

TEST(DeltaQt, GeneratorPairs) {
  const auto a = fixture::synth_beating(60, 0.40, 0.10, 2);
  const auto b = fixture::synth_beating(60, 0.44, 0.10, 2);
  const auto dqt = delta_qt(a.record, b.record, LeadId::II);
  ASSERT_TRUE(dqt);
  EXPECT_NEAR(*dqt, 0.04, 0.02);
  const auto c = fixture::synth_beating(60, 0.40, 0.08, 2);
  const auto d = fixture::synth_beating(60, 0.40, 0.12, 2);
  const auto dqrs = delta_qrs(c.record, d.record, LeadId::II);
  ASSERT_TRUE(dqrs);
  EXPECT_NEAR(*dqrs, 0.04, 0.02);
}

TEST(RDetect, Examples) {
  const auto b = fixture::synth_beating(70, 0.40, 0.10, 1);
  EXPECT_EQ(r_detect_pct(b.record, b.record, LeadId::II), 100.0);
  EXPECT_EQ(r_detect_pct(EcgRecord(512, 51.2), b.record, LeadId::II), 0.0);
  const auto half = r_detect_pct(flatten_every_other_beat(b), b.record, LeadId::II);
  ASSERT_TRUE(half);
  EXPECT_NEAR(*half, 50.0, 10.0);
  EXPECT_FALSE(r_detect_pct(b.record, EcgRecord(512, 51.2), LeadId::II));
}

TEST(Sqi, PeriodicNoiseAndSingleBeat) {
  const auto b = fixture::synth_beating(70, 0.40, 0.10, 1);
  const auto good = sqi_avg_qrs(b.record, LeadId::II);
  ASSERT_TRUE(good);
  EXPECT_GT(*good, 0.9);

  double noise_sum = 0;
  int noise_n = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto q = sqi_avg_qrs(oracle::random_record(512, s), LeadId::II);
    if (!q) continue;
    EXPECT_LT(*q, 0.85);
    noise_sum += *q;
    ++noise_n;
  }
  ASSERT_GT(noise_n, 0);
  EXPECT_NEAR(noise_sum / noise_n, 0.5, 0.25);

  EcgRecord one(512, 51.2);
  for (std::size_t i = 250; i < 263; ++i) {
    one.at(1, i) = static_cast<float>(std::exp(-0.5 * std::pow((static_cast<double>(i) - 256.0) / 1.5, 2)));
  }
  EXPECT_EQ(detect_r_peaks(one.lead(LeadId::II), 51.2).size(), 1u);
  EXPECT_EQ(sqi_avg_qrs(one, LeadId::II), 1.0);
}

TEST(ScoreLead, PerfectCopyAndMaskedRegion) {
  const auto b = fixture::synth_beating(70, 0.40, 0.10, 1);
  const MaskedEcg all = apply_mask(b.record, PrimerMask(12, 512, true), 1);
  const EcgRecord same = copy_paste(all);
  for (LeadId lead : kAllLeads) {
    const LeadMetrics m = score_lead(same, b.record, lead, nullptr, ScoreOptions{});
    EXPECT_NEAR(*m.get("pcc"), 1.0, 1e-9);
    EXPECT_EQ(*m.get("rmse"), 0.0);
    EXPECT_EQ(*m.get("dtw"), 0.0);
  }
  // Masked region: only hidden cells are compared.
  const MaskedEcg c3 = mask_record(b.record, MaskConfig::Segment(3), 4);
  EcgRecord recon = b.record;
  for (std::size_t l = 0; l < 12; ++l)
    for (std::size_t n = 0; n < 512; ++n)
      if (c3.mask.keep(l, n)) recon.at(l, n) = 5.0f;  // garbage on primer cells only
  ScoreOptions masked;
  masked.region = Region::kMasked;
  masked.clinical = false;
  const LeadMetrics m = score_lead(recon, b.record, LeadId::V2, &c3.mask, masked);
  EXPECT_EQ(*m.get("rmse"), 0.0);
  EXPECT_FALSE(m.get("delta_qt_s"));
  EXPECT_THROW(score_lead(recon, b.record, LeadId::V2, nullptr, masked), Error);
}

TEST(ScoreLead, CopyPastePrimerRestrictionIsPerfect) {
  const auto b = fixture::synth_beating(70, 0.40, 0.10, 1);
  for (int k = 1; k <= 5; ++k) {
    const MaskedEcg m = mask_record(b.record, MaskConfig::Segment(k), 3);
    const EcgRecord out = copy_paste(m);
    for (std::size_t l = 0; l < 12; ++l) {
      std::vector<float> a, o;
      for (std::size_t n = 0; n < 512; ++n) {
        if (m.mask.keep(l, n)) {
          a.push_back(out.at(l, n));
          o.push_back(b.record.at(l, n));
        }
      }
      EXPECT_NEAR(pcc(a, o), 1.0, 1e-9);
    }
  }
}

TEST(Evaluate, DeterministicAndThreadIndependent) {
  const auto records = synth_corpus(6, 3);
  const std::vector<MaskConfig> configs = {MaskConfig::Segment(2), MaskConfig::Lead(LeadId::V2)};
  EvalOptions one;
  one.seed = 4;
  EvalOptions three = one;
  three.threads = 3;
  const Reconstructor cp = [](const MaskedEcg& m) { return copy_paste(m); };
  const auto a = evaluate(cp, records, configs, one);
  const auto b = evaluate(cp, records, configs, one);
  const auto c = evaluate(cp, records, configs, three);
  std::ostringstream sa, sb, sc;
  write_metrics_csv(sa, a);
  write_metrics_csv(sb, b);
  write_metrics_csv(sc, c);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(sa.str(), sc.str());
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[0].rows.size(), 6u * 12u);
  EXPECT_EQ(a[1].config_name, "C_V2");
}

TEST(Evaluate, NoiseReconstructorIsUncorrelated) {
  const auto records = synth_corpus(64, 5);
  EvalOptions eo;
  eo.score.clinical = false;
  const auto reports = evaluate(noise_reconstructor(1), records, {{MaskConfig::Segment(3)}}, eo);
  EXPECT_LT(std::abs(reports[0].summary("pcc").mean), 0.1);
}

TEST(CorrelationMatrix, CopyPasteStructure) {
  const auto records = synth_corpus(16, 6);
  EvalOptions eo;
  const CorrelationMatrix m = correlation_matrix([](const MaskedEcg& x) { return copy_paste(x); },
                                                 records, eo);
  double col_iii = 0, col_v5 = 0;
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_NEAR(m[i][i], 1.0, 1e-9);
    col_iii += m[i][ordinal(LeadId::III)];
    col_v5 += m[i][ordinal(LeadId::V5)];
  }
  EXPECT_LT(col_iii / 12, col_v5 / 12);
}

TEST(MetricsCsv, RoundTripAndNan) {
  MetricReport r{"C3", {}};
  MetricRow row{"rec-1", LeadId::aVL, {}};
  row.metrics.values[0] = 0.5;
  row.metrics.values[1] = 0.1;
  row.metrics.values[4] = 1.0 / 3.0;
  r.rows.push_back(row);
  row.lead = LeadId::V6;
  row.metrics.values[0] = -0.25;
  r.rows.push_back(row);
  std::ostringstream out;
  write_metrics_csv(out, std::span<const MetricReport>(&r, 1));
  const std::string text = out.str();
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "record,config,lead,pcc,rmse,mae_mean,mae_max,dtw,delta_qt_s,delta_qrs_s,r_detect_pct,"
            "sqi_avg_qrs");
  EXPECT_NE(text.find("nan"), std::string::npos);
  std::istringstream in(text);
  const auto back = read_metrics_csv(in);
  ASSERT_EQ(back.size(), 1u);
  ASSERT_EQ(back[0].rows.size(), 2u);
  EXPECT_EQ(back[0].rows[1].lead, LeadId::V6);
  EXPECT_EQ(back[0].rows[0].metrics.values[4], 1.0 / 3.0);
  EXPECT_FALSE(back[0].rows[0].metrics.values[5]);

  const MetricSummary s = back[0].summary("pcc");
  EXPECT_EQ(s.count, 2u);
  EXPECT_DOUBLE_EQ(s.mean, 0.125);
  EXPECT_DOUBLE_EQ(s.std, 0.375);
  EXPECT_EQ(back[0].summary("delta_qt_s").failures, 2u);
  const auto j = metrics_summary_json(back);
  EXPECT_EQ(j["configs"][0]["config"], "C3");
  EXPECT_TRUE(j["configs"][0]["overall"]["delta_qt_s"]["mean"].is_null());
  EXPECT_EQ(j["configs"][0]["per_lead"]["V6"]["pcc"]["mean"], -0.25);
}
