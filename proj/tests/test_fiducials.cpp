#include <gtest/gtest.h>

#include <cmath>

#include "ecgr/fiducials.hpp"
#include "synth_fixtures.hpp"

using namespace ecgr;

namespace {

constexpr double kFs = 51.2;

const BeatTruth* truth_for(const GroundTruth& t, double r_seconds) {
  for (const BeatTruth& b : t.beats) {
    if (std::abs(b.r - r_seconds) <= 0.03) return &b;
  }
  return nullptr;
}

void expect_peaks_match(const fixture::Beating& b, std::size_t lo, std::size_t hi) {
  const auto peaks = detect_r_peaks(b.record.lead(LeadId::II), kFs);
  EXPECT_GE(peaks.size(), lo);
  EXPECT_LE(peaks.size(), hi);
  for (std::size_t i = 1; i < peaks.size(); ++i) {
    EXPECT_GT(peaks[i], peaks[i - 1]);
    EXPECT_GE(static_cast<double>(peaks[i] - peaks[i - 1]), 0.2 * kFs);
  }
  const double duration = static_cast<double>(b.record.num_samples()) / kFs;
  for (std::size_t p : peaks) {
    // A beat cut by the record boundary has no ground-truth R inside the record.
    if (p / kFs < 0.15 || p / kFs > duration - 0.15) continue;
    double nearest = 1e9;
    for (double r : b.truth.r_times) nearest = std::min(nearest, std::abs(p / kFs - r));
    EXPECT_LE(nearest, 0.03) << "peak at " << p / kFs;
  }
}

}  // namespace

TEST(RPeaks, SixtyBpm) {
  for (std::size_t i = 0; i < 3; ++i) {
    const auto b = fixture::synth_beating(60, 0.40, 0.10, i);
    expect_peaks_match(b, 9, 11);
  }
}

TEST(RPeaks, HundredBpm) {
  const auto b = fixture::synth_beating(100, 0.36, 0.09, 1);
  expect_peaks_match(b, 16, 17);
}

TEST(RPeaks, FlatAndShortSignals) {
  const std::vector<float> zeros(512, 0.0f);
  EXPECT_TRUE(detect_r_peaks(zeros, kFs).empty());
  const auto b = fixture::synth_beating(70, 0.40, 0.10);
  const auto lead = b.record.lead(LeadId::II);
  EXPECT_TRUE(detect_r_peaks(lead.subspan(0, 90), kFs).empty());  // < 2 s
}

TEST(SegmentBeats, WindowArithmetic) {
  const std::vector<std::size_t> peaks = {10, 256, 500};  // 0.2 s, 5.0 s, 9.77 s
  const auto w = segment_beats(512, peaks, kFs);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0].r, 256u);
  EXPECT_EQ(w[0].start, 235u);  // floor(256 - 20.48)
  EXPECT_EQ(w[0].end, 286u);    // floor(256 + 30.72)
  EXPECT_TRUE(segment_beats(512, {}, kFs).empty());
}

TEST(DetectQ, RampAndFlatConventions) {
  std::vector<float> x(100, 0.0f);
  const BeatWindow beat{50, 30, 80};
  const auto q_span = static_cast<std::size_t>(std::floor(0.08 * kFs));
  EXPECT_EQ(detect_q(x, beat, kFs), 50 - q_span);  // flat: first index
  for (std::size_t i = 0; i < 100; ++i) x[i] = static_cast<float>(i) * 0.01f;
  EXPECT_EQ(detect_q(x, beat, kFs), 50 - q_span);  // rising ramp: search start
}

TEST(Fiducials, PointsNearGroundTruth) {
  std::size_t beats = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto b = fixture::synth_beating(55 + 7.0 * i, 0.38 + 0.02 * i, 0.08 + 0.01 * i, i);
    const auto lead = b.record.lead(LeadId::II);
    for (const BeatWindow& w : segment_beats(lead.size(), detect_r_peaks(lead, kFs), kFs)) {
      const BeatTruth* t = truth_for(b.truth, w.r / kFs);
      if (!t) continue;
      ++beats;
      EXPECT_LE(std::abs(detect_q(lead, w, kFs) / kFs - t->q), 0.025);
      const auto te = detect_t_end(lead, w, kFs);
      ASSERT_TRUE(te);
      EXPECT_LE(std::abs(*te / kFs - t->t_end), 0.03);
      EXPECT_LT(detect_q(lead, w, kFs), w.r);
      EXPECT_GT(*te, w.r);
    }
  }
  EXPECT_GE(beats, 20u);
}

TEST(Fiducials, FlatBeatFails) {
  const std::vector<float> flat(512, 0.1f);
  const BeatWindow w{256, 235, 286};
  EXPECT_FALSE(detect_t_end(flat, w, kFs));
  EXPECT_FALSE(qrs_duration(flat, w, kFs));
  EXPECT_FALSE(mean_qt(flat, kFs));
}

TEST(MeanQt, MatchesConfiguredInterval) {
  for (std::size_t i = 0; i < 3; ++i) {
    const auto b = fixture::synth_beating(65, 0.40, 0.10, i);
    const auto qt = mean_qt(b.record.lead(LeadId::II), kFs);
    ASSERT_TRUE(qt);
    EXPECT_NEAR(*qt, 0.40, 0.02);
    EXPECT_EQ(mean_qt(b.record.lead(LeadId::II), kFs), qt);
  }
}

TEST(MeanQt, PairDifference) {
  const auto shortqt = fixture::synth_beating(60, 0.36, 0.10, 3);
  const auto longqt = fixture::synth_beating(60, 0.44, 0.10, 3);
  const auto a = mean_qt(shortqt.record.lead(LeadId::II), kFs);
  const auto b = mean_qt(longqt.record.lead(LeadId::II), kFs);
  ASSERT_TRUE(a && b);
  EXPECT_NEAR(*b - *a, 0.08, 0.02);
}

TEST(MeanQt, ZeroRecordHasNoBeats) {
  const std::vector<float> zeros(512, 0.0f);
  EXPECT_FALSE(mean_qt(zeros, kFs));
  EXPECT_FALSE(mean_qrs(zeros, kFs));
}

TEST(QrsDuration, MatchesConfiguredWidth) {
  for (std::size_t i = 0; i < 3; ++i) {
    const auto b = fixture::synth_beating(70, 0.40, 0.10, i);
    const auto lead = b.record.lead(LeadId::II);
    const auto qrs = mean_qrs(lead, kFs);
    ASSERT_TRUE(qrs);
    EXPECT_NEAR(*qrs, 0.10, 0.02);
    EXPECT_EQ(mean_qrs(lead, kFs), qrs);
  }
}
