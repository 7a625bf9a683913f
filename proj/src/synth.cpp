#include "ecgr/synth.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "ecgr/error.hpp"
#include "ecgr/rng.hpp"

namespace ecgr {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Wave {
  double center;  // relative to R, seconds
  double sigma;
  double amp_a;   // amplitude in source A
  double amp_b;   // amplitude in source B
};

// Wave layout of one beat. With Q at -0.35 D and S offset at +0.65 D the
// configured QRS duration D is exactly S offset minus Q.
std::array<Wave, 5> beat_waves(double qrs, double qt, double amp_jitter) {
  const double q_center = -0.35 * qrs;
  const double s_sigma = 0.15 * qrs;
  const double s_center = 0.65 * qrs - 2.0 * s_sigma;
  const double t_sigma = 0.1 * qt;
  const double t_end = q_center + qt;
  return {{
      {-0.16, 0.025, 0.12 * amp_jitter, 0.05},
      {q_center, 0.12 * qrs, -0.12 * amp_jitter, -0.05},
      {0.0, 0.12 * qrs, 1.0 * amp_jitter, 0.35},
      {s_center, s_sigma, -0.25 * amp_jitter, -0.40},
      {t_end - 2.0 * t_sigma, t_sigma, 0.30 * amp_jitter, 0.12},
  }};
}

// Source mixing weights (A, B) for I, II, V1..V6.
constexpr std::array<std::array<double, 2>, 8> kMix = {{
    {0.70, 0.20},
    {1.00, 0.35},
    {-0.35, 0.60},
    {0.10, 0.90},
    {0.50, 0.60},
    {0.90, 0.30},
    {1.00, 0.10},
    {0.80, 0.05},
}};

// Band-limited noise: a few random sinusoids in [f_lo, f_hi] Hz, scaled to
// unit RMS.
std::vector<double> smooth_noise(Rng& rng, std::size_t n, double fs, double f_lo, double f_hi) {
  constexpr int kTones = 8;
  std::array<double, kTones> freq{}, phase{};
  for (int k = 0; k < kTones; ++k) {
    freq[k] = rng.uniform(f_lo, f_hi);
    phase[k] = rng.uniform(0.0, kTwoPi);
  }
  const double norm = std::sqrt(2.0 / kTones);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    double v = 0.0;
    for (int k = 0; k < kTones; ++k) v += std::sin(kTwoPi * freq[k] * t + phase[k]);
    out[i] = norm * v;
  }
  return out;
}

}  // namespace

std::size_t SynthConfig::num_samples() const {
  return static_cast<std::size_t>(std::llround(sampling_rate * duration_s));
}

void SynthConfig::validate() const {
  auto ok = [](const Range& r) { return r.lo > 0.0 && r.hi >= r.lo; };
  if (!ok(heart_rate_bpm) || !ok(qt_s) || !ok(qrs_s)) {
    fail(ErrorKind::kConfig, "synth ranges must be positive and non-empty");
  }
  if (!(sampling_rate > 0.0) || !(duration_s > 0.0) || num_samples() < 2) {
    fail(ErrorKind::kConfig, "synth sampling rate and duration must be positive");
  }
  if (baseline_wander_amp < 0.0 || noise_std < 0.0 || lead_iii_independent_amp < 0.0 ||
      precordial_independent_amp < 0.0) {
    fail(ErrorKind::kConfig, "synth noise amplitudes must be non-negative");
  }
}

std::pair<EcgRecord, GroundTruth> synth_record(const SynthConfig& config, std::size_t index,
                                               double heart_rate_bpm, double qt_s, double qrs_s) {
  config.validate();
  Rng rng(mix_seed(config.seed, index, 0x73796e7468ULL));
  const double fs = config.sampling_rate;
  const double duration = config.duration_s;
  const std::size_t n = config.num_samples();
  const double amp_jitter = rng.uniform(0.9, 1.1);
  const auto waves = beat_waves(qrs_s, qt_s, amp_jitter);

  GroundTruth truth;
  truth.record_id = "synth-" + std::to_string(config.seed) + "-" + std::to_string(index);
  truth.heart_rate_bpm = heart_rate_bpm;
  truth.qt_s = qt_s;
  truth.qrs_s = qrs_s;

  const double rr = 60.0 / heart_rate_bpm;
  std::vector<double> r_times;
  for (double t = rng.uniform(0.1, 0.1 + rr) - rr; t < duration + rr;
       t += rr * (1.0 + 0.02 * rng.normal())) {
    r_times.push_back(t);
  }

  std::vector<double> src_a(n, 0.0), src_b(n, 0.0);
  for (double r : r_times) {
    for (const Wave& w : waves) {
      const double c = r + w.center;
      const auto lo = static_cast<std::ptrdiff_t>(std::floor((c - 5.0 * w.sigma) * fs));
      const auto hi = static_cast<std::ptrdiff_t>(std::ceil((c + 5.0 * w.sigma) * fs));
      for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(lo, 0);
           i <= std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(n) - 1); ++i) {
        const double z = (static_cast<double>(i) / fs - c) / w.sigma;
        const double g = std::exp(-0.5 * z * z);
        src_a[static_cast<std::size_t>(i)] += w.amp_a * g;
        src_b[static_cast<std::size_t>(i)] += w.amp_b * g;
      }
    }
    const BeatTruth beat{r, r + waves[1].center, r + waves[3].center + 2.0 * waves[3].sigma,
                         r + waves[4].center + 2.0 * waves[4].sigma};
    if (r >= 0.0 && r <= duration) truth.r_times.push_back(r);
    if (beat.q >= 0.0 && beat.t_end <= duration) truth.beats.push_back(beat);
  }

  const std::vector<double> lead_iii_noise = smooth_noise(rng, n, fs, 0.1, 1.0);
  std::array<std::vector<float>, 8> leads;
  for (std::size_t k = 0; k < 8; ++k) {
    const double wander_amp = config.baseline_wander_amp * rng.uniform(0.5, 1.0);
    const double wander_f = rng.uniform(0.05, 0.3);
    const double wander_phase = rng.uniform(0.0, kTwoPi);
    const bool precordial = k >= 2;
    const std::vector<double> own =
        precordial ? smooth_noise(rng, n, fs, 0.2, 3.0) : std::vector<double>(n, 0.0);
    leads[k].resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / fs;
      double v = kMix[k][0] * src_a[i] + kMix[k][1] * src_b[i];
      v += wander_amp * std::sin(kTwoPi * wander_f * t + wander_phase);
      v += config.noise_std * rng.normal();
      if (k < 2) v += (k == 0 ? -0.5 : 0.5) * config.lead_iii_independent_amp * lead_iii_noise[i];
      if (precordial) v += config.precordial_independent_amp * own[i];
      leads[k][i] = static_cast<float>(v);
    }
  }

  EightLeads eight{std::move(leads[0]), std::move(leads[1]), std::move(leads[2]),
                   std::move(leads[3]), std::move(leads[4]), std::move(leads[5]),
                   std::move(leads[6]), std::move(leads[7])};
  EcgRecord record = assemble_record(eight, fs, truth.record_id);
  return {std::move(record), std::move(truth)};
}

SynthOutput synth_generate(const SynthConfig& config) {
  config.validate();
  SynthOutput out;
  out.records.reserve(config.num_records);
  out.truth.reserve(config.num_records);
  for (std::size_t i = 0; i < config.num_records; ++i) {
    Rng pick(mix_seed(config.seed, i, 0x7061726dULL));
    const double hr = pick.uniform(config.heart_rate_bpm.lo, config.heart_rate_bpm.hi);
    const double qt = pick.uniform(config.qt_s.lo, config.qt_s.hi);
    const double qrs = pick.uniform(config.qrs_s.lo, config.qrs_s.hi);
    auto [record, truth] = synth_record(config, i, hr, qt, qrs);
    out.records.push_back(std::move(record));
    out.truth.push_back(std::move(truth));
  }
  return out;
}

}  // namespace ecgr
