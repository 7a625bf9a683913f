#include "ecgr/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "ecgr/error.hpp"

namespace ecgr {

namespace {

using cplx = std::complex<double>;

constexpr double kPi = std::numbers::pi;

// Resampler kernel half-width in zero crossings of the anti-alias sinc.
constexpr double kSincZeroCrossings = 10.0;

double blackman(double u) {
  // u in [-1, 1]
  const double t = kPi * (u + 1.0);
  return 0.42 - 0.5 * std::cos(t) + 0.08 * std::cos(2.0 * t);
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = kPi * x;
  return std::sin(px) / px;
}

// Steady-state direct-form-II-transposed state for a unit step input.
std::array<double, 2> step_state(const Biquad& s, double dc_gain) {
  const double z2 = s.b2 - s.a2 * dc_gain;
  const double z1 = s.b1 - s.a1 * dc_gain + z2;
  return {z1, z2};
}

void run_cascade(const SosFilter& sos, std::vector<double>& x, bool steady_start) {
  double level = x.empty() ? 0.0 : x.front();
  for (const Biquad& s : sos) {
    const double den = 1.0 + s.a1 + s.a2;
    const double gain = den != 0.0 ? (s.b0 + s.b1 + s.b2) / den : 0.0;
    double z1 = 0.0, z2 = 0.0;
    if (steady_start) {
      const auto zi = step_state(s, gain);
      z1 = zi[0] * level;
      z2 = zi[1] * level;
    }
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
    level *= gain;
  }
}

}  // namespace

SosFilter butterworth_bandpass(int order, double low_hz, double high_hz, double fs) {
  if (order < 1) fail(ErrorKind::kConfig, "filter order must be positive");
  if (!(low_hz > 0.0 && low_hz < high_hz)) {
    fail(ErrorKind::kConfig, "bandpass edges must satisfy 0 < low < high");
  }
  if (!(fs > 2.0 * high_hz)) {
    fail(ErrorKind::kConfig,
         "sampling rate too low for the upper cut-off; filter before downsampling");
  }
  const double k2 = 2.0 * fs;
  const double w1 = k2 * std::tan(kPi * low_hz / fs);
  const double w2 = k2 * std::tan(kPi * high_hz / fs);
  const double w0sq = w1 * w2;
  const double bw = w2 - w1;

  std::vector<cplx> poles;
  poles.reserve(2 * static_cast<std::size_t>(order));
  for (int k = 0; k < order; ++k) {
    const cplx proto = std::polar(1.0, kPi * (2.0 * k + order + 1) / (2.0 * order));
    const cplx half = proto * bw * 0.5;
    const cplx root = std::sqrt(half * half - w0sq);
    for (const cplx s : {half + root, half - root}) {
      poles.push_back((k2 + s) / (k2 - s));
    }
  }

  std::vector<cplx> upper;
  std::vector<double> reals;
  for (const cplx& p : poles) {
    if (std::abs(p.imag()) > 1e-12) {
      if (p.imag() > 0.0) upper.push_back(p);
    } else {
      reals.push_back(p.real());
    }
  }
  std::sort(reals.begin(), reals.end());

  SosFilter sos;
  for (const cplx& p : upper) {
    sos.push_back({1.0, 0.0, -1.0, -2.0 * p.real(), std::norm(p)});
  }
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2) {
    sos.push_back({1.0, 0.0, -1.0, -(reals[i] + reals[i + 1]), reals[i] * reals[i + 1]});
  }

  // Unit gain at the digital image of the analog centre frequency.
  const double f_center = std::atan(std::sqrt(w0sq) / k2) * fs / kPi;
  const double g = sos_gain(sos, f_center, fs);
  const double scale = std::pow(1.0 / g, 1.0 / static_cast<double>(sos.size()));
  for (Biquad& s : sos) {
    s.b0 *= scale;
    s.b1 *= scale;
    s.b2 *= scale;
  }
  return sos;
}

double sos_gain(const SosFilter& sos, double freq_hz, double fs) {
  const cplx z = std::polar(1.0, 2.0 * kPi * freq_hz / fs);
  const cplx zi = 1.0 / z;
  cplx h = 1.0;
  for (const Biquad& s : sos) {
    h *= (s.b0 + s.b1 * zi + s.b2 * zi * zi) / (1.0 + s.a1 * zi + s.a2 * zi * zi);
  }
  return std::abs(h);
}

std::vector<double> sos_filter(const SosFilter& sos, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  run_cascade(sos, y, false);
  return y;
}

std::vector<double> sos_filtfilt(const SosFilter& sos, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  const std::size_t pad = std::min<std::size_t>(n - 1, 3 * (2 * sos.size() + 1));

  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  run_cascade(sos, ext, true);
  std::reverse(ext.begin(), ext.end());
  run_cascade(sos, ext, true);
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
          ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

NormalizeResult minmax_normalize(const EcgRecord& record, NormalizeScope scope) {
  record.validate();
  NormalizeResult result{record, {}};
  EcgRecord& out = result.record;

  auto map_range = [](std::span<float> values, float lo, float hi) {
    const double span = static_cast<double>(hi) - static_cast<double>(lo);
    for (float& v : values) {
      const double y = 2.0 * (static_cast<double>(v) - lo) / span - 1.0;
      v = static_cast<float>(std::clamp(y, -1.0, 1.0));
    }
  };

  if (scope == NormalizeScope::kPerRecord) {
    const auto [lo, hi] = std::minmax_element(out.data().begin(), out.data().end());
    const float mn = *lo, mx = *hi;
    if (mx > mn) {
      map_range(out.data(), mn, mx);
    } else {
      std::fill(out.data().begin(), out.data().end(), 0.0f);
      for (std::size_t l = 0; l < kNumLeads; ++l) result.degenerate_leads.push_back(l);
    }
  } else {
    for (std::size_t l = 0; l < kNumLeads; ++l) {
      auto lead = out.lead(l);
      const auto [lo, hi] = std::minmax_element(lead.begin(), lead.end());
      const float mn = *lo, mx = *hi;
      if (mx > mn) {
        map_range(lead, mn, mx);
      } else {
        std::fill(lead.begin(), lead.end(), 0.0f);
        result.degenerate_leads.push_back(l);
      }
    }
  }
  out.set_normalized(true);
  return result;
}

std::vector<float> bandpass(std::span<const float> signal, double fs,
                            const PreprocessConfig& config) {
  const SosFilter sos =
      butterworth_bandpass(config.filter_order, config.low_cut_hz, config.high_cut_hz, fs);
  const std::vector<double> x(signal.begin(), signal.end());
  const std::vector<double> y = sos_filtfilt(sos, x);
  return {y.begin(), y.end()};
}

namespace {

// Anti-aliased resampling weights: output m is sum_k taps[m][k] * x[first[m] + k].
struct ResampleKernel {
  std::vector<std::size_t> first;
  std::vector<std::vector<double>> taps;
};

ResampleKernel resample_kernel(std::size_t n_in, std::size_t target_points) {
  const double step = static_cast<double>(n_in) / static_cast<double>(target_points);
  const double fc = 0.5 / step;  // target Nyquist, cycles per input sample
  const double half_width = kSincZeroCrossings / (2.0 * fc);

  ResampleKernel kernel;
  kernel.first.resize(target_points);
  kernel.taps.resize(target_points);
  for (std::size_t m = 0; m < target_points; ++m) {
    const double t = static_cast<double>(m) * step;
    const auto lo = std::max<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(std::ceil(t - half_width)), 0);
    const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(std::floor(t + half_width)),
                                             static_cast<std::ptrdiff_t>(n_in) - 1);
    std::vector<double>& w = kernel.taps[m];
    double wsum = 0.0;
    for (std::ptrdiff_t k = lo; k <= hi; ++k) {
      const double d = static_cast<double>(k) - t;
      w.push_back(2.0 * fc * sinc(2.0 * fc * d) * blackman(d / half_width));
      wsum += w.back();
    }
    for (double& v : w) v /= wsum;
    kernel.first[m] = static_cast<std::size_t>(lo);
  }
  return kernel;
}

std::vector<float> apply_kernel(const ResampleKernel& kernel, std::span<const float> signal) {
  std::vector<float> out(kernel.first.size());
  for (std::size_t m = 0; m < out.size(); ++m) {
    const std::vector<double>& w = kernel.taps[m];
    const float* x = signal.data() + kernel.first[m];
    double acc = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) acc += w[k] * x[k];
    out[m] = static_cast<float>(acc);
  }
  return out;
}

void check_downsample(std::size_t n_in, std::size_t target_points) {
  if (target_points < 2) fail(ErrorKind::kConfig, "target_points must be at least 2");
  if (n_in < target_points) {
    fail(ErrorKind::kConfig, "downsample cannot upsample: input shorter than target");
  }
}

}  // namespace

std::vector<float> downsample(std::span<const float> signal, std::size_t target_points) {
  check_downsample(signal.size(), target_points);
  if (signal.size() == target_points) return {signal.begin(), signal.end()};
  return apply_kernel(resample_kernel(signal.size(), target_points), signal);
}

Preprocessed preprocess_record(const EcgRecord& record, const PreprocessConfig& config) {
  Preprocessed result;
  NormalizeResult norm = minmax_normalize(record, config.normalize_scope);
  if (norm.degenerate()) result.warnings.push_back("degenerate normalization scope");

  const double fs = record.sampling_rate();
  PreprocessConfig filter_cfg = config;
  if (fs <= 2.0 * config.high_cut_hz) {
    // Already-decimated input: keep the band inside the representable range.
    filter_cfg.high_cut_hz = 0.45 * fs;
    result.warnings.push_back("upper cut-off clamped to 0.45 fs");
  }

  const std::size_t n_in = record.num_samples();
  const std::size_t n_out = config.target_points;
  EcgRecord out(n_out, fs * static_cast<double>(n_out) / static_cast<double>(n_in),
                record.id());
  bool all_zero = true;
  check_downsample(n_in, n_out);
  const ResampleKernel kernel = resample_kernel(n_in, n_out);
  for (std::size_t l = 0; l < kNumLeads; ++l) {
    const auto filtered = bandpass(norm.record.lead(l), fs, filter_cfg);
    const auto resampled = n_in == n_out ? filtered : apply_kernel(kernel, filtered);
    std::copy(resampled.begin(), resampled.end(), out.lead(l).begin());
    all_zero = all_zero && std::all_of(resampled.begin(), resampled.end(),
                                       [](float v) { return v == 0.0f; });
  }
  if (all_zero) {
    out.set_normalized(true);
    result.record = std::move(out);
  } else {
    result.record = minmax_normalize(out, config.normalize_scope).record;
  }
  return result;
}

}  // namespace ecgr
