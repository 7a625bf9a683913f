#include "ecgr/fiducials.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "ecgr/preprocess.hpp"

namespace ecgr {

namespace {

std::size_t seconds_to_samples(double s, double fs) {
  return static_cast<std::size_t>(std::floor(s * fs));
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return m;
}

// Isoelectric level of a beat: mean of the flattest short stretch between the
// window start and the Q point.
std::optional<double> isoelectric_level(std::span<const float> x, const BeatWindow& beat,
                                        std::size_t q, double fs) {
  (void)fs;
  if (q < beat.start + 3) return std::nullopt;
  return median(std::vector<double>(x.begin() + beat.start, x.begin() + q));
}

// Peak-to-peak amplitude of the beat; flat beats carry no fiducials.
bool is_flat(std::span<const float> x, const BeatWindow& beat) {
  const auto [lo, hi] = std::minmax_element(x.begin() + beat.start, x.begin() + beat.end);
  return !(static_cast<double>(*hi) - *lo > 1e-6);
}

// Band-limited (Blackman-windowed sinc) interpolation at fractional index t.
double interpolate(std::span<const float> x, double t) {
  constexpr int kHalf = 8;
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  const auto base = static_cast<std::ptrdiff_t>(std::floor(t));
  double acc = 0.0, wsum = 0.0;
  for (std::ptrdiff_t k = base - kHalf + 1; k <= base + kHalf; ++k) {
    const double d = t - static_cast<double>(k);
    const double u = d / kHalf;
    if (std::abs(u) >= 1.0) continue;
    const double win = 0.42 + 0.5 * std::cos(std::numbers::pi * u) + 0.08 * std::cos(2.0 * std::numbers::pi * u);
    const double sinc = d == 0.0 ? 1.0 : std::sin(std::numbers::pi * d) / (std::numbers::pi * d);
    const double w = win * sinc;
    acc += w * x[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(k, 0, n - 1))];
    wsum += w;
  }
  return acc / wsum;
}

// Tangent construction on the limb [from, to): find the steepest point with
// the given sign of slope and intersect its tangent with the level. At low
// sampling rates the limb is spanned by only a few samples, so the search runs
// on an interpolated grid and only the final crossing is rounded to a sample.
std::optional<std::size_t> tangent_crossing(std::span<const float> x, const BeatWindow& beat,
                                            std::size_t from, std::size_t to, double sign,
                                            double level, double fs) {
  to = std::min(to, beat.end);
  if (from + 1 >= to) return std::nullopt;
  const int up = std::max(1, static_cast<int>(std::ceil(400.0 / fs)));
  const double step = 1.0 / up;
  const std::size_t count = (to - from - 1) * static_cast<std::size_t>(up) + 1;
  std::vector<double> y(count + 2);
  for (std::size_t j = 0; j < y.size(); ++j) {
    y[j] = interpolate(x, static_cast<double>(from) + (static_cast<double>(j) - 1.0) * step);
  }
  std::size_t best = 0;
  double best_slope = 0.0;
  for (std::size_t j = 1; j <= count; ++j) {
    const double s = sign * (y[j + 1] - y[j - 1]) / (2.0 * step);
    if (s > best_slope) {
      best_slope = s;
      best = j;
    }
  }
  if (!(best_slope > 0.0)) return std::nullopt;
  const double pos = static_cast<double>(from) + (static_cast<double>(best) - 1.0) * step;
  const double t = pos + (level - y[best]) / (sign * best_slope);
  if (!std::isfinite(t)) return std::nullopt;
  const double idx = std::round(t);
  if (idx < std::floor(pos) || idx >= static_cast<double>(beat.end)) return std::nullopt;
  return static_cast<std::size_t>(idx);
}

}  // namespace

std::vector<std::size_t> detect_r_peaks(std::span<const float> lead, double fs) {
  const std::size_t n = lead.size();
  if (!(fs > 0.0) || static_cast<double>(n) < 2.0 * fs) return {};
  const auto [lo_it, hi_it] = std::minmax_element(lead.begin(), lead.end());
  if (!(static_cast<double>(*hi_it) - *lo_it > 1e-9)) return {};

  std::vector<double> x(lead.begin(), lead.end());
  const double high = std::min(15.0, 0.45 * fs);
  const std::vector<double> bp = sos_filtfilt(butterworth_bandpass(2, 5.0, high, fs), x);

  // Five-point centered derivative, squared.
  std::vector<double> sq(n, 0.0);
  for (std::size_t i = 2; i + 2 < n; ++i) {
    const double d = (2.0 * bp[i + 1] + bp[i + 2] - bp[i - 2] - 2.0 * bp[i - 1]) / 8.0;
    sq[i] = d * d;
  }

  // Centered moving integration over 150 ms.
  const std::size_t w = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.15 * fs)));
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + sq[i];
  std::vector<double> integ(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = i >= w / 2 ? i - w / 2 : 0;
    const std::size_t b = std::min(n, a + w);
    integ[i] = (prefix[b] - prefix[a]) / static_cast<double>(w);
  }

  std::vector<std::size_t> candidates;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (integ[i] > integ[i - 1] && integ[i] >= integ[i + 1]) candidates.push_back(i);
  }

  const std::size_t learn = std::min(n, static_cast<std::size_t>(2.0 * fs));
  // The signal peak estimate starts from the whole-record maximum so that a
  // quiet opening segment cannot set a near-zero threshold.
  double spki = 0.25 * std::max(*std::max_element(integ.begin(), integ.begin() + learn),
                                0.5 * *std::max_element(integ.begin(), integ.end()));
  double npki = 0.5 * std::accumulate(integ.begin(), integ.begin() + learn, 0.0) /
                static_cast<double>(learn);
  if (!(spki > 0.0)) return {};
  auto threshold = [&] { return npki + 0.25 * (spki - npki); };

  const double refractory = 0.2 * fs;
  std::vector<std::size_t> qrs;
  std::vector<std::size_t> rejected;
  std::vector<double> rr;
  auto rr_mean = [&] {
    const std::size_t k = std::min<std::size_t>(rr.size(), 8);
    return std::accumulate(rr.end() - static_cast<std::ptrdiff_t>(k), rr.end(), 0.0) /
           static_cast<double>(k);
  };
  auto accept = [&](std::size_t p) {
    if (!qrs.empty()) rr.push_back(static_cast<double>(p - qrs.back()));
    qrs.push_back(p);
    rejected.clear();
  };

  for (std::size_t p : candidates) {
    if (!qrs.empty() && !rr.empty() &&
        static_cast<double>(p - qrs.back()) > 1.66 * rr_mean()) {
      // Search back for the strongest rejected peak in the gap.
      std::size_t best = 0;
      double best_v = 0.5 * threshold();
      for (std::size_t c : rejected) {
        if (static_cast<double>(c - qrs.back()) >= refractory &&
            static_cast<double>(p - c) >= refractory && integ[c] > best_v) {
          best_v = integ[c];
          best = c;
        }
      }
      if (best != 0) {
        spki = 0.25 * integ[best] + 0.75 * spki;
        accept(best);
      }
    }
    const bool in_refractory = !qrs.empty() && static_cast<double>(p - qrs.back()) < refractory;
    if (!in_refractory && integ[p] > threshold()) {
      spki = 0.125 * integ[p] + 0.875 * spki;
      accept(p);
    } else {
      npki = 0.125 * integ[p] + 0.875 * npki;
      if (!in_refractory) rejected.push_back(p);
    }
  }

  // Move each detection to the largest deflection from the local level.
  const std::size_t half = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(0.1 * fs)));
  const std::size_t ctx = static_cast<std::size_t>(std::lround(0.3 * fs));
  std::vector<std::size_t> peaks;
  std::vector<double> heights;
  for (std::size_t p : qrs) {
    const std::size_t c0 = p >= ctx ? p - ctx : 0;
    const std::size_t c1 = std::min(n, p + ctx + 1);
    const double level = median(std::vector<double>(x.begin() + c0, x.begin() + c1));
    const std::size_t a = p >= half ? p - half : 0;
    const std::size_t b = std::min(n, p + half + 1);
    std::size_t best = a;
    double best_h = -1.0;
    for (std::size_t i = a; i < b; ++i) {
      const double h = std::abs(x[i] - level);
      if (h > best_h) {
        best_h = h;
        best = i;
      }
    }
    if (!peaks.empty() && static_cast<double>(best - peaks.back()) < refractory) {
      if (best <= peaks.back() || best_h <= heights.back()) continue;
      peaks.back() = best;
      heights.back() = best_h;
      continue;
    }
    peaks.push_back(best);
    heights.push_back(best_h);
  }
  return peaks;
}

std::vector<BeatWindow> segment_beats(std::size_t num_samples, std::span<const std::size_t> r_peaks,
                                      double fs) {
  std::vector<BeatWindow> out;
  for (std::size_t r : r_peaks) {
    const double start = std::floor(static_cast<double>(r) - 0.4 * fs);
    const double end = std::floor(static_cast<double>(r) + 0.6 * fs);
    if (start < 0.0 || end > static_cast<double>(num_samples)) continue;
    out.push_back({r, static_cast<std::size_t>(start), static_cast<std::size_t>(end)});
  }
  return out;
}

std::size_t detect_q(std::span<const float> lead, const BeatWindow& beat, double fs) {
  const std::size_t span = seconds_to_samples(0.08, fs);
  const std::size_t lo = std::max(beat.start, beat.r >= span ? beat.r - span : 0);
  if (lo >= beat.r) return beat.r;
  std::size_t best = lo;
  for (std::size_t i = lo + 1; i < beat.r; ++i) {
    if (lead[i] < lead[best]) best = i;
  }
  return best;
}

namespace {

std::vector<double> running_median(std::span<const double> x, std::size_t len) {
  const std::size_t half = len / 2;
  std::vector<double> out(x.size());
  std::vector<double> buf;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t a = i >= half ? i - half : 0;
    const std::size_t b = std::min(x.size(), i + half + 1);
    buf.assign(x.begin() + static_cast<std::ptrdiff_t>(a), x.begin() + static_cast<std::ptrdiff_t>(b));
    out[i] = median(buf);
  }
  return out;
}

// Subtracts a baseline estimated by cascaded 200 ms and 600 ms median filters,
// which follow wander and filter drift but not the P, QRS or T waves.
std::vector<float> remove_baseline(std::span<const float> lead, double fs) {
  auto odd = [&](double s) {
    return std::max<std::size_t>(3, static_cast<std::size_t>(std::lround(s * fs)) | 1U);
  };
  const std::vector<double> x(lead.begin(), lead.end());
  const std::vector<double> base = running_median(running_median(x, odd(0.2)), odd(0.6));
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<float>(x[i] - base[i]);
  return out;
}

std::optional<std::size_t> t_end_on(std::span<const float> lead, const BeatWindow& beat,
                                    double fs) {
  if (is_flat(lead, beat)) return std::nullopt;
  const std::size_t q = detect_q(lead, beat, fs);
  const auto level = isoelectric_level(lead, beat, q, fs);
  if (!level) return std::nullopt;
  const std::size_t from = beat.r + seconds_to_samples(0.15, fs);
  const std::size_t to = std::min(beat.end, beat.r + seconds_to_samples(0.45, fs) + 1);
  if (from >= to) return std::nullopt;

  std::size_t peak = from;
  double dev = 0.0;
  for (std::size_t i = from; i < to; ++i) {
    const double d = lead[i] - *level;
    if (std::abs(d) > std::abs(dev)) {
      dev = d;
      peak = i;
    }
  }
  // A T wave must stand out from the beat's noise floor.
  const auto [lo, hi] = std::minmax_element(lead.begin() + beat.start, lead.begin() + beat.end);
  if (std::abs(dev) < 0.02 * (static_cast<double>(*hi) - *lo)) return std::nullopt;
  // The descending limb ends where the wave is back near the baseline; going
  // further would pick up the next beat's P or Q wave.
  std::size_t limb_end = peak + 1;
  while (limb_end < beat.end && (lead[limb_end] - *level) * dev > 0.05 * dev * dev) ++limb_end;
  const double sign = dev > 0.0 ? -1.0 : 1.0;
  return tangent_crossing(lead, beat, peak, std::min(beat.end, limb_end + 2), sign, *level, fs);
}

std::optional<std::size_t> s_offset_on(std::span<const float> lead, const BeatWindow& beat,
                                       double fs) {
  if (is_flat(lead, beat)) return std::nullopt;
  const std::size_t q = detect_q(lead, beat, fs);
  const auto level = isoelectric_level(lead, beat, q, fs);
  if (!level) return std::nullopt;
  const std::size_t stop = std::min(beat.end, beat.r + seconds_to_samples(0.12, fs) + 1);
  if (beat.r + 1 >= stop) return std::nullopt;
  std::size_t s = beat.r + 1;
  for (std::size_t i = s + 1; i < stop; ++i) {
    if (lead[i] < lead[s]) s = i;
  }
  const std::size_t limb_end = std::min(beat.end, s + seconds_to_samples(0.1, fs) + 1);
  return tangent_crossing(lead, beat, s, limb_end, 1.0, *level, fs);
}

}  // namespace

std::optional<std::size_t> detect_t_end(std::span<const float> lead, const BeatWindow& beat,
                                        double fs) {
  const std::vector<float> x = remove_baseline(lead, fs);
  return t_end_on(x, beat, fs);
}

std::optional<std::size_t> detect_s_offset(std::span<const float> lead, const BeatWindow& beat,
                                           double fs) {
  const std::vector<float> x = remove_baseline(lead, fs);
  return s_offset_on(x, beat, fs);
}

std::optional<double> qrs_duration(std::span<const float> lead, const BeatWindow& beat, double fs) {
  const auto s_off = detect_s_offset(lead, beat, fs);
  if (!s_off) return std::nullopt;
  const std::size_t q = detect_q(lead, beat, fs);
  return (static_cast<double>(*s_off) - static_cast<double>(q)) / fs;
}

std::optional<double> qt_interval(std::span<const float> lead, const BeatWindow& beat, double fs) {
  const auto t_end = detect_t_end(lead, beat, fs);
  if (!t_end) return std::nullopt;
  const std::size_t q = detect_q(lead, beat, fs);
  return (static_cast<double>(*t_end) - static_cast<double>(q)) / fs;
}

namespace {

template <typename F>
std::optional<double> mean_over_beats(std::span<const float> lead, double fs, F measure) {
  const auto peaks = detect_r_peaks(lead, fs);
  double sum = 0.0;
  std::size_t count = 0;
  for (const BeatWindow& beat : segment_beats(lead.size(), peaks, fs)) {
    if (const auto v = measure(lead, beat, fs)) {
      sum += *v;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

}  // namespace

std::optional<double> mean_qt(std::span<const float> lead, double fs) {
  return mean_over_beats(lead, fs, qt_interval);
}

std::optional<double> mean_qrs(std::span<const float> lead, double fs) {
  return mean_over_beats(lead, fs, qrs_duration);
}

}  // namespace ecgr
