#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace ecgr {

/// Pan-Tompkins style R-peak detector: 5-15 Hz band-pass, derivative,
/// squaring, 150 ms moving integration and an adaptive threshold with a
/// 200 ms refractory period and search-back. Returns sample indices in
/// strictly increasing order; empty for flat or shorter-than-2-s signals.
std::vector<std::size_t> detect_r_peaks(std::span<const float> lead, double fs);

/// Half-open window [start, end) around one R peak, from 0.4 s before to
/// 0.6 s after it (both bounds floored).
struct BeatWindow {
  std::size_t r = 0;
  std::size_t start = 0;
  std::size_t end = 0;
};

/// Windows that do not fit inside the signal are dropped.
std::vector<BeatWindow> segment_beats(std::size_t num_samples, std::span<const std::size_t> r_peaks,
                                      double fs);

/// Q point: the minimum in the 80 ms preceding R (first index on ties).
std::size_t detect_q(std::span<const float> lead, const BeatWindow& beat, double fs);

/// T-wave end by the tangent method: the tangent at the steepest point of the
/// descending (or, for inverted T, ascending) limb intersected with the
/// isoelectric level. nullopt when no T wave can be found.
std::optional<std::size_t> detect_t_end(std::span<const float> lead, const BeatWindow& beat,
                                        double fs);

/// S-wave offset by the same tangent construction on the limb after S.
std::optional<std::size_t> detect_s_offset(std::span<const float> lead, const BeatWindow& beat,
                                           double fs);

/// QRS duration in seconds (Q point to S offset).
std::optional<double> qrs_duration(std::span<const float> lead, const BeatWindow& beat, double fs);

/// QT interval of one beat in seconds (Q point to T end).
std::optional<double> qt_interval(std::span<const float> lead, const BeatWindow& beat, double fs);

/// Means over all beats where the measurement succeeds; nullopt when no beat
/// does (including signals with no detected beats).
std::optional<double> mean_qt(std::span<const float> lead, double fs);
std::optional<double> mean_qrs(std::span<const float> lead, double fs);

}  // namespace ecgr
