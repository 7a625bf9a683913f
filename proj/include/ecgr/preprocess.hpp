#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ecgr/ecg.hpp"

namespace ecgr {

enum class NormalizeScope { kPerRecord, kPerLead };

struct PreprocessConfig {
  double low_cut_hz = 0.05;
  double high_cut_hz = 150.0;
  std::size_t target_points = 512;
  int filter_order = 4;
  NormalizeScope normalize_scope = NormalizeScope::kPerRecord;
};

/// One biquad, a0 == 1: b0 b1 b2 a1 a2.
struct Biquad {
  double b0, b1, b2, a1, a2;
};

using SosFilter = std::vector<Biquad>;

/// Digital Butterworth bandpass (bilinear transform with prewarping). The
/// prototype has `order` poles, so the result carries `order` biquads.
SosFilter butterworth_bandpass(int order, double low_hz, double high_hz, double fs);

/// Complex frequency response magnitude of a cascade at `freq_hz`.
double sos_gain(const SosFilter& sos, double freq_hz, double fs);

/// Single forward pass with zero initial state.
std::vector<double> sos_filter(const SosFilter& sos, std::span<const double> x);

/// Forward-backward filtering with odd-extension padding and steady-state
/// initial conditions; zero phase, squared magnitude response.
std::vector<double> sos_filtfilt(const SosFilter& sos, std::span<const double> x);

struct NormalizeResult {
  EcgRecord record;
  /// Leads (or all 12 for per-record scope) whose range collapsed to a point.
  std::vector<std::size_t> degenerate_leads;
  bool degenerate() const { return !degenerate_leads.empty(); }
};

/// Affine map of each scope's [min, max] onto [-1, 1]; constant scopes map to 0.
NormalizeResult minmax_normalize(const EcgRecord& record, NormalizeScope scope);

/// Zero-phase Butterworth bandpass of one lead sampled at `fs`.
std::vector<float> bandpass(std::span<const float> signal, double fs,
                            const PreprocessConfig& config);

/// Anti-aliased windowed-sinc resampling to exactly `target_points` samples
/// covering the same duration. Only decimation is supported.
std::vector<float> downsample(std::span<const float> signal, std::size_t target_points);

struct Preprocessed {
  EcgRecord record;
  std::vector<std::string> warnings;
};

/// normalize -> bandpass (source rate) -> downsample -> renormalize.
Preprocessed preprocess_record(const EcgRecord& record, const PreprocessConfig& config);

}  // namespace ecgr
