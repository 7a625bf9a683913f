#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ecgr/ecg.hpp"

namespace ecgr {

enum class MaskKind { kSegment, kLead, kRandom, kRealLife };

/// A masking scheme. Segment(k) keeps one time window per lead (C1..C5),
/// Lead(X) keeps a single full lead (C_I..C_V6), Random keeps one random
/// window per lead (C_Rdm) and RealLife is C3 with lead II complete.
struct MaskConfig {
  MaskKind kind = MaskKind::kSegment;
  int segment = 1;
  LeadId lead = LeadId::I;
  std::uint64_t seed = 0;

  static MaskConfig Segment(int k);
  static MaskConfig Lead(LeadId lead);
  static MaskConfig Random(std::uint64_t seed);
  static MaskConfig RealLife();

  /// "C1".."C5", "C_I".."C_V6", "C_Rdm", "C_real-life".
  std::string name() const;

  /// Inverse of name(); C_Rdm takes `random_seed`. Throws kInvalidInput.
  static MaskConfig parse(std::string_view name, std::uint64_t random_seed = 0);

  friend bool operator==(const MaskConfig&, const MaskConfig&) = default;
};

/// Number of time groups of Segment(k): 12, 6, 4, 3, 2 for k = 1..5.
std::size_t segment_groups(int k);

/// L x N keep matrix, true where the primer (available signal) is.
class PrimerMask {
 public:
  PrimerMask() = default;
  PrimerMask(std::size_t num_leads, std::size_t num_samples, bool value = false);

  std::size_t num_leads() const { return num_leads_; }
  std::size_t num_samples() const { return num_samples_; }

  bool keep(std::size_t l, std::size_t n) const { return keep_[l * num_samples_ + n] != 0; }
  void set(std::size_t l, std::size_t n, bool v) { keep_[l * num_samples_ + n] = v ? 1 : 0; }
  void set_range(std::size_t l, std::size_t begin, std::size_t end, bool v);

  std::size_t count_kept() const;
  std::size_t count_kept(std::size_t l) const;

  friend bool operator==(const PrimerMask&, const PrimerMask&) = default;

 private:
  std::size_t num_leads_ = 0;
  std::size_t num_samples_ = 0;
  std::vector<std::uint8_t> keep_;
};

struct MaskedEcg {
  EcgRecord samples;
  PrimerMask mask;
  std::string source_id;
};

PrimerMask primer_mask(const MaskConfig& config, std::size_t num_samples,
                       std::size_t num_leads = kNumLeads);

/// Copies primer cells and fills the rest with i.i.d. U[0, 1) noise drawn from
/// a generator seeded with `rng_seed`.
MaskedEcg apply_mask(const EcgRecord& record, const PrimerMask& mask, std::uint64_t rng_seed);

/// Masks one record of a collection. Random configs draw their window from
/// (config.seed, record_index) so every record gets its own window.
MaskedEcg mask_record(const EcgRecord& record, const MaskConfig& config, std::uint64_t noise_seed,
                      std::uint64_t record_index = 0);

/// C1..C5 followed by C_I..C_V6 in canonical lead order.
std::vector<MaskConfig> mask_catalog();

double retained_fraction(const PrimerMask& mask);

}  // namespace ecgr
