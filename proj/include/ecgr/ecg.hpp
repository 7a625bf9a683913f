#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ecgr {

inline constexpr std::size_t kNumLeads = 12;

/// Canonical 12-lead order. Every lead-indexed matrix in the library uses it.
enum class LeadId : int {
  I = 0, II, III, aVR, aVL, aVF, V1, V2, V3, V4, V5, V6
};

inline constexpr std::array<LeadId, kNumLeads> kAllLeads = {
    LeadId::I,   LeadId::II,  LeadId::III, LeadId::aVR,
    LeadId::aVL, LeadId::aVF, LeadId::V1,  LeadId::V2,
    LeadId::V3,  LeadId::V4,  LeadId::V5,  LeadId::V6};

constexpr std::size_t ordinal(LeadId lead) {
  return static_cast<std::size_t>(lead);
}

LeadId lead_from_ordinal(std::size_t ordinal);
std::string_view lead_name(LeadId lead);
std::optional<LeadId> lead_from_name(std::string_view name);

/// 12 x N lead voltages stored row-major (one contiguous row per lead).
class EcgRecord {
 public:
  EcgRecord() = default;
  EcgRecord(std::size_t num_samples, double sampling_rate, std::string id = {});
  EcgRecord(std::vector<float> samples, std::size_t num_samples,
            double sampling_rate, std::string id = {});

  std::size_t num_leads() const { return kNumLeads; }
  std::size_t num_samples() const { return num_samples_; }
  double sampling_rate() const { return sampling_rate_; }
  void set_sampling_rate(double fs) { sampling_rate_ = fs; }

  const std::string& id() const { return id_; }
  void set_id(std::string id) { id_ = std::move(id); }

  bool normalized() const { return normalized_; }
  void set_normalized(bool v) { normalized_ = v; }

  std::span<float> lead(std::size_t l) {
    return {samples_.data() + l * num_samples_, num_samples_};
  }
  std::span<const float> lead(std::size_t l) const {
    return {samples_.data() + l * num_samples_, num_samples_};
  }
  std::span<float> lead(LeadId l) { return lead(ordinal(l)); }
  std::span<const float> lead(LeadId l) const { return lead(ordinal(l)); }

  float& at(std::size_t l, std::size_t n) { return samples_[l * num_samples_ + n]; }
  float at(std::size_t l, std::size_t n) const {
    return samples_[l * num_samples_ + n];
  }

  std::span<float> data() { return samples_; }
  std::span<const float> data() const { return samples_; }

  bool all_finite() const;

  /// Throws unless the record satisfies its invariants (finite, N > 0, and
  /// inside [-1, 1] when flagged normalized).
  void validate() const;

  friend bool operator==(const EcgRecord&, const EcgRecord&) = default;

 private:
  std::vector<float> samples_;
  std::size_t num_samples_ = 0;
  double sampling_rate_ = 0.0;
  std::string id_;
  bool normalized_ = false;
};

struct AugmentedLeads {
  std::vector<float> iii, avr, avl, avf;
};

/// Einthoven/Goldberger relations from leads I and II.
AugmentedLeads derive_augmented_leads(std::span<const float> lead_i,
                                      std::span<const float> lead_ii);

/// Leads recorded by 8-lead machines: I, II, V1..V6.
struct EightLeads {
  std::vector<float> i, ii, v1, v2, v3, v4, v5, v6;
};

EcgRecord assemble_record(const EightLeads& leads, double sampling_rate,
                          std::string id = {});

}  // namespace ecgr
