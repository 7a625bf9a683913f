#include "ecgr/ecg.hpp"

#include <algorithm>
#include <cmath>

#include "ecgr/error.hpp"

namespace ecgr {

namespace {

constexpr std::array<std::string_view, kNumLeads> kLeadNames = {
    "I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6"};

void require_finite(std::span<const float> v, const char* what) {
  for (float x : v) {
    if (!std::isfinite(x)) {
      fail(ErrorKind::kNonFinite, std::string(what) + " contains non-finite values");
    }
  }
}

}  // namespace

LeadId lead_from_ordinal(std::size_t ordinal) {
  if (ordinal >= kNumLeads) {
    fail(ErrorKind::kInvalidInput, "lead ordinal out of range: " + std::to_string(ordinal));
  }
  return static_cast<LeadId>(ordinal);
}

std::string_view lead_name(LeadId lead) { return kLeadNames[ordinal(lead)]; }

std::optional<LeadId> lead_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumLeads; ++i) {
    if (kLeadNames[i] == name) return static_cast<LeadId>(i);
  }
  return std::nullopt;
}

EcgRecord::EcgRecord(std::size_t num_samples, double sampling_rate, std::string id)
    : samples_(kNumLeads * num_samples, 0.0f),
      num_samples_(num_samples),
      sampling_rate_(sampling_rate),
      id_(std::move(id)) {}

EcgRecord::EcgRecord(std::vector<float> samples, std::size_t num_samples,
                     double sampling_rate, std::string id)
    : samples_(std::move(samples)),
      num_samples_(num_samples),
      sampling_rate_(sampling_rate),
      id_(std::move(id)) {
  if (samples_.size() != kNumLeads * num_samples_) {
    fail(ErrorKind::kShapeMismatch, "sample buffer is not 12 x N");
  }
}

bool EcgRecord::all_finite() const {
  return std::all_of(samples_.begin(), samples_.end(),
                     [](float x) { return std::isfinite(x); });
}

void EcgRecord::validate() const {
  if (num_samples_ == 0) fail(ErrorKind::kInvalidInput, "record has no samples");
  if (samples_.size() != kNumLeads * num_samples_) {
    fail(ErrorKind::kShapeMismatch, "sample buffer is not 12 x N");
  }
  if (!all_finite()) fail(ErrorKind::kNonFinite, "record contains non-finite values");
  if (normalized_) {
    for (float x : samples_) {
      if (x < -1.0f || x > 1.0f) {
        fail(ErrorKind::kInvalidInput, "normalized record has values outside [-1, 1]");
      }
    }
  }
}

AugmentedLeads derive_augmented_leads(std::span<const float> lead_i,
                                      std::span<const float> lead_ii) {
  if (lead_i.size() != lead_ii.size()) {
    fail(ErrorKind::kInvalidInput, "leads I and II differ in length");
  }
  require_finite(lead_i, "lead I");
  require_finite(lead_ii, "lead II");
  const std::size_t n = lead_i.size();
  AugmentedLeads out{std::vector<float>(n), std::vector<float>(n),
                     std::vector<float>(n), std::vector<float>(n)};
  for (std::size_t k = 0; k < n; ++k) {
    const float a = lead_i[k];
    const float b = lead_ii[k];
    out.iii[k] = b - a;
    out.avr[k] = -(a + b) * 0.5f;
    out.avl[k] = a - b * 0.5f;
    out.avf[k] = b - a * 0.5f;
  }
  return out;
}

EcgRecord assemble_record(const EightLeads& leads, double sampling_rate, std::string id) {
  const std::size_t n = leads.i.size();
  for (const auto* v : {&leads.ii, &leads.v1, &leads.v2, &leads.v3, &leads.v4,
                        &leads.v5, &leads.v6}) {
    if (v->size() != n) fail(ErrorKind::kInvalidInput, "input leads differ in length");
  }
  if (n == 0) fail(ErrorKind::kInvalidInput, "input leads are empty");
  const AugmentedLeads aug = derive_augmented_leads(leads.i, leads.ii);

  EcgRecord record(n, sampling_rate, std::move(id));
  const std::array<const std::vector<float>*, kNumLeads> rows = {
      &leads.i,  &leads.ii,  &aug.iii,   &aug.avr,  &aug.avl,  &aug.avf,
      &leads.v1, &leads.v2, &leads.v3, &leads.v4, &leads.v5, &leads.v6};
  for (std::size_t l = 0; l < kNumLeads; ++l) {
    require_finite(*rows[l], "input lead");
    std::copy(rows[l]->begin(), rows[l]->end(), record.lead(l).begin());
  }
  return record;
}

}  // namespace ecgr
