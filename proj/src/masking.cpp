#include "ecgr/masking.hpp"

#include <algorithm>
#include <numeric>

#include "ecgr/error.hpp"
#include "ecgr/rng.hpp"

namespace ecgr {

MaskConfig MaskConfig::Segment(int k) {
  if (k < 1 || k > 5) fail(ErrorKind::kInvalidInput, "segment mask index must be 1..5");
  MaskConfig c;
  c.kind = MaskKind::kSegment;
  c.segment = k;
  return c;
}

MaskConfig MaskConfig::Lead(LeadId lead) {
  MaskConfig c;
  c.kind = MaskKind::kLead;
  c.lead = lead;
  return c;
}

MaskConfig MaskConfig::Random(std::uint64_t seed) {
  MaskConfig c;
  c.kind = MaskKind::kRandom;
  c.seed = seed;
  return c;
}

MaskConfig MaskConfig::RealLife() {
  MaskConfig c;
  c.kind = MaskKind::kRealLife;
  return c;
}

std::string MaskConfig::name() const {
  switch (kind) {
    case MaskKind::kSegment: return "C" + std::to_string(segment);
    case MaskKind::kLead: return "C_" + std::string(lead_name(lead));
    case MaskKind::kRandom: return "C_Rdm";
    case MaskKind::kRealLife: return "C_real-life";
  }
  return {};
}

MaskConfig MaskConfig::parse(std::string_view name, std::uint64_t random_seed) {
  if (name == "C_Rdm") return Random(random_seed);
  if (name == "C_real-life") return RealLife();
  if (name.size() == 2 && name[0] == 'C' && name[1] >= '1' && name[1] <= '5') {
    return Segment(name[1] - '0');
  }
  if (name.starts_with("C_")) {
    if (auto lead = lead_from_name(name.substr(2))) return Lead(*lead);
  }
  fail(ErrorKind::kInvalidInput, "unknown mask configuration: " + std::string(name));
}

std::size_t segment_groups(int k) {
  static constexpr std::size_t kGroups[] = {12, 6, 4, 3, 2};
  if (k < 1 || k > 5) fail(ErrorKind::kInvalidInput, "segment mask index must be 1..5");
  return kGroups[k - 1];
}

PrimerMask::PrimerMask(std::size_t num_leads, std::size_t num_samples, bool value)
    : num_leads_(num_leads),
      num_samples_(num_samples),
      keep_(num_leads * num_samples, value ? 1 : 0) {}

void PrimerMask::set_range(std::size_t l, std::size_t begin, std::size_t end, bool v) {
  std::fill(keep_.begin() + static_cast<std::ptrdiff_t>(l * num_samples_ + begin),
            keep_.begin() + static_cast<std::ptrdiff_t>(l * num_samples_ + end), v ? 1 : 0);
}

std::size_t PrimerMask::count_kept() const {
  return static_cast<std::size_t>(std::count(keep_.begin(), keep_.end(), std::uint8_t{1}));
}

std::size_t PrimerMask::count_kept(std::size_t l) const {
  const auto first = keep_.begin() + static_cast<std::ptrdiff_t>(l * num_samples_);
  return static_cast<std::size_t>(
      std::count(first, first + static_cast<std::ptrdiff_t>(num_samples_), std::uint8_t{1}));
}

namespace {

// round(g * n / groups), ties away from zero, in exact integer arithmetic.
std::size_t group_boundary(std::size_t g, std::size_t n, std::size_t groups) {
  return (2 * g * n + groups) / (2 * groups);
}

PrimerMask segment_mask(int k, std::size_t num_leads, std::size_t n) {
  const std::size_t groups = segment_groups(k);
  if (n < groups) fail(ErrorKind::kInvalidInput, "record shorter than the mask's group count");
  PrimerMask mask(num_leads, n);
  const std::size_t leads_per_group = kNumLeads / groups;
  for (std::size_t l = 0; l < num_leads; ++l) {
    const std::size_t g = std::min(l / leads_per_group, groups - 1);
    mask.set_range(l, group_boundary(g, n, groups), group_boundary(g + 1, n, groups), true);
  }
  return mask;
}

}  // namespace

PrimerMask primer_mask(const MaskConfig& config, std::size_t num_samples,
                       std::size_t num_leads) {
  switch (config.kind) {
    case MaskKind::kSegment:
      return segment_mask(config.segment, num_leads, num_samples);
    case MaskKind::kLead: {
      PrimerMask mask(num_leads, num_samples);
      mask.set_range(ordinal(config.lead), 0, num_samples, true);
      return mask;
    }
    case MaskKind::kRealLife: {
      PrimerMask mask = segment_mask(3, num_leads, num_samples);
      mask.set_range(ordinal(LeadId::II), 0, num_samples, true);
      return mask;
    }
    case MaskKind::kRandom: {
      if (num_samples == 0) fail(ErrorKind::kInvalidInput, "empty record");
      PrimerMask mask(num_leads, num_samples);
      Rng rng(mix_seed(config.seed, 0x52646dULL));
      for (std::size_t l = 0; l < num_leads; ++l) {
        std::size_t s = 0, e = 0;
        while (e - s < 1) {
          const auto a = static_cast<std::size_t>(rng.below(num_samples + 1));
          const auto b = static_cast<std::size_t>(rng.below(num_samples + 1));
          s = std::min(a, b);
          e = std::max(a, b);
        }
        mask.set_range(l, s, e, true);
      }
      return mask;
    }
  }
  fail(ErrorKind::kInvalidInput, "unknown mask kind");
}

MaskedEcg apply_mask(const EcgRecord& record, const PrimerMask& mask, std::uint64_t rng_seed) {
  if (mask.num_leads() != record.num_leads() || mask.num_samples() != record.num_samples()) {
    fail(ErrorKind::kShapeMismatch, "mask shape does not match record");
  }
  MaskedEcg out{record, mask, record.id()};
  Rng rng(rng_seed);
  for (std::size_t l = 0; l < record.num_leads(); ++l) {
    for (std::size_t n = 0; n < record.num_samples(); ++n) {
      if (!mask.keep(l, n)) out.samples.at(l, n) = static_cast<float>(rng.uniform());
    }
  }
  return out;
}

MaskedEcg mask_record(const EcgRecord& record, const MaskConfig& config, std::uint64_t noise_seed,
                      std::uint64_t record_index) {
  MaskConfig resolved = config;
  if (config.kind == MaskKind::kRandom) resolved.seed = mix_seed(config.seed, record_index);
  const PrimerMask mask = primer_mask(resolved, record.num_samples(), record.num_leads());
  return apply_mask(record, mask, noise_seed);
}

std::vector<MaskConfig> mask_catalog() {
  std::vector<MaskConfig> out;
  out.reserve(17);
  for (int k = 1; k <= 5; ++k) out.push_back(MaskConfig::Segment(k));
  for (LeadId lead : kAllLeads) out.push_back(MaskConfig::Lead(lead));
  return out;
}

double retained_fraction(const PrimerMask& mask) {
  const std::size_t total = mask.num_leads() * mask.num_samples();
  if (total == 0) return 0.0;
  return static_cast<double>(mask.count_kept()) / static_cast<double>(total);
}

}  // namespace ecgr
