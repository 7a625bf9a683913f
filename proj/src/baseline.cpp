#include "ecgr/baseline.hpp"

#include <algorithm>
#include <optional>

#include "ecgr/error.hpp"

namespace ecgr {

EcgRecord copy_paste(const MaskedEcg& masked) {
  const EcgRecord& in = masked.samples;
  const PrimerMask& mask = masked.mask;
  const std::size_t n = in.num_samples();
  if (mask.num_leads() != in.num_leads() || mask.num_samples() != n) {
    fail(ErrorKind::kShapeMismatch, "mask shape does not match masked record");
  }
  EcgRecord out = in;
  out.set_id(masked.source_id);

  std::optional<std::size_t> reference;
  for (std::size_t l = 0; l < in.num_leads(); ++l) {
    // First contiguous primer run of this lead.
    std::size_t start = 0;
    while (start < n && !mask.keep(l, start)) ++start;
    if (start == n) continue;
    std::size_t end = start;
    while (end < n && mask.keep(l, end)) ++end;
    if (!reference) reference = l;

    const auto period = static_cast<std::ptrdiff_t>(end - start);
    const auto src = in.lead(l);
    auto dst = out.lead(l);
    for (std::size_t k = 0; k < n; ++k) {
      if (mask.keep(l, k)) continue;
      std::ptrdiff_t offset = (static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(start)) % period;
      if (offset < 0) offset += period;
      dst[k] = src[start + static_cast<std::size_t>(offset)];
    }
  }
  if (!reference) fail(ErrorKind::kInvalidInput, "masked record has no primer cells");

  for (std::size_t l = 0; l < in.num_leads(); ++l) {
    if (mask.count_kept(l) > 0) continue;
    const auto ref = out.lead(*reference);
    std::copy(ref.begin(), ref.end(), out.lead(l).begin());
  }
  return out;
}

}  // namespace ecgr
