#pragma once

#include "ecgr/ecg.hpp"
#include "ecgr/masking.hpp"

namespace ecgr {

/// CopyPaste reconstruction. Each lead's primer window is repeated cyclically
/// over the whole lead, aligned so the primer stays in place. Leads without a
/// primer receive a copy of the filled lowest-ordinal lead that has one.
EcgRecord copy_paste(const MaskedEcg& masked);

}  // namespace ecgr
