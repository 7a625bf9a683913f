#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include <nlohmann/json.hpp>

#include "ecgr/ecg.hpp"
#include "ecgr/masking.hpp"

namespace ecgr {

/// Record CSV: line 1 is "# fs=<hz>", line 2 the 12 lead names, then one
/// row per sample. Values use the shortest decimal form that reads back to
/// the same float. Columns may come in any order on input; missing,
/// duplicate or unknown leads, bad numbers and ragged rows throw kSchema.
void write_csv(std::ostream& out, const EcgRecord& record);
EcgRecord read_csv(std::istream& in, std::string id = {});

/// File variants; the record id defaults to the file stem.
void write_csv(const std::filesystem::path& path, const EcgRecord& record);
EcgRecord read_csv(const std::filesystem::path& path);

/// Mask sidecar: config name, source id, shape and per-lead primer runs as
/// half-open [begin, end) pairs.
nlohmann::json mask_to_json(const PrimerMask& mask, const std::string& config_name,
                            const std::string& source_id);
PrimerMask mask_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace ecgr
