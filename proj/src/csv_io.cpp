#include "ecgr/csv_io.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "ecgr/error.hpp"

namespace ecgr {

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = line.find(',', pos);
    out.push_back(line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

std::string format_fs(double fs) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, fs);
  return std::string(buf, res.ptr);
}

[[noreturn]] void schema_error(std::size_t line, const std::string& what) {
  fail(ErrorKind::kSchema, "CSV line " + std::to_string(line) + ": " + what);
}

}  // namespace

void write_csv(std::ostream& out, const EcgRecord& record) {
  out << "# fs=" << format_fs(record.sampling_rate()) << '\n';
  for (std::size_t l = 0; l < kNumLeads; ++l) {
    if (l > 0) out << ',';
    out << lead_name(lead_from_ordinal(l));
  }
  out << '\n';
  char buf[32];
  for (std::size_t n = 0; n < record.num_samples(); ++n) {
    for (std::size_t l = 0; l < kNumLeads; ++l) {
      if (l > 0) out << ',';
      const auto res = std::to_chars(buf, buf + sizeof buf, record.at(l, n));
      out.write(buf, res.ptr - buf);
    }
    out << '\n';
  }
}

EcgRecord read_csv(std::istream& in, std::string id) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::kSchema, "CSV is empty");
  std::string_view first = trim_cr(line);
  constexpr std::string_view kPrefix = "# fs=";
  if (first.substr(0, kPrefix.size()) != kPrefix) schema_error(1, "expected '# fs=<hz>'");
  double fs = 0.0;
  {
    const std::string_view v = first.substr(kPrefix.size());
    const auto res = std::from_chars(v.data(), v.data() + v.size(), fs);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size() || !(fs > 0.0)) {
      schema_error(1, "bad sampling rate");
    }
  }

  if (!std::getline(in, line)) schema_error(2, "missing header row");
  const auto header = split_commas(trim_cr(line));
  if (header.size() != kNumLeads) {
    schema_error(2, "expected 12 lead columns, found " + std::to_string(header.size()));
  }
  std::array<std::size_t, kNumLeads> column_lead{};
  std::array<bool, kNumLeads> seen{};
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto lead = lead_from_name(header[c]);
    if (!lead) schema_error(2, "unknown lead '" + std::string(header[c]) + "'");
    if (seen[ordinal(*lead)]) schema_error(2, "duplicate lead '" + std::string(header[c]) + "'");
    seen[ordinal(*lead)] = true;
    column_lead[c] = ordinal(*lead);
  }

  std::vector<std::array<float, kNumLeads>> rows;
  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row_text = trim_cr(line);
    if (row_text.empty()) continue;
    const auto cells = split_commas(row_text);
    if (cells.size() != kNumLeads) {
      schema_error(line_no, "expected 12 values, found " + std::to_string(cells.size()));
    }
    std::array<float, kNumLeads> row{};
    for (std::size_t c = 0; c < cells.size(); ++c) {
      float v = 0.0f;
      const auto res = std::from_chars(cells[c].data(), cells[c].data() + cells[c].size(), v);
      if (res.ec != std::errc{} || res.ptr != cells[c].data() + cells[c].size() || !std::isfinite(v)) {
        schema_error(line_no, "non-numeric value '" + std::string(cells[c]) + "'");
      }
      row[column_lead[c]] = v;
    }
    rows.push_back(row);
  }
  if (rows.empty()) fail(ErrorKind::kSchema, "CSV has no samples");

  EcgRecord record(rows.size(), fs, std::move(id));
  for (std::size_t n = 0; n < rows.size(); ++n) {
    for (std::size_t l = 0; l < kNumLeads; ++l) record.at(l, n) = rows[n][l];
  }
  return record;
}

void write_csv(const std::filesystem::path& path, const EcgRecord& record) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  write_csv(out, record);
  if (!out) fail(ErrorKind::kIo, "write failed: " + path.string());
}

EcgRecord read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot read " + path.string());
  return read_csv(in, path.stem().string());
}

nlohmann::json mask_to_json(const PrimerMask& mask, const std::string& config_name,
                            const std::string& source_id) {
  nlohmann::json j;
  j["config"] = config_name;
  j["source_id"] = source_id;
  j["num_leads"] = mask.num_leads();
  j["num_samples"] = mask.num_samples();
  nlohmann::json primer = nlohmann::json::object();
  for (std::size_t l = 0; l < mask.num_leads(); ++l) {
    nlohmann::json runs = nlohmann::json::array();
    std::size_t n = 0;
    while (n < mask.num_samples()) {
      if (!mask.keep(l, n)) {
        ++n;
        continue;
      }
      const std::size_t begin = n;
      while (n < mask.num_samples() && mask.keep(l, n)) ++n;
      runs.push_back({begin, n});
    }
    primer[std::string(lead_name(lead_from_ordinal(l)))] = std::move(runs);
  }
  j["primer"] = std::move(primer);
  return j;
}

PrimerMask mask_from_json(const nlohmann::json& j) {
  try {
    const auto leads = j.at("num_leads").get<std::size_t>();
    const auto samples = j.at("num_samples").get<std::size_t>();
    if (leads != kNumLeads) fail(ErrorKind::kSchema, "mask must have 12 leads");
    PrimerMask mask(leads, samples, false);
    for (const auto& [name, runs] : j.at("primer").items()) {
      const auto lead = lead_from_name(name);
      if (!lead) fail(ErrorKind::kSchema, "mask names unknown lead '" + name + "'");
      for (const auto& run : runs) {
        const auto begin = run.at(0).get<std::size_t>();
        const auto end = run.at(1).get<std::size_t>();
        if (begin > end || end > samples) fail(ErrorKind::kSchema, "mask run out of range");
        mask.set_range(ordinal(*lead), begin, end, true);
      }
    }
    return mask;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kSchema, std::string("malformed mask JSON: ") + e.what());
  }
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kSchema, path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorKind::kIo, "write failed: " + path.string());
}

}  // namespace ecgr
