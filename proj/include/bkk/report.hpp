#ifndef BKK_REPORT_HPP
#define BKK_REPORT_HPP

// JSON and CSV documents for check results and envelope reports, and the
// parsers that read them back. Field order is fixed. JSON numbers use the
// shortest representation that reads back to the same double; CSV numbers
// are written with 17 significant digits. Summary fields are recomputed from
// the cells on parse, so a round trip reproduces the in-memory value.
//
// Schema (version kReportSchema), JSON:
//   { schema_version, manifest, checks: [CheckResult...] }      checks document
//   { schema_version, manifest, envelope: [EnvelopeSummary...] } envelope document
// CSV: optional leading "# manifest <json>" line, then a header row. Check
// documents have one "check" row per check followed by its "cell" rows;
// envelope documents one "mu" row per index followed by its "cell" rows.

#include <bkk/certify.hpp>

#include <json.hpp>

#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bkk {

inline constexpr const char* kReportSchema = "bkk.report/1";

enum class ReportFormat { json, csv };

inline ReportFormat report_format_from_string(const std::string& s) {
  if (s == "json") return ReportFormat::json;
  if (s == "csv") return ReportFormat::csv;
  detail::domain_fail("format must be json or csv");
}

using Json = nlohmann::ordered_json;

namespace detail {

inline Json cell_json(const CellRecord& c) {
  return Json{{"mu", c.mu},         {"nu", c.nu},       {"t", c.t},
              {"x", c.x},           {"y", c.y},         {"a", c.a},
              {"margin", c.margin}, {"slack", c.slack}, {"method", to_string(c.method)},
              {"skipped", c.skipped}, {"reason", c.reason}};
}

inline CellRecord cell_from_json(const Json& j) {
  CellRecord c;
  c.mu = j.at("mu").get<double>();
  c.nu = j.at("nu").get<double>();
  c.t = j.at("t").get<double>();
  c.x = j.at("x").get<double>();
  c.y = j.at("y").get<double>();
  c.a = j.at("a").get<double>();
  c.margin = j.at("margin").get<double>();
  c.slack = j.at("slack").get<double>();
  c.method = method_from_string(j.at("method").get<std::string>());
  c.skipped = j.at("skipped").get<bool>();
  c.reason = j.at("reason").get<std::string>();
  return c;
}

inline Json env_cell_json(const EnvelopeCell& c) {
  return Json{{"t", c.t},
              {"x", c.x},
              {"y", c.y},
              {"log_ratio", c.log_ratio},
              {"log_rewrite_ratio", c.log_rewrite_ratio},
              {"regime", c.regime},
              {"identity_residual", c.identity_residual},
              {"above_free", c.above_free},
              {"method", to_string(c.method)},
              {"skipped", c.skipped},
              {"reason", c.reason}};
}

inline EnvelopeCell env_cell_from_json(const Json& j) {
  EnvelopeCell c;
  c.t = j.at("t").get<double>();
  c.x = j.at("x").get<double>();
  c.y = j.at("y").get<double>();
  c.log_ratio = j.at("log_ratio").get<double>();
  c.log_rewrite_ratio = j.at("log_rewrite_ratio").get<double>();
  c.regime = j.at("regime").get<int>();
  c.identity_residual = j.at("identity_residual").get<double>();
  c.above_free = j.at("above_free").get<bool>();
  c.method = method_from_string(j.at("method").get<std::string>());
  c.skipped = j.at("skipped").get<bool>();
  c.reason = j.at("reason").get<std::string>();
  return c;
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

// Splits CSV text into rows of fields; quoted fields may hold commas, quotes and newlines.
inline std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        field += ch;
      }
      continue;
    }
    if (ch == '"') {
      quoted = true;
      any = true;
    } else if (ch == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (ch == '\n' || ch == '\r') {
      if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field += ch;
      any = true;
    }
  }
  require(!quoted, "csv: unterminated quoted field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline double parse_num(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    domain_fail("csv: bad number '" + s + "'");
  }
  require(used == s.size(), "csv: trailing characters after a number");
  return v;
}

inline bool parse_bool(const std::string& s) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  domain_fail("csv: bad boolean '" + s + "'");
}

inline std::string manifest_line(const Json& manifest) {
  return manifest.is_null() ? std::string() : "# manifest " + manifest.dump() + "\n";
}

// Drops comment lines ("# ...") at the start of a CSV document.
inline std::string strip_comments(const std::string& doc) {
  std::size_t pos = 0;
  while (pos < doc.size() && doc[pos] == '#') {
    const auto nl = doc.find('\n', pos);
    pos = nl == std::string::npos ? doc.size() : nl + 1;
  }
  return doc.substr(pos);
}

inline const char* kCheckCsvHeader =
    "record,check_id,hard,description,mu,nu,t,x,y,a,margin,slack,method,skipped,reason";
inline const char* kEnvelopeCsvHeader =
    "record,mu,a,t,x,y,log_ratio,log_rewrite_ratio,regime,identity_residual,above_free,method,skipped,reason";

}  // namespace detail

inline Json check_to_json(const CheckResult& r) {
  Json j;
  j["check_id"] = r.check_id;
  j["description"] = r.description;
  j["hard"] = r.hard;
  j["passed"] = r.passed();
  j["cells_total"] = r.cells_total;
  j["cells_failed"] = r.cells_failed;
  j["cells_skipped"] = r.cells_skipped;
  j["worst_margin"] = r.worst_margin;
  j["worst_cell"] = detail::cell_json(r.worst_cell);
  j["method_counts"] = Json(r.method_counts);
  j["skip_reasons"] = Json(r.skip_reasons);
  Json cells = Json::array();
  for (const auto& c : r.cells) cells.push_back(detail::cell_json(c));
  j["cells"] = std::move(cells);
  return j;
}

inline CheckResult check_from_json(const Json& j) {
  CheckResult r;
  r.check_id = j.at("check_id").get<std::string>();
  r.description = j.at("description").get<std::string>();
  r.hard = j.at("hard").get<bool>();
  for (const auto& c : j.at("cells")) r.cells.push_back(detail::cell_from_json(c));
  tally(r);
  return r;
}

inline Json envelope_to_json(const EnvelopeSummary& s) {
  Json j;
  j["mu"] = s.mu;
  j["a"] = s.a;
  j["cells"] = s.cells;
  j["skipped"] = s.skipped;
  j["min_log_ratio"] = s.min_log_ratio;
  j["max_log_ratio"] = s.max_log_ratio;
  j["spread"] = s.spread;
  j["argmin"] = detail::env_cell_json(s.argmin);
  j["argmax"] = detail::env_cell_json(s.argmax);
  j["min_log_rewrite"] = s.min_log_rewrite;
  j["max_log_rewrite"] = s.max_log_rewrite;
  j["rewrite_spread"] = s.rewrite_spread;
  j["max_identity_residual"] = s.max_identity_residual;
  j["above_free"] = s.above_free;
  j["negative"] = s.negative;
  Json regimes = Json::array();
  for (std::size_t k = 0; k < s.regimes.size(); ++k)
    regimes.push_back(Json{{"xy_over_t_ge_1", (k & 1) != 0},
                           {"boundary_over_t_ge_1", (k & 2) != 0},
                           {"cells", s.regimes[k].cells},
                           {"min_log_ratio", s.regimes[k].min_log_ratio},
                           {"max_log_ratio", s.regimes[k].max_log_ratio}});
  j["regimes"] = std::move(regimes);
  Json cells = Json::array();
  for (const auto& c : s.cell_values) cells.push_back(detail::env_cell_json(c));
  j["cell_values"] = std::move(cells);
  return j;
}

inline EnvelopeSummary envelope_from_json(const Json& j) {
  EnvelopeSummary s;
  s.mu = j.at("mu").get<double>();
  s.a = j.at("a").get<double>();
  for (const auto& c : j.at("cell_values")) s.cell_values.push_back(detail::env_cell_from_json(c));
  summarize(s);
  return s;
}

/// Checks document; manifest may be null.
inline std::string emit_report(const std::vector<CheckResult>& results, ReportFormat fmt, const Json& manifest = {}) {
  if (fmt == ReportFormat::json) {
    Json doc;
    doc["schema_version"] = kReportSchema;
    doc["manifest"] = manifest;
    doc["checks"] = Json::array();
    for (const auto& r : results) doc["checks"].push_back(check_to_json(r));
    return doc.dump(1) + "\n";
  }
  using detail::csv_field;
  using detail::num;
  std::ostringstream out;
  out << detail::manifest_line(manifest) << detail::kCheckCsvHeader << "\n";
  for (const auto& r : results) {
    out << "check," << csv_field(r.check_id) << ',' << (r.hard ? 1 : 0) << ',' << csv_field(r.description)
        << ",,,,,,,,,,,\n";
    for (const auto& c : r.cells)
      out << "cell," << csv_field(r.check_id) << ",,," << num(c.mu) << ',' << num(c.nu) << ',' << num(c.t) << ','
          << num(c.x) << ',' << num(c.y) << ',' << num(c.a) << ',' << num(c.margin) << ',' << num(c.slack) << ','
          << to_string(c.method) << ',' << (c.skipped ? 1 : 0) << ',' << csv_field(c.reason) << "\n";
  }
  return out.str();
}

inline std::string emit_report(const EnvelopeReport& rep, ReportFormat fmt, const Json& manifest = {}) {
  if (fmt == ReportFormat::json) {
    Json doc;
    doc["schema_version"] = kReportSchema;
    doc["manifest"] = manifest;
    doc["envelope"] = Json::array();
    for (const auto& s : rep.per_mu) doc["envelope"].push_back(envelope_to_json(s));
    return doc.dump(1) + "\n";
  }
  using detail::csv_field;
  using detail::num;
  std::ostringstream out;
  out << detail::manifest_line(manifest) << detail::kEnvelopeCsvHeader << "\n";
  for (const auto& s : rep.per_mu) {
    out << "mu," << num(s.mu) << ',' << num(s.a) << ",,,,,,,,,,,\n";
    for (const auto& c : s.cell_values)
      out << "cell," << num(s.mu) << ',' << num(s.a) << ',' << num(c.t) << ',' << num(c.x) << ',' << num(c.y) << ','
          << num(c.log_ratio) << ',' << num(c.log_rewrite_ratio) << ',' << c.regime << ',' << num(c.identity_residual)
          << ',' << (c.above_free ? 1 : 0) << ',' << to_string(c.method) << ',' << (c.skipped ? 1 : 0) << ','
          << csv_field(c.reason) << "\n";
  }
  return out.str();
}

namespace detail {

inline std::vector<std::vector<std::string>> csv_body(const std::string& doc, const char* header, std::size_t width) {
  auto rows = csv_rows(strip_comments(doc));
  if (rows.empty()) return rows;
  std::string got;
  for (std::size_t i = 0; i < rows.front().size(); ++i) got += (i ? "," : "") + rows.front()[i];
  require(got == header, "csv: unexpected header");
  rows.erase(rows.begin());
  for (const auto& r : rows) require(r.size() == width, "csv: row width differs from the header");
  return rows;
}

}  // namespace detail

inline std::vector<CheckResult> parse_checks(const std::string& doc, ReportFormat fmt) {
  std::vector<CheckResult> out;
  if (fmt == ReportFormat::json) {
    const auto j = Json::parse(doc);
    detail::require(j.at("schema_version").get<std::string>() == kReportSchema, "report: unknown schema_version");
    for (const auto& c : j.at("checks")) out.push_back(check_from_json(c));
    return out;
  }
  for (const auto& r : detail::csv_body(doc, detail::kCheckCsvHeader, 15)) {
    if (r[0] == "check") {
      CheckResult c;
      c.check_id = r[1];
      c.hard = detail::parse_bool(r[2]);
      c.description = r[3];
      out.push_back(std::move(c));
      continue;
    }
    detail::require(r[0] == "cell", "csv: unknown record kind");
    detail::require(!out.empty() && out.back().check_id == r[1], "csv: cell row outside its check");
    CellRecord c;
    c.mu = detail::parse_num(r[4]);
    c.nu = detail::parse_num(r[5]);
    c.t = detail::parse_num(r[6]);
    c.x = detail::parse_num(r[7]);
    c.y = detail::parse_num(r[8]);
    c.a = detail::parse_num(r[9]);
    c.margin = detail::parse_num(r[10]);
    c.slack = detail::parse_num(r[11]);
    c.method = method_from_string(r[12]);
    c.skipped = detail::parse_bool(r[13]);
    c.reason = r[14];
    out.back().cells.push_back(std::move(c));
  }
  for (auto& c : out) tally(c);
  return out;
}

inline EnvelopeReport parse_envelope(const std::string& doc, ReportFormat fmt) {
  EnvelopeReport rep;
  if (fmt == ReportFormat::json) {
    const auto j = Json::parse(doc);
    detail::require(j.at("schema_version").get<std::string>() == kReportSchema, "report: unknown schema_version");
    for (const auto& s : j.at("envelope")) rep.per_mu.push_back(envelope_from_json(s));
    return rep;
  }
  for (const auto& r : detail::csv_body(doc, detail::kEnvelopeCsvHeader, 14)) {
    if (r[0] == "mu") {
      EnvelopeSummary s;
      s.mu = detail::parse_num(r[1]);
      s.a = detail::parse_num(r[2]);
      rep.per_mu.push_back(std::move(s));
      continue;
    }
    detail::require(r[0] == "cell", "csv: unknown record kind");
    detail::require(!rep.per_mu.empty(), "csv: cell row before its mu row");
    EnvelopeCell c;
    c.t = detail::parse_num(r[3]);
    c.x = detail::parse_num(r[4]);
    c.y = detail::parse_num(r[5]);
    c.log_ratio = detail::parse_num(r[6]);
    c.log_rewrite_ratio = detail::parse_num(r[7]);
    c.regime = static_cast<int>(detail::parse_num(r[8]));
    c.identity_residual = detail::parse_num(r[9]);
    c.above_free = detail::parse_bool(r[10]);
    c.method = method_from_string(r[11]);
    c.skipped = detail::parse_bool(r[12]);
    c.reason = r[13];
    rep.per_mu.back().cell_values.push_back(std::move(c));
  }
  for (auto& s : rep.per_mu) summarize(s);
  return rep;
}

}  // namespace bkk

#endif  // BKK_REPORT_HPP
