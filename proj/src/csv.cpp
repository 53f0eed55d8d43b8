#include "saml/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "saml/error.hpp"

namespace saml::csv {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

Table read(const std::filesystem::path& path, const std::vector<std::string>& expected_header) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open CSV: " + path.string());

  Table t;
  std::string line;
  if (!std::getline(in, line)) throw InputError("empty CSV: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.header = split_line(line);
  if (t.header != expected_header) {
    throw InputError("unexpected header in " + path.string() + ": got '" + line + "'");
  }

  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto row = split_line(line);
    if (row.size() != t.header.size()) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(t.header.size()) + " fields, got " +
                       std::to_string(row.size()));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write(const std::filesystem::path& path, const std::vector<std::string>& header,
           const std::vector<std::vector<std::string>>& rows) {
  auto check = [](const std::string& f) {
    if (f.find_first_of(",\r\n") != std::string::npos) {
      throw InputError("CSV field contains separator or newline: '" + f + "'");
    }
  };

  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write CSV: " + path.string());

  auto emit = [&](const std::vector<std::string>& fields) {
    for (size_t i = 0; i < fields.size(); ++i) {
      check(fields[i]);
      if (i) out << ',';
      out << fields[i];
    }
    out << '\n';
  };

  emit(header);
  for (const auto& r : rows) {
    if (r.size() != header.size()) throw InputError("CSV row width does not match header");
    emit(r);
  }
  if (!out) throw InputError("write failed: " + path.string());
}

std::string format_double(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

}  // namespace saml::csv
