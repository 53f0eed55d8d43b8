#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace saml::csv {

/// Parsed CSV with a fixed header. None of the pipeline's formats use quoting;
/// field values are validated at write time to contain no comma or newline.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Read a CSV file and check its header against `expected_header`
/// (exact match, same order). Throws InputError on mismatch or ragged rows.
Table read(const std::filesystem::path& path, const std::vector<std::string>& expected_header);

/// Write header + rows with '\n' line endings (byte-stable output).
/// Throws InputError if any field contains a comma, CR or LF.
void write(const std::filesystem::path& path, const std::vector<std::string>& header,
           const std::vector<std::vector<std::string>>& rows);

std::string format_double(double v, int precision = 9);

}  // namespace saml::csv
