#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace emkat::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Reads a comma-separated UTF-8 file with a header row. Quoted fields may
// contain commas, newlines, and doubled quotes (RFC 4180).
Table read(const std::filesystem::path& path);

// Quotes a field only when needed.
std::string escape(const std::string& field);

std::string format_row(const std::vector<std::string>& fields);

void write(const std::filesystem::path& path,
           const std::vector<std::string>& header,
           const std::vector<std::vector<std::string>>& rows);

}  // namespace emkat::csv
