#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace autoad::csv {

// Minimal RFC-4180-ish CSV support: quoted fields with embedded commas,
// quotes and newlines inside quoted fields.
std::string escape_field(const std::string& field);
std::vector<std::string> parse_line(const std::string& line);

struct Document {
  std::vector<std::string> comments;  // leading lines starting with '#'
  std::vector<std::vector<std::string>> rows;  // including the header row
};

Document read_file(const std::filesystem::path& file);
void write_file(const std::filesystem::path& file, const Document& doc);

}  // namespace autoad::csv
