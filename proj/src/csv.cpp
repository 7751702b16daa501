#include "autoad/csv.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "autoad/common.hpp"

namespace autoad::csv {

std::string escape_field(const std::string& field) {
  bool needs_quotes = field.find_first_of(",\"\n\r") != std::string::npos;
  if (!needs_quotes) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

std::vector<std::string> parse_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool in_quotes = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

Document read_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) {
    throw AutoadError(ErrorCode::MissingFile, file.string());
  }
  Document doc;
  std::string line;
  bool header_zone = true;
  auto strip_cr = [](std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
  };
  while (std::getline(in, line)) {
    strip_cr(line);
    if (header_zone && !line.empty() && line[0] == '#') {
      doc.comments.push_back(line);
      continue;
    }
    header_zone = false;
    if (line.empty()) continue;
    // An odd number of quotes means a quoted field continues past the
    // physical line break.
    std::string logical = line;
    while (std::count(logical.begin(), logical.end(), '"') % 2 == 1 &&
           std::getline(in, line)) {
      strip_cr(line);
      logical += "\n" + line;
    }
    doc.rows.push_back(parse_line(logical));
  }
  return doc;
}

void write_file(const std::filesystem::path& file, const Document& doc) {
  std::ofstream out(file, std::ios::binary);
  if (!out) {
    throw AutoadError(ErrorCode::MissingFile, "cannot open for write: " + file.string());
  }
  for (const auto& c : doc.comments) out << c << "\n";
  for (const auto& row : doc.rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out << ",";
      out << escape_field(row[i]);
    }
    out << "\n";
  }
}

}  // namespace autoad::csv
