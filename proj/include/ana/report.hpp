#pragma once

#include <string>
#include <vector>

namespace ana {

/// A header row plus data rows of preformatted cells.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Space-aligned plain text; numeric-looking cells are right-aligned.
std::string to_text(const Table& t);
/// Comma-separated, header first.
std::string to_csv(const Table& t);

std::string fixed(double v, int digits);

/// Writes `text` to path and `csv` to the sibling file with extension .csv.
void write_report_pair(const std::string& path, const std::string& text, const std::string& csv);

}  // namespace ana
