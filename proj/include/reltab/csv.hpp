#pragma once
#include <string>
#include <vector>

namespace reltab {

/// RFC 4180 CSV reader: quoted fields, doubled-quote escapes, embedded
/// commas and newlines, CRLF or LF line endings. Throws ParseError.
std::vector<std::vector<std::string>> read_csv(const std::string& path);

std::vector<std::vector<std::string>> parse_csv(const std::string& text,
                                                const std::string& origin = "<string>");

/// Writes rows with minimal quoting.
void write_csv(const std::string& path,
               const std::vector<std::vector<std::string>>& rows);

std::string csv_quote(const std::string& field);

}  // namespace reltab
