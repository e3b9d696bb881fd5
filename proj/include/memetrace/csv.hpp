#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace memetrace::csv {

/// Reads one RFC 4180 record (quoted fields may span lines). Returns false at
/// end of input. Throws memetrace::Error on an unterminated quote.
bool read_record(std::istream& in, std::vector<std::string>& fields);

/// Quotes a field only when it needs quoting.
std::string escape(std::string_view field);

void write_record(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace memetrace::csv
