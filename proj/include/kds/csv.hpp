#pragma once

#include <istream>
#include <optional>
#include <string>
#include <vector>

namespace kds::csv {

/// Comma split without quoting; the canonical schemas use opaque tokens that
/// may not contain commas.
std::vector<std::string> split(const std::string& line);

/// Strict double parse of a whole field. Returns nullopt on any trailing
/// garbage or empty input.
std::optional<double> parse_double(const std::string& field);

std::optional<long long> parse_int(const std::string& field);

/// Shortest representation that round-trips the exact double value.
std::string format_double(double v);

/// Line reader with 1-based line numbers (header = line 1). Handles both LF
/// and CRLF endings.
class LineReader {
  public:
    explicit LineReader(std::istream& in) : in_(in) {}
    bool next(std::string& line);
    std::size_t line_number() const { return line_; }

  private:
    std::istream& in_;
    std::size_t line_ = 0;
};

}  // namespace kds::csv
