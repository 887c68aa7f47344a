#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qeye {

/// Raised for malformed input files. `line()` is 1-based (header is line 1), 0 if unknown.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Delimited table with a header row. Quoted fields ("a,b", "a""b") are
/// supported for comma files; tab files are split literally.
class Table {
 public:
  static Table read(std::istream& in, char delim, const std::string& source);
  static Table read_file(const std::string& path, char delim);

  const std::vector<std::string>& header() const { return header_; }
  std::size_t rows() const { return rows_.size(); }
  const std::vector<std::string>& row(std::size_t i) const { return rows_[i]; }
  /// 1-based file line of data row `i`.
  std::size_t line_of(std::size_t i) const { return lines_[i]; }

  bool has(std::string_view column) const;
  /// Column index or throws ParseError naming the column.
  std::size_t column(std::string_view column) const;
  const std::string& at(std::size_t row, std::string_view column) const;

  const std::string& source() const { return source_; }

 private:
  std::string source_;
  std::vector<std::string> header_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::vector<std::vector<std::string>> rows_;
  std::vector<std::size_t> lines_;
};

std::vector<std::string> split_delimited(std::string_view line, char delim);
void write_delimited(std::ostream& out, const std::vector<std::string>& fields, char delim);

double parse_double(const std::string& text, const std::string& what, std::size_t line = 0);
long long parse_int(const std::string& text, const std::string& what, std::size_t line = 0);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double v);

}  // namespace qeye
