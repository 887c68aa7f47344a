#include "qeye/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace qeye {

std::vector<std::string> split_delimited(std::string_view line, char delim) {
  std::vector<std::string> out;
  if (delim == '\t') {
    std::size_t start = 0;
    for (;;) {
      auto pos = line.find('\t', start);
      out.emplace_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
      if (pos == std::string_view::npos) break;
      start = pos + 1;
    }
    return out;
  }
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  if (quoted) throw ParseError("unterminated quoted field");
  out.push_back(std::move(field));
  return out;
}

void write_delimited(std::ostream& out, const std::vector<std::string>& fields, char delim) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << delim;
    const auto& f = fields[i];
    bool needs_quote = delim != '\t' && f.find_first_of(std::string{delim, '"', '\n'}) != std::string::npos;
    if (!needs_quote) {
      out << f;
      continue;
    }
    out << '"';
    for (char c : f) {
      if (c == '"') out << '"';
      out << c;
    }
    out << '"';
  }
  out << '\n';
}

Table Table::read(std::istream& in, char delim, const std::string& source) {
  Table t;
  t.source_ = source;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    try {
      fields = split_delimited(line, delim);
    } catch (const ParseError& e) {
      throw ParseError(source + ": row " + std::to_string(lineno) + ": " + e.what(), lineno);
    }
    if (!have_header) {
      t.header_ = std::move(fields);
      for (std::size_t i = 0; i < t.header_.size(); ++i) t.index_.emplace(t.header_[i], i);
      have_header = true;
      continue;
    }
    if (fields.size() != t.header_.size()) {
      throw ParseError(source + ": row " + std::to_string(lineno) + ": expected " +
                           std::to_string(t.header_.size()) + " fields, got " +
                           std::to_string(fields.size()),
                       lineno);
    }
    t.rows_.push_back(std::move(fields));
    t.lines_.push_back(lineno);
  }
  if (!have_header) throw ParseError(source + ": empty file (no header row)");
  return t;
}

Table Table::read_file(const std::string& path, char delim) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  return read(in, delim, path);
}

bool Table::has(std::string_view c) const { return index_.find(c) != index_.end(); }

std::size_t Table::column(std::string_view c) const {
  auto it = index_.find(c);
  if (it == index_.end()) throw ParseError(source_ + ": missing required column " + std::string(c));
  return it->second;
}

const std::string& Table::at(std::size_t r, std::string_view c) const { return rows_[r][column(c)]; }

double parse_double(const std::string& text, const std::string& what, std::size_t line) {
  double v = 0;
  const char* b = text.data();
  const char* e = b + text.size();
  while (b < e && *b == ' ') ++b;
  if (b < e && *b == '+') ++b;
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) {
    throw ParseError("row " + std::to_string(line) + ": " + what + ": not a number: '" + text + "'", line);
  }
  return v;
}

long long parse_int(const std::string& text, const std::string& what, std::size_t line) {
  long long v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) {
    throw ParseError("row " + std::to_string(line) + ": " + what + ": not an integer: '" + text + "'", line);
  }
  return v;
}

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace qeye
