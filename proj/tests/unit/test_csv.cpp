#include <catch_amalgamated.hpp>

#include <limits>
#include <sstream>

#include "qeye/csv.hpp"

using namespace qeye;

TEST_CASE("quoted comma fields round-trip") {
  std::ostringstream out;
  write_delimited(out, {"id", "text"}, ',');
  write_delimited(out, {"1", "a, \"b\" c"}, ',');
  std::istringstream in(out.str());
  const Table t = Table::read(in, ',', "mem");
  REQUIRE(t.rows() == 1);
  CHECK(t.at(0, "text") == "a, \"b\" c");
  CHECK(t.line_of(0) == 2);
}

TEST_CASE("tab files split literally") {
  std::istringstream in("a\tb\n1\t\"x\n");
  const Table t = Table::read(in, '\t', "mem");
  CHECK(t.at(0, "b") == "\"x");
}

TEST_CASE("missing column names the column") {
  std::istringstream in("a,b\n1,2\n");
  const Table t = Table::read(in, ',', "mem");
  CHECK_THROWS_WITH(t.column("zzz"), Catch::Matchers::ContainsSubstring("zzz"));
}

TEST_CASE("ragged row reports its line") {
  std::istringstream in("a,b\n1,2\n3\n");
  try {
    Table::read(in, ',', "mem");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("numbers parse strictly") {
  CHECK(parse_double("2.5", "x") == 2.5);
  CHECK(parse_int("-7", "x") == -7);
  CHECK_THROWS_AS(parse_double("2.5ms", "x"), ParseError);
  CHECK_THROWS_AS(parse_int("1.0", "x"), ParseError);
  CHECK_THROWS_AS(parse_double("", "x"), ParseError);
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -0.0, std::numeric_limits<double>::max()}) {
    CHECK(parse_double(format_double(v), "v") == v);
  }
  CHECK(format_double(250) == "250");
}
