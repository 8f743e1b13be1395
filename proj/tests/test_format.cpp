#include <doctest.h>

#include <cmath>
#include <limits>

#include "privdistill/format.hpp"
#include "privdistill/random.hpp"

using namespace privdistill;

TEST_CASE("format_double is the shortest round trip") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(-2.5) == "-2.5");
  CHECK(format_double(1e-22) == "1e-22");
  CHECK(format_double(std::nan("")) == "nan");
  CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");

  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-30, 30));
    double back = 0.0;
    REQUIRE(parse_double(format_double(v), back));
    CHECK(back == v);
  }
}

TEST_CASE("strict number parsing") {
  double d = 0.0;
  CHECK(parse_double("+1.5", d));
  CHECK(d == 1.5);
  CHECK(parse_double("-3e2", d));
  CHECK(d == -300.0);
  CHECK_FALSE(parse_double("", d));
  CHECK_FALSE(parse_double("1.5x", d));
  CHECK_FALSE(parse_double(" 1", d));
  CHECK_FALSE(parse_double("+", d));

  long long n = 0;
  CHECK(parse_int("42", n));
  CHECK(n == 42);
  CHECK(parse_int("+7", n));
  CHECK(n == 7);
  CHECK(parse_int("-3", n));
  CHECK(n == -3);
  CHECK_FALSE(parse_int("1.0", n));
  CHECK_FALSE(parse_int("99999999999999999999", n));
}

TEST_CASE("join_csv") {
  CHECK(join_csv({}) == "");
  CHECK(join_csv({"a"}) == "a");
  CHECK(join_csv({"a", "", "c"}) == "a,,c");
}
