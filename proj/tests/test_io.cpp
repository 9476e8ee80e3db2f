#include <doctest.h>

#include <cmath>

#include "trajcluster/io.hpp"

using namespace trajcluster;

TEST_SUITE("io") {
  TEST_CASE("format_double round trips exactly") {
    for (double v : {0.0, 1.0, -1.5, 3.141592653589793, 1e-300, 1.0 / 3.0, 2e17}) {
      const std::string s = io::format_double(v);
      CHECK(std::stod(s) == v);
    }
  }

  TEST_CASE("write/read file round trip") {
    const std::string path = "/tmp/trajcluster_io_test.txt";
    io::write_file(path, "a,b\n1,2\n");
    CHECK(io::read_file(path) == "a,b\n1,2\n");
    const auto rows = io::read_csv(path);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] == (std::vector<std::string>{"a", "b"}));
    CHECK(rows[1] == (std::vector<std::string>{"1", "2"}));
  }

  TEST_CASE("missing file raises") { CHECK_THROWS(io::read_file("/tmp/definitely_missing_xyz")); }
}
