#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "jaa/config.hpp"

using namespace jaa;

TEST_CASE("sectioned key=value parsing") {
  Config c = Config::parse_text(
      "# comment\n"
      "top = 1\n"
      "[net]\n"
      "l = 32   # inline comment\n"
      "zeta = 0.14\n"
      "[train]\n"
      "augment = true\n");
  CHECK(c.get_int("top", 0) == 1);
  CHECK(c.get_int("net.l", 0) == 32);
  CHECK(c.get_double("net.zeta", 0) == doctest::Approx(0.14));
  CHECK(c.get_bool("train.augment", false));
  CHECK(c.get("missing", "fallback") == "fallback");
}

TEST_CASE("overrides win over file values") {
  Config c = Config::parse_text("[net]\nl = 32\n");
  c.apply_override("net.l=176");
  c.apply_override("net.c = 8");
  CHECK(c.get_int("net.l", 0) == 176);
  CHECK(c.get_int("net.c", 0) == 8);
  CHECK_THROWS(c.apply_override("no_equals_sign"));
}

TEST_CASE("unknown keys are rejected by the allow-list") {
  Config c = Config::parse_text("[net]\nl = 32\ntypo_key = 3\n");
  CHECK_THROWS_AS(c.check_known({"net.l"}), std::invalid_argument);
  Config ok = Config::parse_text("[net]\nl = 32\n");
  CHECK_NOTHROW(ok.check_known({"net.l"}));
}

TEST_CASE("malformed input errors carry line context") {
  CHECK_THROWS(Config::parse_text("[net\nl = 1\n"));
  CHECK_THROWS(Config::parse_text("novalue\n"));
  CHECK_THROWS(Config::parse_text("= 3\n"));
  Config c = Config::parse_text("[net]\nl = x\n");
  CHECK_THROWS(c.get_int("net.l", 0));
  CHECK_THROWS(c.get_double("net.l", 0));
  CHECK_THROWS(c.get_bool("net.l", false));
}

TEST_CASE("snapshot is a deterministic dump of the effective config") {
  Config a = Config::parse_text("[net]\nl = 32\nc = 2\n");
  Config b = Config::parse_text("[net]\nc = 2\nl = 32\n");
  CHECK(a.snapshot() == b.snapshot());
  CHECK(a.snapshot().find("net.l = 32") != std::string::npos);
}
