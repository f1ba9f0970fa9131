#include "doctest.h"

#include <limits>
#include <random>

#include "gaitseg/errors.hpp"
#include "gaitseg/io.hpp"
#include "test_util.hpp"

using namespace gaitseg;

TEST_CASE("format_double: shortest round trip") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(-0.0078125) == "-0.0078125");
  CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
  std::mt19937_64 rng(79);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng);
    CHECK(std::stod(format_double(v)) == v);
  }
}

TEST_CASE("events JSON round trip is exact; missing keys are empty") {
  const auto dir = testutil::tmp_dir("io_events");
  EventSet ev;
  ev.lic = {0.1, 1.0 / 3, 2.5};
  ev.rfc = {0.7};
  save_events(ev, dir / "e.json");
  CHECK(load_events(dir / "e.json") == ev);
  const auto j = read_json_file(dir / "e.json");
  for (const char* k : {"lic", "lfc", "ric", "rfc"}) CHECK(j.contains(k));
  CHECK(events_from_json(Json{{"ric", {1.0}}}).ric == std::vector<double>{1.0});
  CHECK(events_from_json(Json::object()).total() == 0);
  testutil::write_file(dir / "bad.json", "{\"lic\": [1, ");
  CHECK_THROWS_AS(load_events(dir / "bad.json"), DataError);
  CHECK_THROWS_AS(load_events(dir / "absent.json"), DataError);
}

TEST_CASE("likelihood CSV round trip") {
  const auto dir = testutil::tmp_dir("io_lik");
  std::mt19937_64 rng(83);
  Signal2D lik(4, 300);
  std::uniform_real_distribution<double> u(0, 1);
  for (Index i = 0; i < lik.size(); ++i) lik.data()[i] = u(rng);
  save_likelihoods(lik, 128, dir / "l.csv");
  CHECK(testutil::read_file(dir / "l.csv").rfind("time_s,ric,rfc,lic,lfc\n", 0) == 0);
  double rate = 0;
  const Signal2D back = load_likelihoods(dir / "l.csv", &rate);
  CHECK(back == lik);
  CHECK(rate == doctest::Approx(128));
}

TEST_CASE("csv_row and digest") {
  CHECK(csv_row({"a", "b", "c"}) == "a,b,c\n");
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}
