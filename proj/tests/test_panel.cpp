#include <sstream>

#include "doctest.h"

#include "dtr/error.hpp"
#include "dtr/panel.hpp"
#include "dtr/sim.hpp"

using namespace dtr;

namespace {

Panel one_subject() {
  Trajectory s;
  s.id = 7;
  s.v1 = 1;
  s.v2 = 0;
  s.v3 = 2.5;
  s.records = {
      {600, 0.2, -1, 0, -0.5, 0},
      {640, 0.21, -1.1, 0, -0.4, 1},
      {700, 0.22, -0.9, 0, -0.3, kMissingFlag},
  };
  return Panel(1, {s});
}

Panel simulated(int n, std::uint64_t seed) {
  SimSpec spec;
  spec.n_subjects = n;
  spec.seed = seed;
  return simulate_panel(spec);
}

}  // namespace

TEST_CASE("dimension schedule") {
  const int expected[] = {11, 16, 21, 26, 31, 36, 41, 46, 51, 56, 61, 66};
  for (int k = 1; k <= 12; ++k) CHECK(history_columns(k).size() == static_cast<std::size_t>(expected[k - 1]));
  CHECK(history_columns(3, {true, true, false}).size() == 22);
  CHECK(history_columns(3, {false, false, false}).size() == 18);

  const Panel p = simulated(300, 3);
  for (int k = 1; k <= 12; ++k) {
    const DesignMatrix d = history_features(p, k);
    CHECK(d.x.cols() == expected[k - 1]);
    CHECK(d.x.rows() == static_cast<Eigen::Index>(at_risk(p, k).size()));
    CHECK(d.x.allFinite());
  }
}

TEST_CASE("history row equals hand enumeration") {
  const Panel p = one_subject();
  const DesignMatrix d = history_features(p, 2);
  const std::vector<std::string> names{"V1",   "V2",   "V3",   "L1_0", "L2_0", "L3_0", "Y_0", "T_0",
                                       "L1_1", "L2_1", "L3_1", "Y_1",  "T_1",  "L1_2", "L2_2", "L3_2"};
  CHECK(d.column_names == names);
  const double row[] = {1, 0, 2.5, 600, 0.2, -1, -0.5, 0, 640, 0.21, -1.1, -0.4, 1, 700, 0.22, -0.9};
  REQUIRE(d.x.cols() == 16);
  for (int j = 0; j < 16; ++j) CHECK(d.x(0, j) == row[j]);
  CHECK(d.column("T_1") == 12);
  CHECK(d.column("nope") == -1);

  TreatmentPaths paths(1, 2);
  paths << 1, 0;
  const DesignMatrix swapped = history_features(p, std::vector<std::size_t>{0}, 2, {}, &paths);
  CHECK(swapped.x(0, 7) == 1);
  CHECK(swapped.x(0, 12) == 0);
  CHECK(swapped.x(0, 13) == 700);
}

TEST_CASE("at-risk sets") {
  const Panel p = simulated(1000, 17);
  CHECK(at_risk(p, 0).size() == 1000);
  for (int k = 0; k <= 11; ++k) {
    const auto now = at_risk(p, k), next = at_risk(p, k + 1);
    CHECK(std::includes(now.begin(), now.end(), next.begin(), next.end()));
  }
}

TEST_CASE("attrition at time point 12") {
  // Mean over five panels, so the band is not at the mercy of one draw.
  double n12 = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) n12 += static_cast<double>(at_risk(simulated(1000, seed), 12).size());
  n12 /= 5;
  CHECK(n12 >= 455);
  CHECK(n12 <= 516);
}

TEST_CASE("integrity errors") {
  Trajectory s = one_subject()[0];
  s.records[1].l2 = kMissing;
  const Panel bad(1, {s});
  CHECK_THROWS_AS(validate_panel(bad), DataIntegrityError);
  CHECK_THROWS_AS(history_features(bad, 2), DataIntegrityError);

  Trajectory back = one_subject()[0];
  back.records[1] = TimeRecord{};
  back.records[1].c = 1;
  CHECK_THROWS_AS(validate_panel(Panel(1, {back})), DataIntegrityError);

  Trajectory a = one_subject()[0], b = a;
  CHECK_THROWS_AS(validate_panel(Panel(1, {a, b})), DataIntegrityError);
}

TEST_CASE("csv round trips") {
  std::stringstream empty;
  write_csv(Panel(), empty);
  CHECK(empty.str() == "id,time,V1,V2,V3,L1,L2,L3,C,Y,T\n");

  Trajectory s;
  s.id = 1;
  s.v3 = 1.0 / 3.0;
  s.records = {{612.123456789, 0.1, -0.7, 0, 0.1 + 0.2, 1}, {650.5, 0.11, -0.6, 0, 1e-17, kMissingFlag}};
  const Panel tiny(0, {s});
  std::stringstream io;
  write_csv(tiny, io);
  CHECK(read_csv(io) == tiny);

  const Panel p = simulated(100, 23);
  std::stringstream big;
  write_csv(p, big);
  const Panel q = read_csv(big);
  CHECK(q == p);
}

TEST_CASE("csv errors name the offending row") {
  std::stringstream header("id,time,V1\n");
  CHECK_THROWS_AS(read_csv(header), ParseError);

  std::stringstream dup(
      "id,time,V1,V2,V3,L1,L2,L3,C,Y,T\n"
      "1,0,1,0,2,600,0.2,-1,0,0,0\n"
      "1,0,1,0,2,600,0.2,-1,0,0,0\n");
  try {
    read_csv(dup);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }

  std::stringstream nonmono(
      "id,time,V1,V2,V3,L1,L2,L3,C,Y,T\n"
      "1,0,1,0,2,600,0.2,-1,0,0,0\n"
      "1,1,1,0,2,,,,1,,\n"
      "1,2,1,0,2,600,0.2,-1,0,0,\n");
  CHECK_THROWS_AS(read_csv(nonmono), ParseError);
}

TEST_CASE("truncate_horizon keeps the leading records") {
  const Panel p = simulated(50, 2);
  const Panel t = truncate_horizon(p, 3);
  CHECK(t.horizon() == 3);
  CHECK(t[0].records.size() == 5);
  CHECK(t[0].records[3] == p[0].records[3]);
  CHECK(t[0].records[4].l1 == p[0].records[4].l1);
  CHECK(t[0].records[4].y == p[0].records[4].y);
  CHECK(t[0].records[4].t == kMissingFlag);  // no treatment at K + 1
  CHECK_THROWS_AS(truncate_horizon(p, 12), InvalidParameter);
}
