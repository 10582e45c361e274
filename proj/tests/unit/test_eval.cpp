#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "builders.hpp"
#include "oracles.hpp"
#include "wxhome/eval.hpp"

using namespace wxhome;
using wxhome::testing::station;

namespace {

// Stations 1..n spaced 20 km apart along a meridian, prefecture per pair.
StationIndex line(int n) {
  std::vector<Station> s;
  for (int i = 0; i < n; ++i) {
    s.push_back(station(i + 1, 34.0 + oracle::degrees_north(20.0 * i), 135.0, "P" + std::to_string(i / 2)));
  }
  return StationIndex(std::move(s));
}

} // namespace

TEST(PrecisionAtK, TopOneEqualsTruth) {
  const auto idx = line(3);
  for (double d : {0.5, 10.0, 1000.0}) EXPECT_EQ(precision_at_k({{"u", {2, 1, 3}}}, {{"u", 2}}, idx, 1, d), 1.0);
}

TEST(PrecisionAtK, HalfCorrect) {
  const auto idx = line(3);
  EXPECT_EQ(precision_at_k({{"u", {2, 1, 3}}, {"v", {3, 1, 2}}}, {{"u", 2}, {"v", 1}}, idx, 1, 1.0), 0.5);
}

TEST(PrecisionAtK, SixtyKmAgainstThreshold) {
  StationIndex idx({station(1, 35.0, 135.0), station(2, 35.0 + 0.5395922182347228, 135.0)});
  EXPECT_NEAR(station_distance_km(1, 2, idx), 60.0, 1e-9);
  const EstimationResult r{{"u", {2, 1}}};
  const HomeTruth t{{"u", 1}};
  EXPECT_EQ(precision_at_k(r, t, idx, 1, 70.0), 1.0);
  EXPECT_EQ(precision_at_k(r, t, idx, 1, 50.0), 0.0);
  // strict <
  EXPECT_EQ(precision_at_k(r, t, idx, 1, station_distance_km(1, 2, idx)), 0.0);
}

TEST(PrecisionAtK, Errors) {
  const auto idx = line(3);
  const EstimationResult r{{"u", {1}}};
  EXPECT_THROW(precision_at_k(r, {}, idx, 1, 10.0), DataError);
  EXPECT_THROW(precision_at_k(r, {{"u", 1}}, idx, 0, 10.0), UsageError);
  EXPECT_THROW(precision_at_k(r, {{"u", 1}}, idx, 1, 0.0), UsageError);
  EXPECT_THROW(precision_at_k({}, {{"u", 1}}, idx, 1, 10.0), DataError);
}

TEST(PrecisionAtK, MonotoneAndSaturates) {
  std::mt19937_64 rng(21);
  const auto idx = line(12);
  for (int trial = 0; trial < 50; ++trial) {
    EstimationResult r;
    HomeTruth t;
    for (int u = 0; u < 15; ++u) {
      std::vector<StationId> perm{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
      std::shuffle(perm.begin(), perm.end(), rng);
      r["u" + std::to_string(u)] = perm;
      t["u" + std::to_string(u)] = 1 + static_cast<StationId>(rng() % 12);
    }
    const auto ds = default_distance_sweep();
    for (std::size_t k : {1u, 3u, 5u}) {
      for (std::size_t i = 1; i < ds.size(); ++i) {
        EXPECT_LE(precision_at_k(r, t, idx, k, ds[i - 1]), precision_at_k(r, t, idx, k, ds[i]));
      }
    }
    for (double d : ds) {
      EXPECT_LE(precision_at_k(r, t, idx, 1, d), precision_at_k(r, t, idx, 3, d));
      EXPECT_LE(precision_at_k(r, t, idx, 3, d), precision_at_k(r, t, idx, 5, d));
    }
    EXPECT_EQ(precision_at_k(r, t, idx, idx.size(), 1e5), 1.0);
  }
}

TEST(PrefecturePrecision, SinglePrefectureAllCorrect) {
  const auto idx = line(2);  // both in P0
  const EstimationResult r{{"u", {1}}, {"v", {2}}};
  const HomeTruth t{{"u", 1}, {"v", 2}};
  for (auto mode : {Denominator::all_users, Denominator::per_group}) {
    const auto p = precision_by_prefecture(r, t, idx, 1, 10.0, mode);
    ASSERT_EQ(p.size(), 1u);
    EXPECT_EQ(p.at("P0").precision, 1.0);
  }
}

TEST(PrefecturePrecision, DenominatorModes) {
  const auto idx = line(4);  // P0: 1,2  P1: 3,4
  const EstimationResult r{{"u", {1}}, {"v", {1}}};
  const HomeTruth t{{"u", 1}, {"v", 3}};
  const auto paper = precision_by_prefecture(r, t, idx, 1, 10.0, Denominator::all_users);
  EXPECT_EQ(paper.at("P0").precision, 0.5);
  EXPECT_EQ(paper.at("P1").precision, 0.0);
  const auto group = precision_by_prefecture(r, t, idx, 1, 10.0, Denominator::per_group);
  EXPECT_EQ(group.at("P0").precision, 1.0);
  EXPECT_EQ(group.at("P1").precision, 0.0);
  EXPECT_EQ(group.at("P1").users, 1u);
}

TEST(PrefecturePrecision, RequiresSamePrefecture) {
  // stations 2 and 3 are 20 km apart but in different prefectures
  const auto idx = line(4);
  const EstimationResult r{{"u", {3}}};
  const HomeTruth t{{"u", 2}};
  EXPECT_EQ(precision_at_k(r, t, idx, 1, 30.0), 1.0);
  EXPECT_EQ(precision_by_prefecture(r, t, idx, 1, 30.0).at("P0").precision, 0.0);
}

TEST(PrefecturePrecision, PerGroupDominatesPaperAndOmitsEmpty) {
  std::mt19937_64 rng(8);
  const auto idx = line(10);
  for (int trial = 0; trial < 30; ++trial) {
    EstimationResult r;
    HomeTruth t;
    for (int u = 0; u < 9; ++u) {
      const std::string id = "u" + std::to_string(u);
      r[id] = {1 + static_cast<StationId>(rng() % 10), 1 + static_cast<StationId>(rng() % 10)};
      t[id] = 1 + static_cast<StationId>(rng() % 6);  // P0..P2 only
    }
    const auto paper = precision_by_prefecture(r, t, idx, 2, 30.0, Denominator::all_users);
    const auto group = precision_by_prefecture(r, t, idx, 2, 30.0, Denominator::per_group);
    EXPECT_FALSE(paper.contains("P4"));
    for (const auto& [p, e] : paper) {
      EXPECT_GE(group.at(p).precision, e.precision);
      EXPECT_GE(e.precision, 0.0);
      EXPECT_LE(group.at(p).precision, 1.0);
    }
  }
}

TEST(MacroAverage, Mean) {
  EXPECT_EQ(macro_average(std::map<std::string, double>{{"P1", 1.0}, {"P2", 0.0}}), 0.5);
  EXPECT_EQ(macro_average(std::map<std::string, double>{{"P1", 0.3}}), 0.3);
  EXPECT_NEAR(macro_average(std::map<std::string, double>{{"P1", 0.2}, {"P2", 0.4}, {"P3", 0.6}}), 0.4, 1e-15);
  EXPECT_THROW(macro_average(std::map<std::string, double>{}), DataError);
}

TEST(Evaluate, ReportAndCsv) {
  const auto idx = line(4);
  const EstimationResult r{{"u", {1, 2}}, {"v", {1, 3}}};
  const HomeTruth t{{"u", 1}, {"v", 3}};
  EvalPlan plan;
  plan.ks = {1, 2};
  plan.ds = {10, 30};
  const auto rep = evaluate("weather", r, t, idx, plan);
  EXPECT_EQ(rep.users, 2u);
  EXPECT_EQ((rep.overall.at({1, 10.0})), 0.5);
  EXPECT_EQ((rep.overall.at({2, 10.0})), 1.0);
  EXPECT_EQ(rep.macro, 0.25);
  const auto j = rep.to_json();
  EXPECT_EQ(j["denominator"], "paper");
  EXPECT_EQ(j["precision"].size(), 4u);
  std::ostringstream sweep, pref;
  write_sweep_csv(sweep, rep);
  EXPECT_EQ(sweep.str(), "k,d,precision\n1,10,0.5\n1,30,0.5\n2,10,1\n2,30,1\n");
  write_prefecture_csv(pref, rep);
  EXPECT_EQ(pref.str(), "prefecture,users,precision\nP0,1,0.5\nP1,1,0\n");
}

TEST(Evaluate, DefaultSweepIsTenToOneSixty) {
  const auto ds = default_distance_sweep();
  ASSERT_EQ(ds.size(), 16u);
  EXPECT_EQ(ds.front(), 10.0);
  EXPECT_EQ(ds.back(), 160.0);
}

TEST(Estimates, ParseJsonl) {
  std::istringstream in(
      R"({"user_id":"u","method":"weather","ranked":[{"station_id":3,"disagreements":0,"compared":2},{"station_id":1}]})"
      "\n\n");
  std::string method;
  const auto r = parse_estimates(in, &method);
  EXPECT_EQ(method, "weather");
  EXPECT_EQ(r.at("u"), (std::vector<StationId>{3, 1}));
  std::istringstream dup("{\"user_id\":\"u\",\"ranked\":[]}\n{\"user_id\":\"u\",\"ranked\":[]}\n");
  EXPECT_THROW(parse_estimates(dup), DataError);
}
