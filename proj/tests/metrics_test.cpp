#include <gtest/gtest.h>

#include <algorithm>

#include "mrrn/metrics.hpp"
#include "mrrn/rng.hpp"

using namespace mrrn;

namespace {

LabelMask mask_of(std::vector<std::uint8_t> labels) {
  LabelMask m(1, 1, static_cast<long>(labels.size()));
  m.labels = std::move(labels);
  return m;
}

}  // namespace

TEST(Dsc, PerfectAndDisjoint) {
  auto a = mask_of({1, 1, 0, 2});
  EXPECT_DOUBLE_EQ(dsc(a, a, 1), 1.0);
  auto b = mask_of({0, 0, 1, 1});
  auto c = mask_of({1, 1, 0, 0});
  EXPECT_DOUBLE_EQ(dsc(b, c, 1), 0.0);
}

TEST(Dsc, DegenerateRules) {
  auto empty = mask_of({0, 0, 0, 0});
  auto some = mask_of({1, 0, 0, 0});
  EXPECT_DOUBLE_EQ(dsc(empty, empty, 1), 1.0);  // both absent
  EXPECT_DOUBLE_EQ(dsc(some, empty, 1), 0.0);   // false positive only
  EXPECT_DOUBLE_EQ(dsc(empty, some, 1), 0.0);   // missed structure
}

TEST(Dsc, TwoThirdsOverlap) {
  // |P| = 2, |G| = 1, intersection 1 -> 2*1 / 3
  auto pred = mask_of({1, 1, 0});
  auto gt = mask_of({1, 0, 0});
  EXPECT_DOUBLE_EQ(dsc(pred, gt, 1), 2.0 / 3.0);
}

TEST(Dsc, IgnoresOtherLabels) {
  auto pred = mask_of({1, 2, 3, 4});
  auto gt = mask_of({1, 3, 2, 4});
  EXPECT_DOUBLE_EQ(dsc(pred, gt, 1), 1.0);
  EXPECT_DOUBLE_EQ(dsc(pred, gt, 4), 1.0);
  EXPECT_DOUBLE_EQ(dsc(pred, gt, 2), 0.0);
}

TEST(Dsc, InvalidInputsThrow) {
  auto a = mask_of({1, 0});
  auto b = mask_of({1, 0, 0});
  EXPECT_THROW(dsc(a, b, 1), std::invalid_argument);
  EXPECT_THROW(dsc(a, a, 0), std::invalid_argument);
  EXPECT_THROW(dsc(a, a, 6), std::invalid_argument);
}

TEST(Aggregate, FourValueQuartiles) {
  auto st = aggregate({0.6, 0.7, 0.8, 0.9});
  EXPECT_DOUBLE_EQ(st.median, 0.75);
  EXPECT_DOUBLE_EQ(st.q1, 0.675);
  EXPECT_DOUBLE_EQ(st.q3, 0.825);
  EXPECT_DOUBLE_EQ(st.mean, 0.75);
  // population std of {0.6, 0.7, 0.8, 0.9}
  EXPECT_NEAR(st.stddev, std::sqrt(0.0125), 1e-12);
}

TEST(Aggregate, PermutationInvariant) {
  std::vector<double> v{0.1, 0.9, 0.4, 0.7, 0.2};
  auto a = aggregate(v);
  std::reverse(v.begin(), v.end());
  auto b = aggregate(v);
  EXPECT_DOUBLE_EQ(a.median, b.median);
  EXPECT_DOUBLE_EQ(a.q1, b.q1);
  EXPECT_DOUBLE_EQ(a.q3, b.q3);
  EXPECT_DOUBLE_EQ(a.mean, b.mean);
  EXPECT_DOUBLE_EQ(a.stddev, b.stddev);
}

TEST(Aggregate, SingleCase) {
  auto st = aggregate({0.83});
  EXPECT_DOUBLE_EQ(st.median, 0.83);
  EXPECT_DOUBLE_EQ(st.q1, 0.83);
  EXPECT_DOUBLE_EQ(st.q3, 0.83);
  EXPECT_DOUBLE_EQ(st.mean, 0.83);
  EXPECT_DOUBLE_EQ(st.stddev, 0.0);
}

TEST(Aggregate, EmptyThrows) { EXPECT_THROW(aggregate({}), std::invalid_argument); }

TEST(Aggregate, MatchesSortOracle) {
  Rng rng(55);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<double> v(static_cast<std::size_t>(rng.uniform_int(1, 40)));
    for (auto& x : v) x = rng.uniform(0.0, 1.0);
    auto st = aggregate(v);
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    auto pct = [&](double q) {
      const double pos = q * double(sorted.size() - 1);
      const auto lo = static_cast<std::size_t>(pos);
      const double frac = pos - double(lo);
      return lo + 1 < sorted.size() ? sorted[lo] * (1 - frac) + sorted[lo + 1] * frac : sorted[lo];
    };
    EXPECT_NEAR(st.median, pct(0.5), 1e-12);
    EXPECT_NEAR(st.q1, pct(0.25), 1e-12);
    EXPECT_NEAR(st.q3, pct(0.75), 1e-12);
    double mean = 0;
    for (double x : v) mean += x;
    mean /= double(v.size());
    double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= double(v.size());
    EXPECT_NEAR(st.mean, mean, 1e-12);
    EXPECT_NEAR(st.stddev, std::sqrt(var), 1e-12);
  }
}

TEST(Table, FormatsMeanStdTwoDecimals) {
  EXPECT_EQ(format_mean_std(0.77, 0.04), "0.77 ± 0.04");
  EXPECT_EQ(format_mean_std(0.5, 0.0), "0.50 ± 0.00");
  EXPECT_EQ(format_mean_std(0.666, 0.123), "0.67 ± 0.12");
}

TEST(Table, TextTableContainsHeadersAndCells) {
  MethodStats stats;
  for (const auto& s : report_structures()) stats[s] = aggregate({0.75, 0.79});
  stats["esophagus"] = aggregate({0.73, 0.81});  // mean 0.77, pop std 0.04
  auto table = emit_table({{"MRRN", stats}}, TableFormat::text);
  EXPECT_NE(table.find("Esophagus"), std::string::npos);
  EXPECT_NE(table.find("Spinal Cord"), std::string::npos);
  EXPECT_NE(table.find("MRRN"), std::string::npos);
  EXPECT_NE(table.find("0.77 ± 0.04"), std::string::npos);
}

TEST(Table, CsvSchemaAndMissingStructure) {
  MethodStats stats;
  for (const auto& s : report_structures()) stats[s] = aggregate({0.9, 0.8});
  auto csv = emit_table({{"unet", stats}}, TableFormat::csv);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "method,structure,n,mean,std,median,q1,q3");
  // header + 5 structures
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
  EXPECT_NE(csv.find("unet,left_lung,2,"), std::string::npos);

  stats.erase("heart");
  EXPECT_THROW(emit_table({{"unet", stats}}, TableFormat::csv), std::invalid_argument);
}
