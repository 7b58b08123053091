#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "splitnn/accounting.hpp"

using namespace splitnn;

namespace {

ModelSpec spec_of(std::vector<std::size_t> dims) {
  ModelSpec s;
  s.dims = std::move(dims);
  return s;
}

// Independent summation over layer shapes.
std::uint64_t count_by_hand(const std::vector<std::size_t>& dims) {
  std::uint64_t p = 0;
  for (std::size_t i = 1; i < dims.size(); ++i) p += dims[i] * dims[i - 1] + dims[i];
  return p;
}

}  // namespace

TEST(ParamCount, Examples) {
  EXPECT_EQ(param_count(spec_of({2, 3, 2})), 17u);
  EXPECT_EQ(param_count(spec_of({784, 128, 64, 10})), 109'386u);
  EXPECT_EQ(param_count(spec_of({784, 128, 64, 10})), count_by_hand({784, 128, 64, 10}));
}

TEST(ParamCount, AddingHiddenUnit) {
  std::vector<std::size_t> dims{5, 7, 4, 3};
  for (std::size_t i = 1; i + 1 < dims.size(); ++i) {
    auto grown = dims;
    ++grown[i];
    EXPECT_EQ(param_count(grown) - param_count(dims), dims[i - 1] + dims[i + 1] + 1);
  }
}

TEST(BaselineRoundBytes, Examples) {
  EXPECT_EQ(baseline_round_bytes(17, Precision::f32, 1), 136u);
  EXPECT_EQ(baseline_round_bytes(109'386, Precision::f32, 1), 875'088u);
  EXPECT_EQ(baseline_round_bytes(109'386, Precision::f64, 6), 2 * baseline_round_bytes(109'386, Precision::f64, 3));
}

TEST(Compare, PaperScaleConfigFavoursSplit) {
  const auto r = compare(spec_of({784, 128, 64, 10}), 32, 1, 10, Precision::f32);
  EXPECT_EQ(r.split_round_payload, 35'328u);
  EXPECT_EQ(r.split_round_wire, 35'440u);
  EXPECT_EQ(r.baseline_round, 875'088u);
  EXPECT_NEAR(r.ratio, 35'328.0 / 875'088.0, 1e-12);
  EXPECT_EQ(r.winner, Winner::split);
  EXPECT_EQ(r.split_total, 10 * 35'328u);
  EXPECT_EQ(r.rows.size(), 20u);
}

TEST(Compare, TieWhenPayloadEqualsParams) {
  // dims [2,3,2]: P = 17 is prime, so use [1,1,1]: P = 4 = s*(d1+c) with s=2.
  const auto r = compare(spec_of({1, 1, 1}), 2, 1, 3, Precision::f64);
  EXPECT_EQ(r.params, 4u);
  EXPECT_DOUBLE_EQ(r.ratio, 1.0);
  EXPECT_EQ(r.winner, Winner::tie);
}

TEST(Compare, LargeBatchFavoursBaseline) {
  const auto r = compare(spec_of({784, 128, 64, 10}), 1000, 1, 1, Precision::f32);
  EXPECT_GT(r.split_round_payload, r.baseline_round);
  EXPECT_EQ(r.winner, Winner::baseline);
}

TEST(Compare, CostsIncreaseMonotonically) {
  const auto r = compare(spec_of({10, 20, 5}), 8, 3, 6, Precision::f64);
  std::uint64_t last_split = 0, last_base = 0;
  for (const auto& row : r.rows) {
    auto& last = row.scheme == Scheme::split ? last_split : last_base;
    EXPECT_GT(row.bytes_cumulative, last);
    last = row.bytes_cumulative;
  }
  EXPECT_LT(compare(spec_of({10, 20, 5}), 8, 3, 6, Precision::f64).split_round_payload,
            compare(spec_of({10, 20, 5}), 9, 3, 6, Precision::f64).split_round_payload);
  EXPECT_LT(compare(spec_of({10, 20, 5}), 8, 3, 6, Precision::f64).baseline_round,
            compare(spec_of({10, 21, 5}), 8, 3, 6, Precision::f64).baseline_round);
}

TEST(Compare, ReportFiles) {
  const auto r = compare(spec_of({2, 3, 2}), 4, 2, 2, Precision::f32);
  const auto path = std::filesystem::temp_directory_path() / "splitnn_report.csv";
  write_report_csv(r, path);
  std::ifstream in(path);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(header, "round,scheme,bytes_round,bytes_cumulative");
  EXPECT_EQ(first, "1,split," + std::to_string(r.split_round_payload) + "," +
                       std::to_string(r.split_round_payload));
  const auto j = report_summary(r);
  EXPECT_EQ(j.at("winner"), std::string(to_string(r.winner)));
  EXPECT_EQ(j.at("params").get<std::uint64_t>(), 17u);
}
