#pragma once

// Communication cost of split training versus a parameter-exchange baseline
// (every round each client uploads its model update and downloads the
// aggregated model). The baseline is modelled, not executed.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "splitnn/nn.hpp"

namespace splitnn {

/// Weights plus biases over all layers: sum_i d_i*d_{i-1} + d_i.
std::uint64_t param_count(std::span<const std::size_t> dims);
std::uint64_t param_count(const ModelSpec& spec);

/// clients * 2 * P * bytes_per_value. Frame headers are not modelled.
std::uint64_t baseline_round_bytes(std::uint64_t params, Precision precision,
                                   std::uint64_t clients);

enum class Scheme { split, parameter_exchange };
enum class Winner { split, baseline, tie };

std::string_view to_string(Scheme s) noexcept;
std::string_view to_string(Winner w) noexcept;

struct CostRow {
  std::uint64_t round = 0;  // 1-based
  Scheme scheme = Scheme::split;
  std::uint64_t bytes_round = 0;
  std::uint64_t bytes_cumulative = 0;
};

struct ComparisonReport {
  std::vector<std::size_t> dims;
  std::size_t split_index = 1;
  std::uint64_t batch_size = 0;
  std::uint64_t clients = 0;
  std::uint64_t rounds = 0;
  Precision precision = Precision::f32;
  std::uint64_t params = 0;

  std::uint64_t split_round_payload = 0;  // all clients, headers excluded
  std::uint64_t split_round_wire = 0;     // all clients, headers included
  std::uint64_t baseline_round = 0;       // all clients
  std::uint64_t split_total = 0;
  std::uint64_t baseline_total = 0;
  double ratio = 0.0;  // split / baseline per round, payload only
  Winner winner = Winner::tie;

  std::vector<CostRow> rows;
};

/// Header-free comparison: split wins iff s*(d_split + c) < P.
ComparisonReport compare(const ModelSpec& spec, std::uint64_t batch_size, std::uint64_t clients,
                         std::uint64_t rounds, Precision precision);

/// Columns: round,scheme,bytes_round,bytes_cumulative
void write_report_csv(const ComparisonReport& report, const std::filesystem::path& path);
nlohmann::json report_summary(const ComparisonReport& report);

}  // namespace splitnn
