#include "splitnn/accounting.hpp"

#include <fstream>

#include "splitnn/error.hpp"
#include "splitnn/protocol.hpp"

namespace splitnn {

std::uint64_t param_count(std::span<const std::size_t> dims) {
  std::uint64_t total = 0;
  for (std::size_t i = 1; i < dims.size(); ++i) {
    total += static_cast<std::uint64_t>(dims[i]) * dims[i - 1] + dims[i];
  }
  return total;
}

std::uint64_t param_count(const ModelSpec& spec) { return param_count(spec.dims); }

std::uint64_t baseline_round_bytes(std::uint64_t params, Precision precision,
                                   std::uint64_t clients) {
  return clients * 2 * params * bytes_per_value(precision);
}

std::string_view to_string(Scheme s) noexcept {
  return s == Scheme::split ? "split" : "parameter_exchange";
}

std::string_view to_string(Winner w) noexcept {
  switch (w) {
    case Winner::split:
      return "split";
    case Winner::baseline:
      return "baseline";
    case Winner::tie:
      return "tie";
  }
  return "?";
}

ComparisonReport compare(const ModelSpec& spec, std::uint64_t batch_size, std::uint64_t clients,
                         std::uint64_t rounds, Precision precision) {
  spec.validate();
  if (batch_size == 0 || clients == 0 || rounds == 0) {
    throw ValidationError("compare: batch size, clients and rounds must be positive");
  }
  ComparisonReport r;
  r.dims = spec.dims;
  r.split_index = spec.split_index;
  r.batch_size = batch_size;
  r.clients = clients;
  r.rounds = rounds;
  r.precision = precision;
  r.params = param_count(spec);

  const std::uint64_t width = spec.boundary_width();
  const std::uint64_t classes = spec.class_count();
  r.split_round_payload = clients * round_bytes(batch_size, width, classes, precision, false);
  r.split_round_wire = clients * round_bytes(batch_size, width, classes, precision, true);
  r.baseline_round = baseline_round_bytes(r.params, precision, clients);
  r.split_total = r.split_round_payload * rounds;
  r.baseline_total = r.baseline_round * rounds;
  r.ratio = static_cast<double>(r.split_round_payload) / static_cast<double>(r.baseline_round);

  const std::uint64_t split_values = batch_size * (width + classes);
  r.winner = split_values < r.params   ? Winner::split
             : split_values > r.params ? Winner::baseline
                                       : Winner::tie;

  r.rows.reserve(2 * rounds);
  for (std::uint64_t i = 1; i <= rounds; ++i) {
    r.rows.push_back({i, Scheme::split, r.split_round_payload, r.split_round_payload * i});
    r.rows.push_back({i, Scheme::parameter_exchange, r.baseline_round, r.baseline_round * i});
  }
  return r;
}

void write_report_csv(const ComparisonReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  out << "round,scheme,bytes_round,bytes_cumulative\n";
  for (const auto& row : report.rows) {
    out << row.round << ',' << to_string(row.scheme) << ',' << row.bytes_round << ','
        << row.bytes_cumulative << '\n';
  }
  if (!out) throw Error(path.string() + ": write failed");
}

nlohmann::json report_summary(const ComparisonReport& report) {
  return {
      {"dims", report.dims},
      {"split_index", report.split_index},
      {"batch_size", report.batch_size},
      {"clients", report.clients},
      {"rounds", report.rounds},
      {"precision", to_string(report.precision)},
      {"params", report.params},
      {"split_bytes_per_round", report.split_round_payload},
      {"split_bytes_per_round_with_headers", report.split_round_wire},
      {"baseline_bytes_per_round", report.baseline_round},
      {"split_total_bytes", report.split_total},
      {"baseline_total_bytes", report.baseline_total},
      {"ratio", report.ratio},
      {"winner", to_string(report.winner)},
      {"accounting", "payload bytes only; split wins iff s*(d_split+c) < P"},
  };
}

}  // namespace splitnn
