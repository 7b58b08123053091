#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "splitnn/matrix.hpp"

namespace splitnn {

struct Dataset {
  Matrix X;                           // n x d_0
  std::vector<std::uint32_t> labels;  // length n
  std::size_t class_count = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return X.cols(); }

  /// Throws ValidationError if the fields disagree.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Samples of one dataset assigned to each client.
struct Partition {
  std::vector<std::vector<std::size_t>> indices;

  std::vector<std::size_t> counts() const;
  std::size_t client_count() const noexcept { return indices.size(); }
};

/// Gaussian blobs: sample i belongs to class i % classes; class c is centred
/// at the c-th vertex of a regular polygon in the first two coordinates
/// (a line segment when dim == 1), scaled by 4*spread, with N(0, spread^2)
/// noise per coordinate. spread == 0 uses unit-radius centres and no noise.
Dataset gen_blobs(std::size_t classes, std::size_t dim, std::size_t n, double spread,
                  std::uint64_t seed);

/// Shuffles [0, n) and deals each client floor(n*w_k/sum(w)) indices, with the
/// residue going to the largest fractional parts (ties to the lower client).
/// Every client must end up with at least one sample.
Partition partition_proportional(const Dataset& dataset, std::span<const double> weights,
                                 std::uint64_t seed);

Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices);

/// Reads `f0,...,f{d-1},label`. When class_count is given, labels must be
/// below it; otherwise it is max(label)+1. Throws IngestionError with the
/// offending line number.
Dataset load_csv(const std::filesystem::path& path,
                 std::optional<std::size_t> class_count = std::nullopt);

/// Writes the same format with shortest round-trip float formatting.
void write_csv(const Dataset& dataset, const std::filesystem::path& path);

/// Largest-remainder apportionment of `total` in proportion to `weights`.
std::vector<std::size_t> apportion(std::size_t total, std::span<const double> weights);

}  // namespace splitnn
