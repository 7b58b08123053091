#include "splitnn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

#include "splitnn/error.hpp"

namespace splitnn {

void Dataset::validate() const {
  if (labels.empty()) throw ValidationError("dataset is empty");
  if (X.rows() != labels.size()) throw ValidationError("dataset rows and labels disagree");
  for (std::uint32_t label : labels) {
    if (label >= class_count) throw ValidationError("label outside class range");
  }
}

std::vector<std::size_t> Partition::counts() const {
  std::vector<std::size_t> out;
  out.reserve(indices.size());
  for (const auto& part : indices) out.push_back(part.size());
  return out;
}

Dataset gen_blobs(std::size_t classes, std::size_t dim, std::size_t n, double spread,
                  std::uint64_t seed) {
  if (classes == 0 || dim == 0 || n == 0) {
    throw ValidationError("gen_blobs: classes, dim and n must be positive");
  }
  if (!(spread >= 0.0) || !std::isfinite(spread)) {
    throw ValidationError("gen_blobs: spread must be a finite non-negative number");
  }

  Matrix centers(classes, dim);
  // Noise-free data keeps unit-radius centres so the classes stay apart.
  const double scale = spread > 0.0 ? 4.0 * spread : 1.0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (dim == 1) {
      centers(c, 0) = classes == 1 ? 0.0
                                   : scale * (2.0 * static_cast<double>(c) /
                                                  static_cast<double>(classes - 1) -
                                              1.0);
    } else {
      const double angle =
          2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(classes);
      centers(c, 0) = scale * std::cos(angle);
      centers(c, 1) = scale * std::sin(angle);
    }
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Dataset out{Matrix(n, dim), std::vector<std::uint32_t>(n), classes};
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = static_cast<std::uint32_t>(i % classes);
    out.labels[i] = label;
    for (std::size_t j = 0; j < dim; ++j) {
      out.X(i, j) = centers(label, j) + spread * noise(rng);
    }
  }
  return out;
}

std::vector<std::size_t> apportion(std::size_t total, std::span<const double> weights) {
  if (weights.empty()) throw ValidationError("apportion: no weights");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw ValidationError("apportion: weights must be positive and finite");
    }
    sum += w;
  }

  std::vector<std::size_t> shares(weights.size());
  std::vector<double> remainders(weights.size());
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const double quota = static_cast<double>(total) * weights[k] / sum;
    const double base = std::floor(quota);
    shares[k] = static_cast<std::size_t>(base);
    remainders[k] = quota - base;
    assigned += shares[k];
  }
  // Floating rounding can overshoot by a unit when quotas land on integers.
  while (assigned > total) {
    auto k = static_cast<std::size_t>(
        std::max_element(shares.begin(), shares.end()) - shares.begin());
    --shares[k];
    --assigned;
  }

  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t i = 0; assigned < total; i = (i + 1) % order.size()) {
    ++shares[order[i]];
    ++assigned;
  }
  return shares;
}

Partition partition_proportional(const Dataset& dataset, std::span<const double> weights,
                                 std::uint64_t seed) {
  const std::size_t n = dataset.size();
  const auto counts = apportion(n, weights);
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] == 0) {
      throw ValidationError("partition leaves client " + std::to_string(k) + " without samples");
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  Partition out;
  out.indices.reserve(counts.size());
  auto cursor = order.begin();
  for (std::size_t count : counts) {
    std::vector<std::size_t> part(cursor, cursor + static_cast<std::ptrdiff_t>(count));
    std::sort(part.begin(), part.end());
    out.indices.push_back(std::move(part));
    cursor += static_cast<std::ptrdiff_t>(count);
  }
  return out;
}

Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices) {
  Dataset out{dataset.X.gather_rows(indices), {}, dataset.class_count};
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(dataset.labels.at(i));
  return out;
}

namespace {

[[noreturn]] void ingest_fail(const std::filesystem::path& path, std::size_t line,
                              const std::string& what) {
  throw IngestionError(path.string() + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    cells.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, std::optional<std::size_t> class_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError(path.string() + ": cannot open file");

  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  bool have_header = false;
  std::vector<double> values;
  std::vector<std::uint32_t> labels;

  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = line;
    if (line_no == 1 && text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
    if (!text.empty() && text.back() == '\r') text.remove_suffix(1);
    if (trim(text).empty()) continue;
    const auto cells = split_commas(text);

    if (!have_header) {
      if (cells.size() < 2) ingest_fail(path, line_no, "header needs at least one feature and a label");
      for (std::size_t j = 0; j + 1 < cells.size(); ++j) {
        if (trim(cells[j]) != "f" + std::to_string(j)) {
          ingest_fail(path, line_no, "expected header column f" + std::to_string(j));
        }
      }
      if (trim(cells.back()) != "label") ingest_fail(path, line_no, "last header column must be 'label'");
      dim = cells.size() - 1;
      have_header = true;
      continue;
    }

    if (cells.size() != dim + 1) {
      ingest_fail(path, line_no, "expected " + std::to_string(dim + 1) + " cells, found " +
                                     std::to_string(cells.size()));
    }
    for (std::size_t j = 0; j < dim; ++j) {
      const auto cell = trim(cells[j]);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty() ||
          !std::isfinite(v)) {
        ingest_fail(path, line_no, "non-numeric feature '" + std::string(cell) + "' in column f" +
                                       std::to_string(j));
      }
      values.push_back(v);
    }
    const auto cell = trim(cells.back());
    std::uint32_t label = 0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), label);
    if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty()) {
      ingest_fail(path, line_no, "label '" + std::string(cell) + "' is not a non-negative integer");
    }
    if (class_count && label >= *class_count) {
      ingest_fail(path, line_no, "label " + std::to_string(label) + " is not below class count " +
                                     std::to_string(*class_count));
    }
    labels.push_back(label);
  }

  if (!have_header) throw IngestionError(path.string() + ": missing header row");
  if (labels.empty()) throw IngestionError(path.string() + ": no data rows");

  std::size_t classes = class_count.value_or(0);
  if (!class_count) classes = *std::max_element(labels.begin(), labels.end()) + std::size_t{1};
  const std::size_t n = labels.size();
  return Dataset{Matrix(n, dim, std::move(values)), std::move(labels), classes};
}

void write_csv(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError(path.string() + ": cannot open for writing");
  for (std::size_t j = 0; j < dataset.dim(); ++j) out << 'f' << j << ',';
  out << "label\n";
  char buf[64];
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (std::size_t j = 0; j < dataset.dim(); ++j) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), dataset.X(i, j));
      out.write(buf, end - buf);
      out << ',';
    }
    out << dataset.labels[i] << '\n';
  }
  if (!out) throw IngestionError(path.string() + ": write failed");
}

}  // namespace splitnn
