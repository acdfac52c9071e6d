/* Copyright 2026 The DUS Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "dus/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>

#include "dus/errors.hpp"

namespace dus {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::optional<double> parse_double(std::string_view cell) {
  cell = trim(cell);
  if (cell.empty()) return std::nullopt;
  if (cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) return std::nullopt;
  return v;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

MultimodalDataset make_split(const SyntheticSpec& spec,
                             const std::vector<std::vector<double>>& means,
                             std::size_t n, Split split, std::uint64_t tag) {
  Rng rng(derive_seed(spec.seed, tag));
  MultimodalDataset ds;
  ds.num_classes = spec.classes;
  ds.split = split;
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    ds.labels[i] = static_cast<int>(i % static_cast<std::size_t>(spec.classes));
  std::shuffle(ds.labels.begin(), ds.labels.end(), rng);

  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t c = static_cast<std::size_t>(spec.classes);
  for (std::size_t j = 0; j < spec.modalities.size(); ++j) {
    const ModalitySpec& mod = spec.modalities[j];
    const double scale = mod.snr * mod.mean_scale;
    Matrix x(n, mod.dim);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& mu = means[j * c + static_cast<std::size_t>(ds.labels[i])];
      for (std::size_t d = 0; d < mod.dim; ++d)
        x(i, d) = scale * mu[d] + noise(rng);
    }
    ds.modalities.push_back(std::move(x));
  }
  return ds;
}

}  // namespace

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "unknown";
}

void MultimodalDataset::validate() const {
  if (modalities.empty()) throw ValidationError("dataset has no modalities");
  if (num_classes < 1) throw ValidationError("dataset needs at least one class");
  for (std::size_t j = 0; j < modalities.size(); ++j)
    if (modalities[j].rows() != labels.size())
      throw ValidationError("modality " + std::to_string(j) + " has " +
                            std::to_string(modalities[j].rows()) +
                            " rows but there are " +
                            std::to_string(labels.size()) + " labels");
  std::vector<bool> seen(static_cast<std::size_t>(num_classes), false);
  for (int y : labels) {
    if (y < 0 || y >= num_classes)
      throw ValidationError("label " + std::to_string(y) + " outside [0, " +
                            std::to_string(num_classes) + ")");
    seen[static_cast<std::size_t>(y)] = true;
  }
  if (split == Split::kTrain)
    for (std::size_t k = 0; k < seen.size(); ++k)
      if (!seen[k])
        throw ValidationError("class " + std::to_string(k) +
                              " does not occur in the train split");
}

void SyntheticSpec::validate() const {
  if (modalities.size() < 2)
    throw ValidationError("synthetic spec needs at least two modalities");
  if (classes < 2) throw ValidationError("synthetic spec needs >= 2 classes");
  if (n_train < static_cast<std::size_t>(classes))
    throw ValidationError("n_train must be at least the class count");
  for (const auto& m : modalities) {
    if (m.dim == 0) throw ValidationError("modality dim must be positive");
    if (!(m.snr >= 0.0) || !std::isfinite(m.snr))
      throw ValidationError("modality snr must be a non-negative real");
    if (!(m.mean_scale > 0.0) || !std::isfinite(m.mean_scale))
      throw ValidationError("modality mean_scale must be positive");
  }
}

SyntheticSplits generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, 0));
  std::normal_distribution<double> unit(0.0, 1.0);
  const std::size_t c = static_cast<std::size_t>(spec.classes);
  std::vector<std::vector<double>> means;
  means.reserve(spec.modalities.size() * c);
  for (const auto& mod : spec.modalities) {
    for (std::size_t k = 0; k < c; ++k) {
      std::vector<double> mu(mod.dim);
      double norm = 0.0;
      do {
        norm = 0.0;
        for (double& v : mu) {
          v = unit(rng);
          norm += v * v;
        }
      } while (norm == 0.0);
      norm = std::sqrt(norm);
      for (double& v : mu) v /= norm;
      means.push_back(std::move(mu));
    }
  }
  SyntheticSplits out;
  out.train = make_split(spec, means, spec.n_train, Split::kTrain, 1);
  out.val = make_split(spec, means, spec.n_val, Split::kVal, 2);
  out.test = make_split(spec, means, spec.n_test, Split::kTest, 3);
  return out;
}

Matrix read_csv_matrix(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IngestionError("cannot open " + file.string());
  std::vector<double> values;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  bool first_content = true;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    // A UTF-8 byte order mark may precede the first cell.
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    if (trim(line).empty()) continue;
    const bool is_first = first_content;
    first_content = false;
    const auto cells = split_commas(line);
    std::vector<double> parsed;
    parsed.reserve(cells.size());
    std::optional<std::size_t> bad_col;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      auto v = parse_double(cells[c]);
      if (!v) {
        bad_col = c;
        break;
      }
      parsed.push_back(*v);
    }
    if (bad_col) {
      if (is_first) continue;  // header row
      throw ParseError(file.string() + ": non-numeric cell at row " +
                           std::to_string(line_no) + ", column " +
                           std::to_string(*bad_col + 1),
                       line_no, *bad_col + 1);
    }
    if (rows == 0) cols = parsed.size();
    if (parsed.size() != cols)
      throw IngestionError(file.string() + ": row " + std::to_string(line_no) +
                           " has " + std::to_string(parsed.size()) +
                           " cells, expected " + std::to_string(cols));
    values.insert(values.end(), parsed.begin(), parsed.end());
    ++rows;
  }
  if (rows == 0) throw IngestionError(file.string() + ": no rows");
  return Matrix(rows, cols, std::move(values));
}

std::vector<int> read_labels(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IngestionError("cannot open " + file.string());
  std::vector<int> labels;
  std::size_t line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const auto cell = trim(line);
    if (cell.empty()) continue;
    int v = 0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size())
      throw ParseError(file.string() + ": non-integer label at row " +
                           std::to_string(line_no),
                       line_no, 1);
    labels.push_back(v);
  }
  if (labels.empty()) throw IngestionError(file.string() + ": no rows");
  return labels;
}

MultimodalDataset load_csv(std::span<const std::filesystem::path> modality_files,
                           const std::filesystem::path& labels_file,
                           Split split) {
  if (modality_files.empty())
    throw IngestionError("load_csv: no modality files given");
  MultimodalDataset ds;
  ds.split = split;
  for (const auto& f : modality_files) ds.modalities.push_back(read_csv_matrix(f));
  ds.labels = read_labels(labels_file);
  for (std::size_t j = 1; j < ds.modalities.size(); ++j)
    if (ds.modalities[j].rows() != ds.modalities[0].rows())
      throw IngestionError("row count mismatch: " + modality_files[0].string() +
                           " has " + std::to_string(ds.modalities[0].rows()) +
                           " rows, " + modality_files[j].string() + " has " +
                           std::to_string(ds.modalities[j].rows()));
  if (ds.labels.size() != ds.modalities[0].rows())
    throw IngestionError("row count mismatch: " + modality_files[0].string() +
                         " has " + std::to_string(ds.modalities[0].rows()) +
                         " rows, " + labels_file.string() + " has " +
                         std::to_string(ds.labels.size()));
  for (int y : ds.labels)
    if (y < 0) throw IngestionError(labels_file.string() + ": negative label");
  ds.num_classes = *std::ranges::max_element(ds.labels) + 1;
  ds.validate();
  return ds;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

IndexStream::IndexStream(std::size_t n, std::uint64_t seed)
    : order_(n), rng_(seed) {
  if (n == 0) throw ValidationError("IndexStream: empty population");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  reshuffle();
}

void IndexStream::reshuffle() {
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
  ++passes_;
}

std::vector<std::size_t> IndexStream::next(std::size_t count) {
  std::vector<std::size_t> out;
  out.reserve(count);
  while (out.size() < count) {
    if (cursor_ == order_.size()) reshuffle();
    const std::size_t take = std::min(count - out.size(), order_.size() - cursor_);
    out.insert(out.end(), order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
               order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + take));
    cursor_ += take;
  }
  consumed_ += count;
  return out;
}

BatchSampler::BatchSampler(std::size_t n, std::size_t modality_count,
                           std::uint64_t seed)
    : paired_(n, derive_seed(seed, 1000)) {
  streams_.reserve(modality_count);
  for (std::size_t j = 0; j < modality_count; ++j)
    streams_.emplace_back(n, derive_seed(seed, j));
}

ModalityBatch BatchSampler::sample_batch(const MultimodalDataset& data,
                                         std::size_t j, std::size_t count) {
  if (j >= streams_.size() || j >= data.modality_count())
    throw ValidationError("sample_batch: modality index out of range");
  if (count < 1 || count > data.size())
    throw ValidationError("sample_batch: batch size " + std::to_string(count) +
                          " outside [1, " + std::to_string(data.size()) + "]");
  ModalityBatch batch;
  batch.modality = j;
  batch.indices = streams_[j].next(count);
  batch.features = gather_rows(data.modalities[j], batch.indices);
  batch.labels.reserve(count);
  for (std::size_t i : batch.indices) batch.labels.push_back(data.labels[i]);
  return batch;
}

PairedBatch BatchSampler::paired_subbatch(const MultimodalDataset& data,
                                          std::span<const ModalityBatch> batches) {
  if (batches.empty()) throw ValidationError("paired_subbatch: no batches");
  std::size_t size = batches.front().size();
  for (const auto& b : batches) size = std::min(size, b.size());
  PairedBatch paired;
  paired.indices = paired_.next(size);
  for (const auto& x : data.modalities)
    paired.features.push_back(gather_rows(x, paired.indices));
  paired.labels.reserve(size);
  for (std::size_t i : paired.indices) paired.labels.push_back(data.labels[i]);
  return paired;
}

}  // namespace dus
