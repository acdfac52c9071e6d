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

#ifndef DUS_DATA_HPP_
#define DUS_DATA_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "dus/numerics.hpp"

namespace dus {

enum class Split { kTrain, kVal, kTest };

std::string_view to_string(Split s);

// Row i of every modality matrix describes the same sample, labelled
// labels[i].
struct MultimodalDataset {
  std::vector<Matrix> modalities;
  std::vector<int> labels;
  int num_classes = 0;
  Split split = Split::kTrain;

  std::size_t size() const { return labels.size(); }
  std::size_t modality_count() const { return modalities.size(); }

  // Row counts agree, labels lie in [0, num_classes) and, for the train
  // split, every class occurs. Throws ValidationError.
  void validate() const;
};

struct ModalitySpec {
  std::size_t dim = 16;
  double snr = 1.0;
  double mean_scale = 1.0;
};

struct SyntheticSpec {
  std::size_t n_train = 1000;
  std::size_t n_val = 0;
  std::size_t n_test = 1000;
  int classes = 10;
  std::vector<ModalitySpec> modalities;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticSplits {
  MultimodalDataset train;
  MultimodalDataset val;
  MultimodalDataset test;
};

// Class k in modality j is N(snr_j * mean_scale_j * mu_kj, I) with mu_kj a
// unit-norm random direction fixed by the seed. Labels are shared row-wise
// across modalities and balanced across classes. Pure function of `spec`.
SyntheticSplits generate_synthetic(const SyntheticSpec& spec);

// One CSV per modality (comma separated, optional header row detected by a
// non-numeric first row) plus a labels file with one integer per line.
MultimodalDataset load_csv(std::span<const std::filesystem::path> modality_files,
                           const std::filesystem::path& labels_file,
                           Split split = Split::kTrain);

// Parsed numeric table from a single CSV file. Exposed for the loader tests.
Matrix read_csv_matrix(const std::filesystem::path& file);
std::vector<int> read_labels(const std::filesystem::path& file);

struct ModalityBatch {
  std::size_t modality = 0;
  Matrix features;
  std::vector<int> labels;
  std::vector<std::size_t> indices;

  std::size_t size() const { return labels.size(); }
};

// Index-aligned rows across all modalities, used for fused losses.
struct PairedBatch {
  std::vector<Matrix> features;
  std::vector<int> labels;
  std::vector<std::size_t> indices;

  std::size_t size() const { return labels.size(); }
};

// Endless stream of indices in [0, n): a fresh random permutation per pass,
// so every index is produced once before any repeats.
class IndexStream {
 public:
  IndexStream(std::size_t n, std::uint64_t seed);

  std::vector<std::size_t> next(std::size_t count);

  std::size_t population() const { return order_.size(); }
  std::uint64_t consumed() const { return consumed_; }
  std::uint64_t passes() const { return passes_; }

 private:
  void reshuffle();

  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::uint64_t consumed_ = 0;
  std::uint64_t passes_ = 0;
  Rng rng_;
};

// Owns one independent index stream per modality (unpaired draws) and one
// shared stream for paired sub-batches.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t modality_count, std::uint64_t seed);

  // Next `count` samples of modality j. Throws ValidationError unless
  // 1 <= count <= n and j is a valid modality.
  ModalityBatch sample_batch(const MultimodalDataset& data, std::size_t j,
                             std::size_t count);

  // min_j batches[j].size() rows drawn from the paired stream, with the same
  // indices for every modality.
  PairedBatch paired_subbatch(const MultimodalDataset& data,
                              std::span<const ModalityBatch> batches);

  std::uint64_t consumed(std::size_t j) const { return streams_.at(j).consumed(); }
  std::uint64_t paired_consumed() const { return paired_.consumed(); }

 private:
  std::vector<IndexStream> streams_;
  IndexStream paired_;
};

// Deterministic sub-seed derivation (splitmix64 of seed and tag).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

}  // namespace dus

#endif  // DUS_DATA_HPP_
