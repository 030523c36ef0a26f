#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fuit/image.hpp"

namespace fuit::harness {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SourceFile {
  std::string path;
  std::string crc32;
};

struct Dataset {
  std::vector<ImageU8> images;
  std::vector<int> labels;
  std::vector<std::string> class_names;
  std::vector<SourceFile> sources;

  std::size_t size() const { return images.size(); }
  std::size_t num_classes() const { return class_names.size(); }
  std::size_t rows() const { return images.empty() ? 0 : images.front().rows; }
  std::size_t cols() const { return images.empty() ? 0 : images.front().cols; }

  /// Equal lengths, labels in [0, k), one image shape. Throws DatasetError.
  void validate() const;
};

enum class DatasetFormat { kIdx, kDirectory };

DatasetFormat parse_dataset_format(const std::string& name);
std::string dataset_format_name(DatasetFormat format);

struct DatasetSource {
  DatasetFormat format = DatasetFormat::kIdx;
  std::filesystem::path path;         // IDX image file, or root with one sub-directory per class
  std::filesystem::path labels_path;  // IDX label file (IDX format only)
};

/// Loads and validates a dataset. Class sub-directories are sorted by name
/// and their PGM/PNG files by file name.
Dataset load_dataset(const DatasetSource& source);

/// Writes images + labels as an IDX pair.
void save_idx_dataset(const Dataset& data, const std::filesystem::path& images_path,
                      const std::filesystem::path& labels_path);

/// Relabels classes through `merge` (old -> new). Unmapped classes keep
/// their index; the result is renumbered densely in ascending order.
Dataset merge_labels(const Dataset& data, const std::map<int, int>& merge);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Stratified k-fold split. Every class is shuffled with the seed and dealt
/// round-robin across folds, continuing the rotation between classes so fold
/// sizes differ by at most one. Throws DatasetError when a class has fewer
/// than k examples.
std::vector<Fold> kfold_split(std::span<const int> labels, int k, std::uint64_t seed);

/// Stratified hold-out carved from `indices`: returns (kept, held_out) with
/// round(fraction * class_count) of each class held out (at least one when
/// the class has two or more members).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_holdout(
    std::span<const std::size_t> indices, std::span<const int> labels, double fraction, std::uint64_t seed);

}  // namespace fuit::harness
