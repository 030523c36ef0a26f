#include "fuit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "fuit/image_io.hpp"
#include "fuit/rng.hpp"

namespace fuit::harness {

namespace fs = std::filesystem;

void Dataset::validate() const {
  if (images.size() != labels.size()) {
    throw DatasetError("dataset has " + std::to_string(images.size()) + " images but " +
                       std::to_string(labels.size()) + " labels");
  }
  if (images.empty()) throw DatasetError("dataset is empty");
  const int k = static_cast<int>(class_names.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= k) {
      throw DatasetError("label " + std::to_string(labels[i]) + " of example " + std::to_string(i) +
                         " outside [0, " + std::to_string(k) + ")");
    }
    if (images[i].rows != images[0].rows || images[i].cols != images[0].cols) {
      throw DatasetError("example " + std::to_string(i) + " is " + std::to_string(images[i].rows) + "x" +
                         std::to_string(images[i].cols) + ", expected " + std::to_string(images[0].rows) + "x" +
                         std::to_string(images[0].cols));
    }
  }
}

DatasetFormat parse_dataset_format(const std::string& name) {
  if (name == "idx") return DatasetFormat::kIdx;
  if (name == "dir" || name == "directory") return DatasetFormat::kDirectory;
  throw std::invalid_argument("unknown dataset format '" + name + "' (expected idx or dir)");
}

std::string dataset_format_name(DatasetFormat format) {
  return format == DatasetFormat::kIdx ? "idx" : "dir";
}

Dataset load_dataset(const DatasetSource& source) {
  Dataset data;
  try {
    if (source.format == DatasetFormat::kIdx) {
      data.images = io::read_idx_images(source.path);
      auto raw = io::read_idx_labels(source.labels_path);
      data.labels.assign(raw.begin(), raw.end());
      int max_label = data.labels.empty() ? -1 : *std::max_element(data.labels.begin(), data.labels.end());
      for (int c = 0; c <= max_label; ++c) data.class_names.push_back(std::to_string(c));
      data.sources = {{source.path.string(), io::file_checksum(source.path)},
                      {source.labels_path.string(), io::file_checksum(source.labels_path)}};
    } else {
      if (!fs::is_directory(source.path)) throw DatasetError(source.path.string() + " is not a directory");
      std::vector<fs::path> class_dirs;
      for (const auto& e : fs::directory_iterator(source.path)) {
        if (e.is_directory()) class_dirs.push_back(e.path());
      }
      std::sort(class_dirs.begin(), class_dirs.end());
      for (const auto& dir : class_dirs) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(dir)) {
          auto ext = e.path().extension().string();
          if (e.is_regular_file() && (ext == ".pgm" || ext == ".png" || ext == ".PGM" || ext == ".PNG")) {
            files.push_back(e.path());
          }
        }
        if (files.empty()) continue;
        std::sort(files.begin(), files.end());
        const int label = static_cast<int>(data.class_names.size());
        data.class_names.push_back(dir.filename().string());
        for (const auto& f : files) {
          data.images.push_back(io::read_image(f));
          data.labels.push_back(label);
          data.sources.push_back({f.string(), io::file_checksum(f)});
        }
      }
    }
  } catch (const io::FormatError& e) {
    throw DatasetError(e.what());
  }
  data.validate();
  return data;
}

void save_idx_dataset(const Dataset& data, const fs::path& images_path, const fs::path& labels_path) {
  io::write_idx_images(images_path, data.images);
  std::vector<std::uint8_t> labels;
  for (int y : data.labels) {
    if (y < 0 || y > 255) throw DatasetError("label does not fit an IDX ubyte");
    labels.push_back(static_cast<std::uint8_t>(y));
  }
  io::write_idx_labels(labels_path, labels);
}

Dataset merge_labels(const Dataset& data, const std::map<int, int>& merge) {
  if (merge.empty()) return data;
  std::vector<int> mapped(data.labels.size());
  std::set<int> used;
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    auto it = merge.find(data.labels[i]);
    mapped[i] = it == merge.end() ? data.labels[i] : it->second;
    used.insert(mapped[i]);
  }
  Dataset out = data;
  std::map<int, int> dense;
  out.class_names.clear();
  for (int c : used) {
    dense[c] = static_cast<int>(dense.size());
    std::string name;
    for (std::size_t old = 0; old < data.class_names.size(); ++old) {
      auto it = merge.find(static_cast<int>(old));
      int target = it == merge.end() ? static_cast<int>(old) : it->second;
      if (target == c) name += (name.empty() ? "" : "+") + data.class_names[old];
    }
    out.class_names.push_back(name.empty() ? std::to_string(c) : name);
  }
  for (std::size_t i = 0; i < mapped.size(); ++i) out.labels[i] = dense[mapped[i]];
  return out;
}

std::vector<Fold> kfold_split(std::span<const int> labels, int k, std::uint64_t seed) {
  if (k < 2) throw DatasetError("k-fold needs k >= 2, got " + std::to_string(k));
  if (static_cast<std::size_t>(k) > labels.size()) {
    throw DatasetError("k = " + std::to_string(k) + " exceeds dataset size " + std::to_string(labels.size()));
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  for (const auto& [c, members] : by_class) {
    if (members.size() < static_cast<std::size_t>(k)) {
      throw DatasetError("class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                         " examples, fewer than k = " + std::to_string(k));
    }
  }

  std::vector<int> fold_of(labels.size(), -1);
  std::size_t deal = 0;
  for (auto& [c, members] : by_class) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(c)}));
    rng.shuffle(std::span<std::size_t>(members));
    for (auto idx : members) fold_of[idx] = static_cast<int>(deal++ % static_cast<std::size_t>(k));
  }

  std::vector<Fold> folds(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (int f = 0; f < k; ++f) {
      (fold_of[i] == f ? folds[f].test : folds[f].train).push_back(i);
    }
  }
  return folds;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_holdout(
    std::span<const std::size_t> indices, std::span<const int> labels, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw DatasetError("hold-out fraction must be in [0, 1)");
  std::map<int, std::vector<std::size_t>> by_class;
  for (auto i : indices) by_class[labels[i]].push_back(i);
  std::vector<std::size_t> kept, held;
  for (auto& [c, members] : by_class) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(c), 0x5eedULL}));
    rng.shuffle(std::span<std::size_t>(members));
    auto n_hold = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size())));
    if (fraction > 0.0 && n_hold == 0 && members.size() >= 2) n_hold = 1;
    held.insert(held.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_hold));
    kept.insert(kept.end(), members.begin() + static_cast<std::ptrdiff_t>(n_hold), members.end());
  }
  std::sort(kept.begin(), kept.end());
  std::sort(held.begin(), held.end());
  return {kept, held};
}

}  // namespace fuit::harness
