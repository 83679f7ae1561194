#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tailcal/datamodel.hpp"

namespace tailcal::io {

namespace fs = std::filesystem;

// On-disk matrix format:
//   "CALB" | u32 version=1 | u64 rows | u64 cols | rows*cols little-endian f32
// Labels:
//   "CALL" | u32 version=1 | u64 length | length little-endian u32
inline constexpr std::uint32_t kFormatVersion = 1;

enum class DataFormat { binary, csv };

DataFormat parse_format(const std::string& name);
std::string to_string(DataFormat format);

void write_matrix_binary(const fs::path& path, const MatrixF& m);
MatrixF read_matrix_binary(const fs::path& path);
void write_labels_binary(const fs::path& path, std::span<const Label> labels);
std::vector<Label> read_labels_binary(const fs::path& path);

// Headerless comma-separated rows; labels one integer per line.
void write_matrix_csv(const fs::path& path, const MatrixF& m);
MatrixF read_matrix_csv(const fs::path& path);
void write_labels_csv(const fs::path& path, std::span<const Label> labels);
std::vector<Label> read_labels_csv(const fs::path& path);

// JSON manifest naming the three files of one split, relative to the
// manifest's directory.
struct Manifest {
  std::string features;
  std::string logits;
  std::string labels;
  std::optional<DataFormat> format;
  std::optional<std::vector<std::size_t>> class_counts;
};

Manifest read_manifest(const fs::path& path);
void write_manifest(const fs::path& path, const Manifest& manifest);

// Loads and validates a split. The explicit overload forces the payload
// format; the other takes it from the manifest's "format" key (binary when
// absent). A manifest class_counts entry must agree with the labels.
LabeledEmbeddingSet load_set(const fs::path& manifest_path);
LabeledEmbeddingSet load_set(const fs::path& manifest_path, DataFormat format);

// Writes <stem>.features/.logits/.labels plus <stem>.json into `dir` and
// returns the manifest path.
fs::path save_set(const LabeledEmbeddingSet& set, const fs::path& dir, const std::string& stem,
                  DataFormat format = DataFormat::binary);

}  // namespace tailcal::io
