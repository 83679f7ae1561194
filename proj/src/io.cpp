#include "tailcal/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/core.h>
#include <json.hpp>

#include "tailcal/error.hpp"

namespace tailcal::io {

namespace {

using json = nlohmann::json;

constexpr std::array<char, 4> kMatrixMagic{'C', 'A', 'L', 'B'};
constexpr std::array<char, 4> kLabelsMagic{'C', 'A', 'L', 'L'};

template <typename U>
void put_le(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

template <typename U>
U get_le(const std::string& in, std::size_t& pos) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    value |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  pos += sizeof(U);
  return value;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError(fmt::format("cannot open {}", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return std::move(buffer).str();
}

void spit(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError(fmt::format("cannot write {}", path.string()));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError(fmt::format("short write to {}", path.string()));
}

void check_header(const std::string& bytes, const std::array<char, 4>& magic, std::size_t header_size,
                  const fs::path& path) {
  if (bytes.size() < header_size || std::memcmp(bytes.data(), magic.data(), 4) != 0) {
    throw ValidationError(fmt::format("{}: missing '{}' header", path.string(),
                                      std::string(magic.begin(), magic.end())));
  }
  std::size_t pos = 4;
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kFormatVersion) {
    throw ValidationError(fmt::format("{}: unsupported format version {}", path.string(), version));
  }
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::istringstream in(slurp(path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(std::move(line));
  }
  return lines;
}

template <typename T>
T parse_number(std::string_view token, const fs::path& path, std::size_t row) {
  while (!token.empty() && (token.front() == ' ' || token.front() == '\t')) token.remove_prefix(1);
  while (!token.empty() && (token.back() == ' ' || token.back() == '\t')) token.remove_suffix(1);
  T value{};
  if constexpr (std::is_floating_point_v<T>) {
    // strtof parses nan/inf so the set validator can report them by row.
    std::string owned(token);
    char* end = nullptr;
    value = std::strtof(owned.c_str(), &end);
    if (owned.empty() || end != owned.c_str() + owned.size()) {
      throw ValidationError(fmt::format("{}: row {} has malformed value '{}'", path.string(), row, owned));
    }
  } else {
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc{} || ptr != token.data() + token.size()) {
      throw ValidationError(
          fmt::format("{}: row {} has malformed value '{}'", path.string(), row, std::string(token)));
    }
  }
  return value;
}

}  // namespace

DataFormat parse_format(const std::string& name) {
  if (name == "binary") return DataFormat::binary;
  if (name == "csv") return DataFormat::csv;
  throw ValidationError(fmt::format("unknown data format '{}' (expected binary or csv)", name));
}

std::string to_string(DataFormat format) {
  return format == DataFormat::binary ? "binary" : "csv";
}

void write_matrix_binary(const fs::path& path, const MatrixF& m) {
  static_assert(std::numeric_limits<float>::is_iec559);
  std::string bytes(kMatrixMagic.begin(), kMatrixMagic.end());
  bytes.reserve(24 + 4 * m.data().size());
  put_le<std::uint32_t>(bytes, kFormatVersion);
  put_le<std::uint64_t>(bytes, m.rows());
  put_le<std::uint64_t>(bytes, m.cols());
  for (float v : m.data()) put_le<std::uint32_t>(bytes, std::bit_cast<std::uint32_t>(v));
  spit(path, bytes);
}

MatrixF read_matrix_binary(const fs::path& path) {
  const std::string bytes = slurp(path);
  check_header(bytes, kMatrixMagic, 24, path);
  std::size_t pos = 8;
  const auto rows = get_le<std::uint64_t>(bytes, pos);
  const auto cols = get_le<std::uint64_t>(bytes, pos);
  if (cols != 0 && rows > std::numeric_limits<std::uint64_t>::max() / 4 / cols) {
    throw ValidationError(fmt::format("{}: header claims {}x{}", path.string(), rows, cols));
  }
  if (bytes.size() != 24 + 4 * rows * cols) {
    throw ValidationError(fmt::format("{}: payload holds {} bytes, expected {} for {}x{}",
                                      path.string(), bytes.size() - 24, 4 * rows * cols, rows, cols));
  }
  std::vector<float> data(rows * cols);
  for (float& v : data) v = std::bit_cast<float>(get_le<std::uint32_t>(bytes, pos));
  return MatrixF(rows, cols, std::move(data));
}

void write_labels_binary(const fs::path& path, std::span<const Label> labels) {
  std::string bytes(kLabelsMagic.begin(), kLabelsMagic.end());
  put_le<std::uint32_t>(bytes, kFormatVersion);
  put_le<std::uint64_t>(bytes, labels.size());
  for (Label l : labels) put_le<std::uint32_t>(bytes, l);
  spit(path, bytes);
}

std::vector<Label> read_labels_binary(const fs::path& path) {
  const std::string bytes = slurp(path);
  check_header(bytes, kLabelsMagic, 16, path);
  std::size_t pos = 8;
  const auto length = get_le<std::uint64_t>(bytes, pos);
  if ((bytes.size() - 16) / 4 != length || (bytes.size() - 16) % 4 != 0) {
    throw ValidationError(fmt::format("{}: payload does not hold {} labels", path.string(), length));
  }
  std::vector<Label> labels(length);
  for (Label& l : labels) l = get_le<std::uint32_t>(bytes, pos);
  return labels;
}

void write_matrix_csv(const fs::path& path, const MatrixF& m) {
  std::string text;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) text.push_back(',');
      text += fmt::format("{}", row[c]);
    }
    text.push_back('\n');
  }
  spit(path, text);
}

MatrixF read_matrix_csv(const fs::path& path) {
  const auto lines = read_lines(path);
  std::vector<float> data;
  std::size_t cols = 0;
  for (std::size_t r = 0; r < lines.size(); ++r) {
    std::size_t count = 0;
    std::string_view rest = lines[r];
    while (true) {
      const auto comma = rest.find(',');
      data.push_back(parse_number<float>(rest.substr(0, comma), path, r));
      ++count;
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (r == 0) {
      cols = count;
    } else if (count != cols) {
      throw ValidationError(
          fmt::format("{}: row {} has {} columns, expected {}", path.string(), r, count, cols));
    }
  }
  return MatrixF(lines.size(), cols, std::move(data));
}

void write_labels_csv(const fs::path& path, std::span<const Label> labels) {
  std::string text;
  for (Label l : labels) text += fmt::format("{}\n", l);
  spit(path, text);
}

std::vector<Label> read_labels_csv(const fs::path& path) {
  const auto lines = read_lines(path);
  std::vector<Label> labels;
  labels.reserve(lines.size());
  for (std::size_t r = 0; r < lines.size(); ++r) labels.push_back(parse_number<Label>(lines[r], path, r));
  return labels;
}

Manifest read_manifest(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(slurp(path));
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("{}: invalid manifest JSON: {}", path.string(), e.what()));
  }
  Manifest m;
  try {
    m.features = doc.at("features").get<std::string>();
    m.logits = doc.at("logits").get<std::string>();
    m.labels = doc.at("labels").get<std::string>();
    if (doc.contains("format")) m.format = parse_format(doc.at("format").get<std::string>());
    if (doc.contains("class_counts")) m.class_counts = doc.at("class_counts").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("{}: malformed manifest: {}", path.string(), e.what()));
  }
  return m;
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  json doc{{"features", manifest.features}, {"logits", manifest.logits}, {"labels", manifest.labels}};
  if (manifest.format) doc["format"] = to_string(*manifest.format);
  if (manifest.class_counts) doc["class_counts"] = *manifest.class_counts;
  spit(path, doc.dump(2) + "\n");
}

LabeledEmbeddingSet load_set(const fs::path& manifest_path) {
  const Manifest m = read_manifest(manifest_path);
  return load_set(manifest_path, m.format.value_or(DataFormat::binary));
}

LabeledEmbeddingSet load_set(const fs::path& manifest_path, DataFormat format) {
  const Manifest m = read_manifest(manifest_path);
  const fs::path base = manifest_path.parent_path();
  const bool binary = format == DataFormat::binary;
  MatrixF features = binary ? read_matrix_binary(base / m.features) : read_matrix_csv(base / m.features);
  MatrixF logits = binary ? read_matrix_binary(base / m.logits) : read_matrix_csv(base / m.logits);
  std::vector<Label> labels = binary ? read_labels_binary(base / m.labels) : read_labels_csv(base / m.labels);

  try {
    LabeledEmbeddingSet set(std::move(features), std::move(logits), std::move(labels));
    if (m.class_counts) {
      const auto counts = set.class_counts();
      if (!std::equal(counts.begin(), counts.end(), m.class_counts->begin(), m.class_counts->end())) {
        throw ValidationError("manifest class_counts disagree with the labels file");
      }
    }
    return set;
  } catch (const ValidationError& e) {
    throw ValidationError(fmt::format("{}: {}", manifest_path.string(), e.what()));
  }
}

fs::path save_set(const LabeledEmbeddingSet& set, const fs::path& dir, const std::string& stem,
                  DataFormat format) {
  const bool binary = format == DataFormat::binary;
  const std::string ext = binary ? ".bin" : ".csv";
  Manifest m;
  m.features = stem + ".features" + ext;
  m.logits = stem + ".logits" + ext;
  m.labels = stem + ".labels" + ext;
  m.format = format;
  m.class_counts = std::vector<std::size_t>(set.class_counts().begin(), set.class_counts().end());

  fs::create_directories(dir);
  if (binary) {
    write_matrix_binary(dir / m.features, set.features());
    write_matrix_binary(dir / m.logits, set.logits());
    write_labels_binary(dir / m.labels, set.labels());
  } else {
    write_matrix_csv(dir / m.features, set.features());
    write_matrix_csv(dir / m.logits, set.logits());
    write_labels_csv(dir / m.labels, set.labels());
  }
  const fs::path manifest_path = dir / (stem + ".json");
  write_manifest(manifest_path, m);
  return manifest_path;
}

}  // namespace tailcal::io
