#ifndef LESITA_DATASET_IO_HPP
#define LESITA_DATASET_IO_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lesita/common.hpp"
#include "lesita/training.hpp"

namespace lesita {

// On-disk dataset: a directory holding manifest.json plus one .bin file per
// array.  Array files are little-endian: u64 rows, u64 cols, then rows*cols
// f64 values in row-major order.

inline void write_array(const std::string& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("write_array: cannot open " + path + " for writing");
  const std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
  const std::uint64_t cols = static_cast<std::uint64_t>(m.cols());
  out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
  out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
  std::vector<double> row(static_cast<std::size_t>(m.cols()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(double)));
  }
  if (!out) throw DataError("write_array: write failed for " + path);
}

inline Matrix read_array(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("read_array: cannot open " + path);
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
  in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
  if (!in) throw DataError("read_array: truncated header in " + path + " at byte offset 0");
  if (rows > (1ull << 32) || cols > (1ull << 32))
    throw DataError("read_array: implausible shape in " + path);
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  std::vector<double> row(static_cast<std::size_t>(cols));
  for (std::uint64_t r = 0; r < rows; ++r) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(row.size() * sizeof(double)))
      throw DataError("read_array: truncated data in " + path + " at byte offset " +
                      std::to_string(16 + r * cols * sizeof(double)));
    for (std::uint64_t c = 0; c < cols; ++c)
      m(static_cast<Index>(r), static_cast<Index>(c)) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

namespace detail {

inline std::filesystem::path manifest_path(const std::string& dir) {
  return std::filesystem::path(dir) / "manifest.json";
}

inline void write_manifest(const std::string& dir, const nlohmann::json& manifest) {
  std::ofstream out(manifest_path(dir));
  if (!out) throw DataError("dataset: cannot write manifest in " + dir);
  out << manifest.dump(2) << "\n";
  if (!out) throw DataError("dataset: manifest write failed in " + dir);
}

inline nlohmann::json array_entry(const std::string& file, const Matrix& m) {
  return {{"file", file}, {"rows", m.rows()}, {"cols", m.cols()}};
}

inline Matrix read_manifest_array(const std::string& dir, const nlohmann::json& manifest,
                                  const std::string& name) {
  const nlohmann::json& arrays = manifest.at("arrays");
  if (!arrays.contains(name))
    throw DataError("dataset: manifest in " + dir + " has no array '" + name + "'");
  const nlohmann::json& entry = arrays.at(name);
  const std::string file = entry.at("file").get<std::string>();
  Matrix m = read_array((std::filesystem::path(dir) / file).string());
  if (m.rows() != entry.at("rows").get<Index>() || m.cols() != entry.at("cols").get<Index>())
    throw DataError("dataset: array '" + name + "' in " + dir +
                    " does not match the shape declared in the manifest");
  return m;
}

}  // namespace detail

inline nlohmann::json load_manifest(const std::string& dir) {
  const auto path = detail::manifest_path(dir);
  std::ifstream in(path);
  if (!in) throw DataError("dataset: cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("dataset: invalid manifest " + path.string() + " (" + e.what() + ")");
  }
}

// Code dataset: arrays Y (m x N), Alpha (k x N), optional W (k x N), plus any
// named extra arrays (e.g. the dictionary).
inline void save_code_dataset(const std::string& dir, const CodeDataset& data,
                              const nlohmann::json& metadata = nlohmann::json::object(),
                              const std::map<std::string, Matrix>& extra = {}) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = {{"format", "lesita-dataset"},
                             {"version", 1},
                             {"kind", "synthetic_codes"},
                             {"arrays", nlohmann::json::object()},
                             {"metadata", metadata}};
  const auto emit = [&](const std::string& name, const Matrix& m) {
    const std::string file = name + ".bin";
    write_array((std::filesystem::path(dir) / file).string(), m);
    manifest["arrays"][name] = detail::array_entry(file, m);
  };
  emit("Y", data.Y);
  emit("Alpha", data.Alpha);
  if (data.W.size() > 0) emit("W", data.W);
  for (const auto& [name, m] : extra) {
    if (name == "Y" || name == "Alpha" || name == "W")
      throw InvalidParameterError("save_code_dataset: extra array shadows '" + name + "'");
    emit(name, m);
  }
  detail::write_manifest(dir, manifest);
}

inline CodeDataset load_code_dataset(const std::string& dir) {
  const nlohmann::json manifest = load_manifest(dir);
  if (manifest.value("kind", "") != "synthetic_codes")
    throw DataError("dataset: " + dir + " is not a code dataset");
  CodeDataset data;
  data.Y = detail::read_manifest_array(dir, manifest, "Y");
  data.Alpha = detail::read_manifest_array(dir, manifest, "Alpha");
  if (manifest.at("arrays").contains("W")) data.W = detail::read_manifest_array(dir, manifest, "W");
  if (data.Alpha.cols() != data.Y.cols() || (data.W.size() > 0 && data.W.cols() != data.Y.cols()))
    throw DataError("dataset: " + dir + " arrays disagree on the sample count");
  return data;
}

// Image-pair dataset: aligned arrays x_<i> / z_<i>, i = 0..count-1.
inline void save_image_pairs(const std::string& dir, const std::vector<Matrix>& xs,
                             const std::vector<Matrix>& zs,
                             const nlohmann::json& metadata = nlohmann::json::object()) {
  if (xs.size() != zs.size())
    throw InvalidParameterError("save_image_pairs: need equally many target and SI images");
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = {{"format", "lesita-dataset"},
                             {"version", 1},
                             {"kind", "image_pairs"},
                             {"pair_count", xs.size()},
                             {"arrays", nlohmann::json::object()},
                             {"metadata", metadata}};
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].rows() != zs[i].rows() || xs[i].cols() != zs[i].cols())
      throw InvalidParameterError("save_image_pairs: pair " + std::to_string(i) +
                                  " images are not aligned");
    const std::string xf = "x_" + std::to_string(i) + ".bin";
    const std::string zf = "z_" + std::to_string(i) + ".bin";
    write_array((std::filesystem::path(dir) / xf).string(), xs[i]);
    write_array((std::filesystem::path(dir) / zf).string(), zs[i]);
    manifest["arrays"]["x_" + std::to_string(i)] = detail::array_entry(xf, xs[i]);
    manifest["arrays"]["z_" + std::to_string(i)] = detail::array_entry(zf, zs[i]);
  }
  detail::write_manifest(dir, manifest);
}

struct ImagePairSet {
  std::vector<Matrix> x;
  std::vector<Matrix> z;
  std::size_t count() const { return x.size(); }
};

inline ImagePairSet load_image_pairs(const std::string& dir) {
  const nlohmann::json manifest = load_manifest(dir);
  if (manifest.value("kind", "") != "image_pairs")
    throw DataError("dataset: " + dir + " is not an image-pair dataset");
  const std::size_t count = manifest.at("pair_count").get<std::size_t>();
  ImagePairSet set;
  set.x.reserve(count);
  set.z.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    set.x.push_back(detail::read_manifest_array(dir, manifest, "x_" + std::to_string(i)));
    set.z.push_back(detail::read_manifest_array(dir, manifest, "z_" + std::to_string(i)));
    if (set.x.back().rows() != set.z.back().rows() || set.x.back().cols() != set.z.back().cols())
      throw DataError("dataset: " + dir + " pair " + std::to_string(i) + " is not aligned");
  }
  return set;
}

}  // namespace lesita

#endif  // LESITA_DATASET_IO_HPP
