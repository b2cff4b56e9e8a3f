#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace mcd {

/// One named n-dimensional array as stored on disk: numpy dtype descriptor,
/// shape and the raw row-major payload. Payload bytes are kept verbatim so
/// that writing an array that was read reproduces it exactly.
struct NpyArray {
  std::string descr;
  std::vector<std::int64_t> shape;
  std::vector<std::uint8_t> payload;

  std::int64_t element_count() const;
  std::size_t item_size() const;

  bool is_float() const { return descr == "<f4" || descr == "<f8"; }
  bool is_text() const;

  /// Widen a float32/float64 payload into doubles. Throws UnsupportedDtype otherwise.
  std::vector<double> to_doubles() const;
  std::vector<std::string> to_strings() const;

  static NpyArray from_doubles(std::vector<std::int64_t> shape, std::span<const double> values);
  static NpyArray from_floats(std::vector<std::int64_t> shape, std::span<const float> values);
  static NpyArray from_strings(std::span<const std::string> values);

  friend bool operator==(const NpyArray&, const NpyArray&) = default;
};

/// Parse a single .npy blob. `base_offset` is added to offsets reported in ParseError.
NpyArray parse_npy(std::span<const std::uint8_t> bytes, std::uint64_t base_offset = 0);
std::vector<std::uint8_t> serialize_npy(const NpyArray& array);

/// Named arrays in insertion order. Keys are member names without the ".npy" suffix.
class Archive {
 public:
  void set(const std::string& key, NpyArray array);
  const NpyArray* find(const std::string& key) const;
  const NpyArray& at(const std::string& key) const;
  bool contains(const std::string& key) const { return find(key) != nullptr; }

  const std::vector<std::pair<std::string, NpyArray>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  friend bool operator==(const Archive&, const Archive&) = default;

 private:
  std::vector<std::pair<std::string, NpyArray>> entries_;
};

/// Reads either a bare .npy file (key = file stem) or a zip container of .npy
/// members (stored or deflated, zip64 aware).
Archive read_archive(const std::filesystem::path& path);
Archive read_archive_bytes(std::span<const std::uint8_t> bytes, const std::string& single_key = "array");

/// Writes a zip container with stored (uncompressed) members and a fixed
/// timestamp, so identical archives produce identical files. A path ending in
/// ".npy" with a single array is written as a bare .npy file.
void write_archive(const std::filesystem::path& path, const Archive& archive);
std::vector<std::uint8_t> archive_to_zip_bytes(const Archive& archive);

struct SpatialLayout {
  Eigen::Index samples = 0;
  Eigen::Index height = 0;
  Eigen::Index width = 0;

  Eigen::Index locations() const { return height * width; }
  friend bool operator==(const SpatialLayout&, const SpatialLayout&) = default;
};

/// M feature vectors of dimension F (one per row). With a spatial layout the
/// row of (sample n, y, x) is (n*H + y)*W + x.
class FeatureStack {
 public:
  FeatureStack(Eigen::MatrixXd data, std::optional<SpatialLayout> layout,
               std::vector<std::string> sample_ids = {});

  const Eigen::MatrixXd& data() const { return data_; }
  Eigen::Index size() const { return data_.rows(); }
  Eigen::Index feature_dim() const { return data_.cols(); }
  const std::optional<SpatialLayout>& layout() const { return layout_; }
  const std::vector<std::string>& sample_ids() const { return sample_ids_; }
  Eigen::Index sample_count() const { return static_cast<Eigen::Index>(sample_ids_.size()); }

  /// Index of a sample by id; a purely numeric id that is not a known id is
  /// interpreted as a position. Throws InvalidValue when unknown.
  Eigen::Index sample_index(const std::string& id) const;

  /// Rows belonging to sample n (H*W rows with a layout, else one row).
  Eigen::Block<const Eigen::MatrixXd> sample_rows(Eigen::Index n) const;

  /// Subset of rows, layout dropped.
  FeatureStack select_rows(std::span<const Eigen::Index> rows) const;

 private:
  Eigen::MatrixXd data_;
  std::optional<SpatialLayout> layout_;
  std::vector<std::string> sample_ids_;
};

struct ClassifierHead {
  Eigen::MatrixXd weights;  // K x F
  Eigen::VectorXd biases;   // K
  std::vector<std::string> class_names;

  ClassifierHead(Eigen::MatrixXd weights, Eigen::VectorXd biases,
                 std::vector<std::string> class_names = {});

  Eigen::Index classes() const { return weights.rows(); }
  Eigen::Index feature_dim() const { return weights.cols(); }
  Eigen::VectorXd weight(Eigen::Index k) const { return weights.row(k).transpose(); }
  /// Resolve a class by name or position. Throws InvalidValue when unknown.
  Eigen::Index class_index(const std::string& name) const;
};

struct Problem {
  FeatureStack stack;
  ClassifierHead head;
};

FeatureStack stack_from_archive(const Archive& archive);
ClassifierHead head_from_archive(const Archive& archive);

/// Build the stack/head pair from canonical keys "features", "weights",
/// "bias" and optional "sample_ids" / "class_names".
Problem load_problem(const Archive& features, const Archive& head);

Archive problem_to_archive(const FeatureStack& stack, const ClassifierHead& head);

}  // namespace mcd
