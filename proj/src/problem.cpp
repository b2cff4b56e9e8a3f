#include <algorithm>
#include <charconv>

#include "mcd/error.hpp"
#include "mcd/tensor_store.hpp"

namespace mcd {
namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& m, const char* what) {
  if (!m.allFinite()) throw Error(ErrorCode::InvalidValue, std::string(what) + " contains NaN or Inf");
}

std::vector<std::string> numbered(Eigen::Index n) {
  std::vector<std::string> ids(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) ids[i] = std::to_string(i);
  return ids;
}

std::optional<Eigen::Index> parse_index(const std::string& s) {
  Eigen::Index v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v < 0) return std::nullopt;
  return v;
}

}  // namespace

FeatureStack::FeatureStack(Eigen::MatrixXd data, std::optional<SpatialLayout> layout,
                           std::vector<std::string> sample_ids)
    : data_(std::move(data)), layout_(layout), sample_ids_(std::move(sample_ids)) {
  if (data_.rows() < 1 || data_.cols() < 1)
    throw Error(ErrorCode::InvalidValue, "feature stack needs M >= 1 and F >= 1");
  require_finite(data_, "features");
  const Eigen::Index samples = layout_ ? layout_->samples : data_.rows();
  if (layout_ && layout_->samples * layout_->height * layout_->width != data_.rows())
    throw Error(ErrorCode::DimensionMismatch, "spatial layout N*H*W does not match row count");
  if (sample_ids_.empty()) sample_ids_ = numbered(samples);
  if (static_cast<Eigen::Index>(sample_ids_.size()) != samples)
    throw Error(ErrorCode::DimensionMismatch, "sample_ids length does not match sample count");
}

Eigen::Index FeatureStack::sample_index(const std::string& id) const {
  const auto it = std::find(sample_ids_.begin(), sample_ids_.end(), id);
  if (it != sample_ids_.end()) return it - sample_ids_.begin();
  if (const auto pos = parse_index(id); pos && *pos < sample_count()) return *pos;
  throw Error(ErrorCode::InvalidValue, "unknown sample '" + id + "'");
}

Eigen::Block<const Eigen::MatrixXd> FeatureStack::sample_rows(Eigen::Index n) const {
  const Eigen::Index per = layout_ ? layout_->locations() : 1;
  return data_.middleRows(n * per, per);
}

FeatureStack FeatureStack::select_rows(std::span<const Eigen::Index> rows) const {
  Eigen::MatrixXd sub(static_cast<Eigen::Index>(rows.size()), data_.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = data_.row(rows[i]);
  return FeatureStack(std::move(sub), std::nullopt);
}

ClassifierHead::ClassifierHead(Eigen::MatrixXd w, Eigen::VectorXd b, std::vector<std::string> names)
    : weights(std::move(w)), biases(std::move(b)), class_names(std::move(names)) {
  if (weights.rows() < 1 || weights.cols() < 1)
    throw Error(ErrorCode::InvalidValue, "classifier head needs K >= 1 and F >= 1");
  if (biases.size() != weights.rows())
    throw Error(ErrorCode::DimensionMismatch, "bias length does not match weight rows");
  require_finite(weights, "weights");
  require_finite(biases, "bias");
  for (Eigen::Index k = 0; k < weights.rows(); ++k)
    if (weights.row(k).squaredNorm() == 0.0)
      throw Error(ErrorCode::ZeroWeight, "weight vector of class " + std::to_string(k) + " is zero");
  if (class_names.empty()) class_names = numbered(weights.rows());
  if (static_cast<Eigen::Index>(class_names.size()) != weights.rows())
    throw Error(ErrorCode::DimensionMismatch, "class_names length does not match weight rows");
}

Eigen::Index ClassifierHead::class_index(const std::string& name) const {
  const auto it = std::find(class_names.begin(), class_names.end(), name);
  if (it != class_names.end()) return it - class_names.begin();
  if (const auto pos = parse_index(name); pos && *pos < classes()) return *pos;
  throw Error(ErrorCode::InvalidValue, "unknown class '" + name + "'");
}

FeatureStack stack_from_archive(const Archive& archive) {
  const NpyArray* features = archive.find("features");
  if (!features && archive.size() == 1) features = &archive.entries().front().second;
  if (!features) throw Error(ErrorCode::InvalidValue, "archive has no 'features' array");
  if (!features->is_float())
    throw Error(ErrorCode::UnsupportedDtype, "'features' must be float32 or float64, got '" + features->descr + "'");

  const auto& s = features->shape;
  std::optional<SpatialLayout> layout;
  Eigen::Index rows = 0, cols = 0;
  if (s.size() == 4) {
    layout = SpatialLayout{s[0], s[1], s[2]};
    rows = s[0] * s[1] * s[2];
    cols = s[3];
  } else if (s.size() == 2) {
    rows = s[0];
    cols = s[1];
  } else {
    throw Error(ErrorCode::DimensionMismatch, "'features' must have shape (N,H,W,F) or (M,F)");
  }
  const auto values = features->to_doubles();
  Eigen::MatrixXd data = Eigen::Map<const RowMajor>(values.data(), rows, cols);

  std::vector<std::string> ids;
  if (const auto* a = archive.find("sample_ids")) ids = a->to_strings();
  return FeatureStack(std::move(data), layout, std::move(ids));
}

ClassifierHead head_from_archive(const Archive& archive) {
  const auto& w = archive.at("weights");
  const auto& b = archive.at("bias");
  if (!w.is_float() || !b.is_float()) throw Error(ErrorCode::UnsupportedDtype, "head arrays must be float");
  if (w.shape.size() != 2) throw Error(ErrorCode::DimensionMismatch, "'weights' must have shape (K,F)");
  if (b.shape.size() != 1 || b.shape[0] != w.shape[0])
    throw Error(ErrorCode::DimensionMismatch, "'bias' must have shape (K)");
  const auto wv = w.to_doubles();
  const auto bv = b.to_doubles();
  Eigen::MatrixXd weights = Eigen::Map<const RowMajor>(wv.data(), w.shape[0], w.shape[1]);
  Eigen::VectorXd biases = Eigen::Map<const Eigen::VectorXd>(bv.data(), b.shape[0]);
  std::vector<std::string> names;
  if (const auto* a = archive.find("class_names")) names = a->to_strings();
  return ClassifierHead(std::move(weights), std::move(biases), std::move(names));
}

Problem load_problem(const Archive& features, const Archive& head) {
  Problem p{stack_from_archive(features), head_from_archive(head)};
  if (p.stack.feature_dim() != p.head.feature_dim())
    throw Error(ErrorCode::DimensionMismatch,
                "feature dimension " + std::to_string(p.stack.feature_dim()) + " does not match head dimension " +
                    std::to_string(p.head.feature_dim()));
  return p;
}

Archive problem_to_archive(const FeatureStack& stack, const ClassifierHead& head) {
  Archive a;
  const RowMajor data = stack.data();
  std::vector<std::int64_t> shape;
  if (const auto& l = stack.layout())
    shape = {l->samples, l->height, l->width, stack.feature_dim()};
  else
    shape = {stack.size(), stack.feature_dim()};
  a.set("features", NpyArray::from_doubles(shape, std::span(data.data(), data.size())));
  const RowMajor w = head.weights;
  a.set("weights", NpyArray::from_doubles({head.classes(), head.feature_dim()}, std::span(w.data(), w.size())));
  a.set("bias", NpyArray::from_doubles({head.classes()}, std::span(head.biases.data(), head.biases.size())));
  a.set("sample_ids", NpyArray::from_strings(stack.sample_ids()));
  a.set("class_names", NpyArray::from_strings(head.class_names));
  return a;
}

}  // namespace mcd
