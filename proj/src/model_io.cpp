#include "mcd/model_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "mcd/error.hpp"

namespace mcd {

namespace {

ParseError malformed(const std::string& what) { return ParseError(what, 0); }

template <typename T>
T field(const Json& doc, const char* key) {
  if (!doc.contains(key)) throw malformed(std::string("missing key '") + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw malformed(std::string("key '") + key + "': " + e.what());
  }
}

}  // namespace

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const Json& doc) {
  if (!doc.is_array()) throw malformed("matrix must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(doc.size());
  const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(doc.front().size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = doc[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) throw malformed("ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!row[static_cast<std::size_t>(c)].is_number()) throw malformed("matrix entries must be numbers");
      m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
  }
  return m;
}

Json model_to_json(const ConceptModel& model, const Json& provenance) {
  Json doc;
  doc["F"] = model.feature_dim();
  Json concepts = Json::array();
  for (const auto& c : model.concepts()) {
    Json entry;
    entry["label"] = c.label;
    entry["dim"] = c.dim();
    entry["source_cluster"] = c.source_cluster;
    entry["basis"] = matrix_to_json(c.vectors);
    concepts.push_back(std::move(entry));
  }
  doc["concepts"] = std::move(concepts);
  doc["complement"] = {{"dim", model.complement().dim()}, {"basis", matrix_to_json(model.complement().vectors)}};
  doc["provenance"] = provenance;
  return doc;
}

ConceptModel model_from_json(const Json& doc) {
  const auto f = field<Eigen::Index>(doc, "F");
  if (!doc.contains("concepts") || !doc["concepts"].is_array()) throw malformed("missing concept list");
  const auto load = [f](const Json& entry) {
    Eigen::MatrixXd basis = matrix_from_json(entry.at("basis"));
    const auto dim = field<Eigen::Index>(entry, "dim");
    if (basis.rows() == 0 && dim == 0) basis.resize(f, 0);
    if (basis.rows() != f || basis.cols() != dim)
      throw Error(ErrorCode::DimensionMismatch, "basis shape does not match F and dim");
    return basis;
  };
  std::vector<ConceptBasis> concepts;
  for (const auto& entry : doc["concepts"]) {
    ConceptBasis b;
    b.vectors = load(entry);
    b.label = entry.value("label", "");
    b.source_cluster = entry.value("source_cluster", -1);
    concepts.push_back(std::move(b));
  }
  if (!doc.contains("complement")) throw malformed("missing complement");
  ConceptBasis complement{load(doc["complement"]), "complement", -1};
  return ConceptModel(std::move(concepts), std::move(complement), f);
}

Json assignment_to_json(const ClusterAssignment& a) {
  Json doc;
  doc["n_clusters"] = a.n_clusters;
  doc["subsample_indices"] = a.subsample_indices;
  doc["labels"] = a.labels;
  doc["warnings"] = a.warnings;
  return doc;
}

ClusterAssignment assignment_from_json(const Json& doc) {
  ClusterAssignment a;
  a.n_clusters = field<int>(doc, "n_clusters");
  a.subsample_indices = field<std::vector<Eigen::Index>>(doc, "subsample_indices");
  a.labels = field<std::vector<int>>(doc, "labels");
  if (doc.contains("warnings")) a.warnings = field<std::vector<std::string>>(doc, "warnings");
  if (a.labels.size() != a.subsample_indices.size())
    throw Error(ErrorCode::DimensionMismatch, "labels and subsample_indices differ in length");
  for (const int l : a.labels)
    if (l != kOutlier && (l < 0 || l >= a.n_clusters)) throw Error(ErrorCode::InvalidValue, "label out of range");
  return a;
}

Json synth_spec_to_json(const SynthSpec& s) {
  Json doc;
  doc["feature_dim"] = s.feature_dim;
  doc["dims"] = s.dims;
  doc["points_per_subspace"] = s.points_per_subspace;
  doc["noise_sigma"] = s.noise_sigma;
  doc["n_outliers"] = s.n_outliers;
  if (s.layout) doc["layout"] = {{"samples", s.layout->samples}, {"height", s.layout->height}, {"width", s.layout->width}};
  doc["seed"] = s.seed;
  doc["head"] = s.head_mode == HeadMode::InSpan ? "in_span" : "random";
  doc["n_classes"] = s.n_classes;
  return doc;
}

SynthSpec synth_spec_from_json(const Json& doc) {
  static const std::set<std::string> known{"feature_dim", "dims",  "points_per_subspace", "noise_sigma", "n_outliers",
                                           "layout",      "seed",  "head",                "n_classes"};
  if (!doc.is_object()) throw Error(ErrorCode::ConfigError, "synth spec must be a JSON object");
  for (const auto& [key, value] : doc.items())
    if (!known.count(key)) throw Error(ErrorCode::ConfigError, "unknown synth spec key '" + key + "'");
  SynthSpec s;
  try {
    s.feature_dim = doc.value("feature_dim", s.feature_dim);
    s.dims = doc.value("dims", s.dims);
    s.points_per_subspace = doc.value("points_per_subspace", s.points_per_subspace);
    s.noise_sigma = doc.value("noise_sigma", s.noise_sigma);
    s.n_outliers = doc.value("n_outliers", s.n_outliers);
    s.seed = doc.value("seed", s.seed);
    s.n_classes = doc.value("n_classes", s.n_classes);
    if (doc.contains("layout")) {
      const auto& g = doc["layout"];
      s.layout = SpatialLayout{g.at("samples").get<Eigen::Index>(), g.at("height").get<Eigen::Index>(),
                               g.at("width").get<Eigen::Index>()};
    }
    const std::string head = doc.value("head", std::string("in_span"));
    if (head == "in_span") s.head_mode = HeadMode::InSpan;
    else if (head == "random") s.head_mode = HeadMode::Random;
    else throw Error(ErrorCode::ConfigError, "unknown head mode '" + head + "'");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("synth spec: ") + e.what());
  }
  s.validate();
  return s;
}

Json synth_truth_to_json(const SynthProblem& p, const SynthSpec& spec) {
  Json doc;
  doc["spec"] = synth_spec_to_json(spec);
  doc["labels"] = p.labels;
  Json bases = Json::array();
  for (const auto& b : p.bases) bases.push_back(matrix_to_json(b));
  doc["bases"] = std::move(bases);
  return doc;
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return Json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
}

void write_json(const std::filesystem::path& path, const Json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace mcd
