// mcd: concept discovery and completeness-based explanations on exported
// feature maps. See README.md for the subcommands.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include "mcd/concept_bases.hpp"
#include "mcd/decomposer.hpp"
#include "mcd/discovery.hpp"
#include "mcd/error.hpp"
#include "mcd/eval.hpp"
#include "mcd/geometry.hpp"
#include "mcd/model_io.hpp"
#include "mcd/render.hpp"
#include "mcd/synth.hpp"
#include "mcd/tensor_store.hpp"

#ifndef MCD_VERSION
#define MCD_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using Eigen::Index;
using mcd::Json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

// ---------------------------------------------------------------- logging

struct Log {
  bool json = false;

  void info(const std::string& event, const std::string& message, Json extra = Json::object()) const {
    emit("info", event, message, std::move(extra));
  }
  void warn(const std::string& event, const std::string& message) const { emit("warning", event, message, {}); }
  void error(const std::string& event, const std::string& message) const { emit("error", event, message, {}); }

 private:
  void emit(const char* level, const std::string& event, const std::string& message, Json extra) const {
    if (json) {
      Json line = {{"level", level}, {"event", event}, {"message", message}};
      if (extra.is_object())
        for (auto& [k, v] : extra.items()) line[k] = v;
      std::cerr << line.dump() << '\n';
    } else {
      std::cerr << "mcd: " << (std::string(level) == "info" ? "" : std::string(level) + ": ") << message << '\n';
    }
  }
};

// --------------------------------------------------------------- manifest

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw mcd::Error(mcd::ErrorCode::IoError, "cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

/// Provenance written next to every output; the numeric outputs themselves
/// never contain timestamps or host details.
class Run {
 public:
  Run(std::string command, std::vector<std::string> argv, const CLI::App& sub)
      : command_(std::move(command)), argv_(std::move(argv)), started_(utc_now()) {
    for (const CLI::Option* opt : sub.get_options()) {
      const std::string name = opt->get_lnames().empty() ? "" : opt->get_lnames().front();
      if (name.empty() || name == "help" || name == "config") continue;
      if (opt->count() > 0) {
        const auto& r = opt->results();
        if (opt->get_type_size() == 0) config_[name] = true;
        else if (r.size() == 1) config_[name] = r.front();
        else config_[name] = r;
      } else if (!opt->get_default_str().empty()) {
        config_[name] = opt->get_default_str();
      } else if (opt->get_type_size() == 0) {
        config_[name] = false;
      }
    }
  }

  void input(const fs::path& path) {
    if (!path.empty()) inputs_[path.string()] = sha256_file(path);
  }
  void seed(const std::string& name, std::uint64_t value) { seeds_[name] = value; }
  void output(const fs::path& path) { outputs_.push_back(path.filename().string()); }

  void write(const fs::path& dir) const {
    Json m;
    m["tool"] = "mcd";
    m["version"] = MCD_VERSION;
    m["command"] = command_;
    m["argv"] = argv_;
    m["config"] = config_;
    m["seeds"] = seeds_;
    Json inputs = Json::object();
    for (const auto& [path, hash] : inputs_) inputs[path] = {{"sha256", hash}};
    m["inputs"] = inputs;
    m["outputs"] = outputs_;
    m["started_at"] = started_;
    m["finished_at"] = utc_now();
    mcd::write_json(dir / "manifest.json", m);
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  std::string started_;
  Json config_ = Json::object();
  Json seeds_ = Json::object();
  std::map<std::string, std::string> inputs_;
  std::vector<std::string> outputs_;
};

// ------------------------------------------------------------------ helpers

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw mcd::Error(mcd::ErrorCode::IoError, "cannot write " + path.string());
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

Json map_to_json(const Eigen::MatrixXd& m) { return mcd::matrix_to_json(m); }

std::uint64_t default_seed() {
  if (const char* env = std::getenv("MCD_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw mcd::Error(mcd::ErrorCode::ConfigError, "MCD_SEED must be a non-negative integer");
    }
  }
  return 0;
}

struct Inputs {
  std::string features;
  std::string head;
};

mcd::Problem load_inputs(const Inputs& in, Run& run) {
  const std::string head = in.head.empty() ? in.features : in.head;
  run.input(in.features);
  if (head != in.features) run.input(head);
  const mcd::Archive features = mcd::read_archive(in.features);
  if (head == in.features) return mcd::load_problem(features, features);
  return mcd::load_problem(features, mcd::read_archive(head));
}

mcd::FeatureStack load_stack(const std::string& path, Run& run) {
  run.input(path);
  return mcd::stack_from_archive(mcd::read_archive(path));
}

mcd::ConceptModel load_model(const std::string& path, Run& run) {
  run.input(path);
  return mcd::model_from_json(mcd::read_json(path));
}

// Options shared by discover / conciseness.
struct DiscoverOptions {
  std::string method = "ssc";
  double gamma = 10.0;
  double lambda = 0.9;
  double outlier_pct = 0.75;
  std::string n_concepts = "AUTO";
  Index subsample = 8192;
  bool stratified = false;
  std::uint64_t seed = 0;
  double alpha_fo = mcd::kDefaultAlphaFO;
  std::string resolve_overlap = "error";
  std::string class_name = "0";
  bool center = false;
  int max_sweeps = 500;
  double tolerance = 1e-6;

  void add_to(CLI::App* app, bool with_method_and_count) {
    if (with_method_and_count) {
      app->add_option("--method", method, "ssc | ssc-ortho | kmeans | pca")->capture_default_str();
      app->add_option("--n-concepts", n_concepts, "AUTO or a fixed count")->capture_default_str();
      app->add_option("--class", class_name, "class driving the ssc-ortho rotation")->capture_default_str();
    }
    app->add_option("--gamma", gamma, "elastic-net reconstruction weight")->capture_default_str();
    app->add_option("--lambda", lambda, "elastic-net l1 share")->capture_default_str();
    app->add_option("--outlier-pct", outlier_pct, "fraction of points flagged as outliers")->capture_default_str();
    app->add_option("--subsample", subsample, "feature vectors used for clustering")->capture_default_str();
    app->add_flag("--stratified", stratified, "equal subsample quota per sample");
    app->add_option("--seed", seed, "random seed (default: MCD_SEED or 0)")->capture_default_str();
    app->add_option("--alpha-fo", alpha_fo, "intrinsic-dimension threshold")->capture_default_str();
    app->add_option("--resolve-overlap", resolve_overlap, "error | split")->capture_default_str();
    app->add_flag("--center", center, "mean-center before PCA (pca method)");
    app->add_option("--max-sweeps", max_sweeps, "coordinate-descent sweep cap")->capture_default_str();
    app->add_option("--tolerance", tolerance, "coordinate-descent stopping tolerance")->capture_default_str();
  }

  mcd::DiscoveryConfig config(int threads) const {
    mcd::DiscoveryConfig c;
    c.method = mcd::parse_method(method);
    c.cluster.gamma = gamma;
    c.cluster.lambda = lambda;
    c.cluster.outlier_percentile = outlier_pct;
    c.cluster.subsample = subsample;
    c.cluster.stratified = stratified;
    c.cluster.seed = seed;
    c.cluster.threads = threads;
    c.cluster.max_sweeps = max_sweeps;
    c.cluster.tolerance = tolerance;
    if (n_concepts != "AUTO" && n_concepts != "auto") {
      try {
        std::size_t used = 0;
        const int k = std::stoi(n_concepts, &used);
        if (used != n_concepts.size() || k < 1) throw std::invalid_argument("");
        c.cluster.n_clusters = k;
      } catch (const std::exception&) {
        throw mcd::Error(mcd::ErrorCode::ConfigError, "--n-concepts must be AUTO or a positive integer");
      }
    }
    c.alpha_fo = alpha_fo;
    if (resolve_overlap == "error") c.overlap = mcd::OverlapPolicy::Error;
    else if (resolve_overlap == "split") c.overlap = mcd::OverlapPolicy::Split;
    else throw mcd::Error(mcd::ErrorCode::ConfigError, "--resolve-overlap must be error or split");
    c.center = center;
    c.cluster.validate();
    return c;
  }
};

Json provenance(const std::string& method, std::uint64_t seed, const Json& config) {
  return {{"method", method}, {"seed", seed}, {"config", config}};
}

Json eta_per_class(const mcd::ConceptModel& model, const mcd::ClassifierHead& head) {
  Json out = Json::array();
  for (Index k = 0; k < head.classes(); ++k)
    out.push_back(head.weight(k).squaredNorm() > 0 ? mcd::completeness_score(model, head.weight(k)) : 0.0);
  return out;
}

Json model_summary(const mcd::ConceptModel& model) {
  Json dims = Json::array(), labels = Json::array();
  for (const auto& c : model.concepts()) {
    dims.push_back(c.dim());
    labels.push_back(c.label);
  }
  return {{"n_concepts", model.concept_count()}, {"dims", dims}, {"labels", labels},
          {"complement_dim", model.complement().dim()}, {"condition_number", model.condition_number()}};
}

// ---------------------------------------------------------------- commands

struct Common {
  int threads = 0;
  Log log;
};

int cmd_synth(const std::string& spec_path, const std::string& out, const std::string& truth_path, Run& run,
              const Common& common) {
  run.input(spec_path);
  const mcd::SynthSpec spec = mcd::synth_spec_from_json(mcd::read_json(spec_path));
  run.seed("seed", spec.seed);
  const mcd::SynthProblem p = mcd::generate(spec);
  const fs::path out_path(out);
  const fs::path dir = out_path.has_parent_path() ? out_path.parent_path() : fs::path(".");
  fs::create_directories(dir);
  mcd::write_archive(out_path, mcd::problem_to_archive(p.stack, p.head));
  const fs::path truth =
      truth_path.empty() ? dir / (out_path.stem().string() + ".truth.json") : fs::path(truth_path);
  mcd::write_json(truth, mcd::synth_truth_to_json(p, spec));
  run.output(out_path);
  run.output(truth);
  run.write(dir);
  common.log.info("synth", "wrote " + out_path.string() + " (" + std::to_string(p.stack.size()) + " vectors)",
                  {{"rows", p.stack.size()}, {"F", p.stack.feature_dim()}});
  return 0;
}

int cmd_discover(const Inputs& in, const DiscoverOptions& opt, const std::string& out, Run& run,
                 const Common& common) {
  const mcd::DiscoveryConfig cfg = [&] {
    auto c = opt.config(common.threads);
    return c;
  }();
  run.seed("seed", opt.seed);
  const mcd::Problem problem = load_inputs(in, run);
  mcd::DiscoveryConfig c = cfg;
  c.class_id = problem.head.class_index(opt.class_name);

  std::optional<int> auto_k;
  mcd::Discovery d = [&] {
    if (c.method == mcd::Method::Ssc || c.method == mcd::Method::SscOrtho) {
      const mcd::SscSession session(problem.stack, c.cluster);
      if (!c.cluster.n_clusters) auto_k = session.auto_clusters();
      return mcd::build_model(problem.stack, &problem.head, session.assign(c.cluster.n_clusters), c);
    }
    return mcd::discover(problem.stack, &problem.head, c);
  }();
  for (const auto& w : d.warnings) common.log.warn("discover", w);

  const fs::path dir(out);
  fs::create_directories(dir);
  Json config = {{"gamma", opt.gamma},         {"lambda", opt.lambda},       {"outlier_pct", opt.outlier_pct},
                 {"n_concepts", opt.n_concepts}, {"subsample", opt.subsample}, {"stratified", opt.stratified},
                 {"alpha_fo", opt.alpha_fo},    {"resolve_overlap", opt.resolve_overlap},
                 {"class", c.class_id},          {"center", opt.center}};
  mcd::write_json(dir / "concepts.json", mcd::model_to_json(d.model, provenance(opt.method, opt.seed, config)));
  mcd::write_json(dir / "clusters.json", mcd::assignment_to_json(d.assignment));
  Json summary = model_summary(d.model);
  summary["method"] = opt.method;
  if (auto_k) summary["auto_clusters"] = *auto_k;
  summary["eta"] = eta_per_class(d.model, problem.head);
  summary["eta_per_step"] = d.eta_per_step;
  summary["warnings"] = d.warnings;
  mcd::write_json(dir / "summary.json", summary);
  for (const char* f : {"concepts.json", "clusters.json", "summary.json"}) run.output(dir / f);
  run.write(dir);
  common.log.info("discover", std::to_string(d.model.concept_count()) + " concepts", summary);
  return 0;
}

int cmd_bases(const std::string& features, const std::string& clusters, const DiscoverOptions& opt,
              const std::string& out, Run& run, const Common& common) {
  const mcd::FeatureStack stack = load_stack(features, run);
  run.input(clusters);
  mcd::DiscoveryConfig c = opt.config(common.threads);
  c.method = mcd::Method::Ssc;
  const mcd::Discovery d = mcd::build_model(stack, nullptr, mcd::assignment_from_json(mcd::read_json(clusters)), c);
  for (const auto& w : d.warnings) common.log.warn("bases", w);
  const fs::path dir(out);
  fs::create_directories(dir);
  const Json config = {{"alpha_fo", opt.alpha_fo}, {"resolve_overlap", opt.resolve_overlap}};
  mcd::write_json(dir / "concepts.json", mcd::model_to_json(d.model, provenance("bases", 0, config)));
  run.output(dir / "concepts.json");
  run.write(dir);
  common.log.info("bases", std::to_string(d.model.concept_count()) + " concepts", model_summary(d.model));
  return 0;
}

Json explanation_to_json(const mcd::Explanation& e, const mcd::GlobalRelevance& g, const mcd::ConceptModel& model,
                         const mcd::FeatureStack& stack, const mcd::ClassifierHead& head) {
  Json labels = Json::array();
  for (const auto& c : model.concepts()) labels.push_back(c.label);
  labels.push_back("complement");
  Json doc;
  doc["sample"] = e.sample;
  doc["sample_id"] = stack.sample_ids()[static_cast<std::size_t>(e.sample)];
  doc["class"] = e.class_id;
  doc["class_name"] = head.class_names[static_cast<std::size_t>(e.class_id)];
  doc["logit"] = e.logit;
  doc["bias"] = e.bias;
  doc["labels"] = labels;
  doc["local_relevance"] = std::vector<double>(e.local_relevances.begin(), e.local_relevances.end());
  doc["relevance_sum"] = e.local_relevances.sum();
  doc["eta"] = g.eta;
  doc["weight_norms"] = std::vector<double>(g.norms.begin(), g.norms.end());
  doc["weight_bounds"] = {{"lower", g.bounds.lower}, {"upper", g.bounds.upper},
                          {"premises_hold", g.bound_premises_hold}};
  doc["height"] = e.activation_maps.front().rows();
  doc["width"] = e.activation_maps.front().cols();
  Json act = Json::array(), rel = Json::array();
  for (const auto& m : e.activation_maps) act.push_back(map_to_json(m));
  for (const auto& m : e.relevance_maps) rel.push_back(map_to_json(m));
  doc["activation_maps"] = act;
  doc["relevance_maps"] = rel;
  doc["class_activation_map"] = map_to_json(e.class_activation_map());
  return doc;
}

// PNGs for an explanation document; `height`/`width` of 0 keep a 16 px cell.
std::vector<fs::path> render_explanation(const Json& doc, const fs::path& dir, Index height, Index width) {
  std::vector<Eigen::MatrixXd> act, rel;
  for (const auto& m : doc.at("activation_maps")) act.push_back(mcd::matrix_from_json(m));
  for (const auto& m : doc.at("relevance_maps")) rel.push_back(mcd::matrix_from_json(m));
  const Eigen::MatrixXd cam = mcd::matrix_from_json(doc.at("class_activation_map"));
  const auto resize = [&](const Eigen::MatrixXd& m) {
    if (height <= 0 || width <= 0) return mcd::upsample(m, m.rows() * 16, m.cols() * 16);
    return mcd::upsample(m, height, width);
  };
  double limit = 0.0;
  for (const auto& m : rel) limit = std::max(limit, m.cwiseAbs().maxCoeff());
  std::vector<fs::path> written;
  for (std::size_t l = 0; l < act.size(); ++l) {
    const fs::path a = dir / ("activation_" + std::to_string(l) + ".png");
    const fs::path r = dir / ("relevance_" + std::to_string(l) + ".png");
    mcd::write_png(a, mcd::render_activation(resize(act[l]), 1));
    mcd::write_png(r, mcd::render_relevance(resize(rel[l]), 1, limit));
    written.push_back(a);
    written.push_back(r);
  }
  const fs::path c = dir / "class_activation_map.png";
  mcd::write_png(c, mcd::render_relevance(resize(cam), 1));
  written.push_back(c);
  return written;
}

int cmd_explain(const Inputs& in, const std::string& model_path, const std::string& class_name,
                const std::string& sample, const std::string& out, Run& run, const Common& common) {
  const mcd::Problem p = load_inputs(in, run);
  const mcd::ConceptModel model = load_model(model_path, run);
  const mcd::Decomposer dec(model);
  const Index k = p.head.class_index(class_name);
  const Index n = p.stack.sample_index(sample);
  const mcd::Explanation e = dec.relevance(p.head, p.stack, n, k);
  const mcd::GlobalRelevance g = dec.global_relevance(p.head, k);
  const fs::path dir(out);
  fs::create_directories(dir);
  const Json doc = explanation_to_json(e, g, model, p.stack, p.head);
  mcd::write_json(dir / "explanation.json", doc);
  run.output(dir / "explanation.json");
  for (const auto& f : render_explanation(doc, dir, 0, 0)) run.output(f);
  run.write(dir);
  common.log.info("explain", "logit " + num(e.logit) + ", eta " + num(g.eta),
                  {{"logit", e.logit}, {"bias", e.bias}, {"eta", g.eta}});
  return 0;
}

int cmd_prototypes(const Inputs& in, const std::string& model_path, int concept_id, Index k, const std::string& out,
                   Run& run, const Common& common) {
  const mcd::FeatureStack stack = load_stack(in.features, run);
  const mcd::ConceptModel model = load_model(model_path, run);
  const mcd::Decomposer dec(model);
  const Index count = std::min(k, stack.sample_count());
  std::string csv = "concept,label,rank,sample,sample_id,score\n";
  const Index first = concept_id >= 0 ? concept_id : 0;
  const Index last = concept_id >= 0 ? concept_id : model.concept_count() - 1;
  for (Index l = first; l <= last; ++l) {
    const std::string label = l < model.concept_count() ? model.concepts()[static_cast<std::size_t>(l)].label : "complement";
    const auto top = dec.prototypes(stack, l, count);
    for (std::size_t r = 0; r < top.size(); ++r)
      csv += std::to_string(l) + "," + csv_field(label) + "," + std::to_string(r) + "," + std::to_string(top[r].sample) +
             "," + csv_field(top[r].sample_id) + "," + num(top[r].score) + "\n";
  }
  const fs::path dir(out);
  fs::create_directories(dir);
  write_text(dir / "prototypes.csv", csv);
  run.output(dir / "prototypes.csv");
  run.write(dir);
  common.log.info("prototypes", "ranked " + std::to_string(count) + " samples per concept");
  return 0;
}

int cmd_geometry(const std::string& model_path, const std::string& out, Run& run, const Common& common) {
  const mcd::ConceptModel model = load_model(model_path, run);
  const auto& c = model.concepts();
  std::string dist = "concept";
  std::string angles = "first,second,angles\n";
  for (const auto& b : c) dist += "," + csv_field(b.label);
  dist += "\n";
  // Upper triangle computed once and mirrored; the diagonal is exactly zero.
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Index>(c.size()), static_cast<Index>(c.size()));
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = i + 1; j < c.size(); ++j)
      d(i, j) = d(j, i) = mcd::grassmann_distance(c[i].vectors, c[j].vectors);
  for (std::size_t i = 0; i < c.size(); ++i) {
    dist += csv_field(c[i].label);
    for (std::size_t j = 0; j < c.size(); ++j) dist += "," + num(d(i, j));
    dist += "\n";
    for (std::size_t j = i + 1; j < c.size(); ++j) {
      const Eigen::VectorXd a = mcd::principal_angles(c[i].vectors, c[j].vectors);
      std::string list;
      for (Index t = 0; t < a.size(); ++t) list += (t ? " " : "") + num(a(t));
      angles += csv_field(c[i].label) + "," + csv_field(c[j].label) + "," + list + "\n";
    }
  }
  const fs::path dir(out);
  fs::create_directories(dir);
  write_text(dir / "distances.csv", dist);
  write_text(dir / "principal_angles.csv", angles);
  run.output(dir / "distances.csv");
  run.output(dir / "principal_angles.csv");
  run.write(dir);
  common.log.info("geometry", "mean pairwise distance " + num(mcd::mean_pairwise_distance(model)));
  return 0;
}

struct FlipOptions {
  std::string class_name = "0";
  std::string order = "relevance";
  std::string impute = "zero";
  int seeds = 20;
  std::uint64_t seed = 0;
  int max_flips = -1;
};

int cmd_flip(const Inputs& in, const std::string& model_path, const FlipOptions& opt, const std::string& out,
             Run& run, const Common& common) {
  const mcd::FlipOrder order = mcd::parse_flip_order(opt.order);
  const mcd::Imputation impute = mcd::parse_imputation(opt.impute);
  if (opt.seeds < 1) throw mcd::Error(mcd::ErrorCode::ConfigError, "--seeds must be >= 1");
  const mcd::Problem p = load_inputs(in, run);
  const mcd::ConceptModel model = load_model(model_path, run);
  const mcd::Decomposer dec(model);
  const Index k = p.head.class_index(opt.class_name);
  run.seed("seed", opt.seed);

  mcd::FlipConfig base;
  base.imputation = impute;
  if (opt.max_flips >= 0) base.max_flips = opt.max_flips;

  std::string csv = "order,seed,sample,step,concept,fraction,logit,top1\n";
  const auto record = [&](const std::vector<mcd::FlipCurve>& curves, const std::string& name, const std::string& seed) {
    double auc = 0.0;
    for (const auto& c : curves) {
      for (std::size_t s = 0; s < c.points.size(); ++s) {
        const auto& pt = c.points[s];
        csv += name + "," + seed + "," + std::to_string(c.sample) + "," + std::to_string(s) + "," +
               std::to_string(pt.concept_id) + "," + num(pt.fraction) + "," + num(pt.logit) + "," +
               (pt.top1 ? "1" : "0") + "\n";
      }
      auc += mcd::flip_auc(c);
    }
    return curves.empty() ? 0.0 : auc / static_cast<double>(curves.size());
  };

  mcd::FlipConfig rel = base;
  rel.order = mcd::FlipOrder::DescRelevance;
  const auto rel_curves = mcd::sdc_curves(dec, p.head, p.stack, k, rel, common.threads);
  const double auc_rel = record(rel_curves, "relevance", "");

  Json summary;
  summary["class"] = k;
  summary["order"] = opt.order;
  summary["impute"] = opt.impute;
  summary["samples"] = p.stack.sample_count();
  summary["auc_relevance"] = auc_rel;

  std::vector<mcd::FlipCurve> first_random;
  if (order == mcd::FlipOrder::Random) {
    std::vector<double> aucs;
    int wins = 0, losses = 0;
    for (int s = 0; s < opt.seeds; ++s) {
      mcd::FlipConfig rnd = base;
      rnd.order = mcd::FlipOrder::Random;
      rnd.seed = opt.seed + static_cast<std::uint64_t>(s);
      const auto curves = mcd::sdc_curves(dec, p.head, p.stack, k, rnd, common.threads);
      const double auc = record(curves, "random", std::to_string(rnd.seed));
      aucs.push_back(auc);
      if (auc_rel < auc) ++wins;
      else if (auc_rel > auc) ++losses;
      if (s == 0) first_random = curves;
    }
    summary["seeds"] = opt.seeds;
    summary["auc_random"] = aucs;
    summary["relevance_wins"] = wins;
    summary["relevance_losses"] = losses;
    summary["sign_test_p"] = mcd::sign_test_p(wins, losses);
  }

  const fs::path dir(out);
  fs::create_directories(dir);
  write_text(dir / "curves.csv", csv);
  mcd::write_json(dir / "summary.json", summary);
  std::vector<mcd::Series> series;
  for (const auto& c : rel_curves) {
    mcd::Series s{{}, {}, {178, 24, 43}};
    for (const auto& pt : c.points) {
      s.x.push_back(pt.fraction);
      s.y.push_back(pt.logit);
    }
    series.push_back(std::move(s));
  }
  for (const auto& c : first_random) {
    mcd::Series s{{}, {}, {33, 102, 172}};
    for (const auto& pt : c.points) {
      s.x.push_back(pt.fraction);
      s.y.push_back(pt.logit);
    }
    series.push_back(std::move(s));
  }
  mcd::write_png(dir / "flip.png", mcd::render_lines(series));
  for (const char* f : {"curves.csv", "summary.json", "flip.png"}) run.output(dir / f);
  run.write(dir);
  common.log.info("flip", "mean AUC (relevance order) " + num(auc_rel), summary);
  return 0;
}

struct ConcisenessOptions {
  std::string methods = "ssc,ssc-ortho,kmeans,pca";
  std::string classes;
  double eta = 0.5;
  int max_concepts = 30;
};

int cmd_conciseness(const Inputs& in, const DiscoverOptions& dopt, const ConcisenessOptions& opt,
                    const std::string& out, Run& run, const Common& common) {
  if (!(opt.eta > 0.0 && opt.eta <= 1.0)) throw mcd::Error(mcd::ErrorCode::ConfigError, "--eta must lie in (0, 1]");
  if (opt.max_concepts < 1) throw mcd::Error(mcd::ErrorCode::ConfigError, "--max-concepts must be >= 1");
  const mcd::Problem p = load_inputs(in, run);
  run.seed("seed", dopt.seed);
  std::vector<Index> classes;
  if (opt.classes.empty()) {
    for (Index k = 0; k < p.head.classes(); ++k) classes.push_back(k);
  } else {
    for (const auto& name : split_list(opt.classes)) classes.push_back(p.head.class_index(name));
  }
  const auto methods = split_list(opt.methods);
  for (const auto& m : methods) mcd::parse_method(m);

  std::string rows_csv = "method,class,n_concepts,eta,mean_dim,mean_distance\n";
  std::string summary_csv = "method,mean_n_concepts,unreached,mean_dim,mean_distance\n";
  std::shared_ptr<const mcd::SscSession> session;
  const std::string cap = ">" + std::to_string(opt.max_concepts);
  for (const auto& name : methods) {
    mcd::DiscoveryConfig cfg = dopt.config(common.threads);
    cfg.method = mcd::parse_method(name);
    if ((cfg.method == mcd::Method::Ssc || cfg.method == mcd::Method::SscOrtho) && !session)
      session = std::make_shared<const mcd::SscSession>(p.stack, cfg.cluster);
    std::vector<mcd::ConcisenessRow> rows;
    for (const Index k : classes) {
      const auto seq = mcd::model_sequence(p.stack, p.head, k, cfg, session);
      mcd::ConcisenessRow row = mcd::conciseness_for_class(seq, p.head.weight(k), opt.eta, opt.max_concepts);
      row.method = name;
      row.class_id = k;
      rows_csv += name + "," + std::to_string(k) + "," + (row.n_concepts ? std::to_string(*row.n_concepts) : cap) +
                  "," + num(row.eta) + "," + num(row.mean_dim) + "," + num(row.mean_distance) + "\n";
      rows.push_back(std::move(row));
    }
    const mcd::ConcisenessSummary s = mcd::summarize(rows);
    summary_csv += name + "," + num(s.mean_n_concepts) + "," + std::to_string(s.unreached) + "," + num(s.mean_dim) +
                   "," + num(s.mean_distance) + "\n";
    common.log.info("conciseness", name + ": mean n_c " + num(s.mean_n_concepts));
  }
  const fs::path dir(out);
  fs::create_directories(dir);
  write_text(dir / "conciseness.csv", rows_csv);
  write_text(dir / "summary.csv", summary_csv);
  run.output(dir / "conciseness.csv");
  run.output(dir / "summary.csv");
  run.write(dir);
  return 0;
}

int cmd_report(const std::string& explanation, const std::string& out, Index height, Index width, Run& run,
               const Common& common) {
  run.input(explanation);
  const Json doc = mcd::read_json(explanation);
  const fs::path dir(out);
  fs::create_directories(dir);
  for (const auto& f : render_explanation(doc, dir, height, width)) run.output(f);
  run.write(dir);
  common.log.info("report", "rendered " + dir.string());
  return 0;
}

// ---------------------------------------------------------- config merging

/// Appends `--key value` for every key of the JSON config file that is not
/// already given on the command line, so flags override the file.
std::vector<std::string> merge_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i + 1 < args.size(); ++i)
    if (args[i] == "--config") path = args[i + 1];
  for (const auto& a : args)
    if (a.rfind("--config=", 0) == 0) path = a.substr(9);
  if (path.empty()) return args;
  const Json doc = mcd::read_json(path);
  if (!doc.is_object()) throw mcd::Error(mcd::ErrorCode::ConfigError, "config file must hold a JSON object");
  std::set<std::string> given;
  for (const auto& a : args)
    if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));
  for (const auto& [key, value] : doc.items()) {
    if (given.count(key)) continue;
    const std::string flag = "--" + key;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_string()) {
      args.push_back(flag);
      args.push_back(value.get<std::string>());
    } else if (value.is_number()) {
      args.push_back(flag);
      args.push_back(value.dump());
    } else {
      throw mcd::Error(mcd::ErrorCode::ConfigError, "config value for '" + key + "' must be a scalar");
    }
  }
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-dimensional concept discovery on exported feature maps", "mcd"};
  app.set_version_flag("--version", MCD_VERSION);
  app.require_subcommand(1);

  Common common;
  bool log_json = false;
  std::string config_path;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--threads", common.threads, "worker threads (0: all cores)")->capture_default_str();
    sub->add_option("--config", config_path, "JSON file of flag values (flags take precedence)");
    sub->add_flag("--log-json", log_json, "structured JSON log lines on stderr");
  };

  const std::uint64_t seed0 = [] {
    try {
      return default_seed();
    } catch (const mcd::Error& e) {
      std::cerr << "mcd: " << e.what() << '\n';
      std::exit(kExitConfig);
    }
  }();

  Inputs in;
  std::string out, model, truth, spec, clusters, explanation, class_name = "0", sample = "0";
  Index k = 5, height = 0, width = 0;
  int concept_id = -1;
  DiscoverOptions dopt;
  dopt.seed = seed0;
  FlipOptions fopt;
  fopt.seed = seed0;
  ConcisenessOptions copt;

  auto* synth = app.add_subcommand("synth", "generate a planted union-of-subspaces problem");
  synth->add_option("--spec", spec, "synthetic problem spec (JSON)")->required();
  synth->add_option("--out", out, "output archive (.npz)")->required();
  synth->add_option("--truth", truth, "ground-truth JSON (default: <out>.truth.json)");

  auto* discover = app.add_subcommand("discover", "cluster feature vectors and build concept subspaces");
  discover->add_option("--features", in.features, "feature archive")->required();
  discover->add_option("--head", in.head, "classifier head archive (default: --features)");
  dopt.add_to(discover, true);
  discover->add_option("--out", out, "output directory")->required();

  auto* bases = app.add_subcommand("bases", "concept bases from an existing cluster assignment");
  bases->add_option("--features", in.features, "feature archive")->required();
  bases->add_option("--clusters", clusters, "clusters.json from discover")->required();
  dopt.add_to(bases, false);
  bases->add_option("--out", out, "output directory")->required();

  auto* explain = app.add_subcommand("explain", "concept relevances and heatmaps for one sample");
  explain->add_option("--features", in.features, "feature archive")->required();
  explain->add_option("--head", in.head, "classifier head archive (default: --features)");
  explain->add_option("--model", model, "concepts.json")->required();
  explain->add_option("--class", class_name, "class name or index")->capture_default_str();
  explain->add_option("--sample", sample, "sample id or index")->capture_default_str();
  explain->add_option("--out", out, "output directory")->required();

  auto* protos = app.add_subcommand("prototypes", "samples with the strongest concept activation");
  protos->add_option("--features", in.features, "feature archive")->required();
  protos->add_option("--head", in.head, "ignored; accepted for pipeline symmetry");
  protos->add_option("--model", model, "concepts.json")->required();
  protos->add_option("--concept", concept_id, "concept index (default: all)");
  protos->add_option("--k", k, "prototypes per concept")->capture_default_str();
  protos->add_option("--out", out, "output directory")->required();

  auto* geometry = app.add_subcommand("geometry", "pairwise Grassmann distances between concepts");
  geometry->add_option("--model", model, "concepts.json")->required();
  geometry->add_option("--out", out, "output directory")->required();

  auto* flip = app.add_subcommand("flip", "concept flipping curves (smallest destroying concepts)");
  flip->add_option("--features", in.features, "feature archive")->required();
  flip->add_option("--head", in.head, "classifier head archive (default: --features)");
  flip->add_option("--model", model, "concepts.json")->required();
  flip->add_option("--class", fopt.class_name, "class name or index")->capture_default_str();
  flip->add_option("--order", fopt.order, "relevance | random")->capture_default_str();
  flip->add_option("--impute", fopt.impute, "zero | mean")->capture_default_str();
  flip->add_option("--seeds", fopt.seeds, "random orders compared against relevance order")->capture_default_str();
  flip->add_option("--seed", fopt.seed, "first random seed")->capture_default_str();
  flip->add_option("--max-flips", fopt.max_flips, "cap on flipped concepts (-1: none)")->capture_default_str();
  flip->add_option("--out", out, "output directory")->required();

  auto* concise = app.add_subcommand("conciseness", "concepts needed to reach a completeness target");
  concise->add_option("--features", in.features, "feature archive")->required();
  concise->add_option("--head", in.head, "classifier head archive (default: --features)");
  concise->add_option("--methods", copt.methods, "comma-separated methods")->capture_default_str();
  concise->add_option("--classes", copt.classes, "comma-separated classes (default: all)");
  concise->add_option("--eta", copt.eta, "completeness target")->capture_default_str();
  concise->add_option("--max-concepts", copt.max_concepts, "largest n_c tried")->capture_default_str();
  dopt.add_to(concise, false);
  concise->add_option("--out", out, "output directory")->required();

  auto* report = app.add_subcommand("report", "re-render heatmaps from an explanation.json");
  report->add_option("--explanation", explanation, "explanation.json from explain")->required();
  report->add_option("--height", height, "output height in pixels (0: 16 per cell)")->capture_default_str();
  report->add_option("--width", width, "output width in pixels (0: 16 per cell)")->capture_default_str();
  report->add_option("--out", out, "output directory")->required();

  for (auto* sub : {synth, discover, bases, explain, protos, geometry, flip, concise, report}) add_common(sub);

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = merge_config(args);
  } catch (const mcd::Error& e) {
    std::cerr << "mcd: " << e.what() << '\n';
    return e.code() == mcd::ErrorCode::ConfigError || e.code() == mcd::ErrorCode::ParseError ? kExitConfig
                                                                                            : kExitData;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return kExitConfig;
  }
  common.log.json = log_json;

  CLI::App* sub = app.get_subcommands().front();
  Run run(sub->get_name(), args, *sub);
  try {
    if (sub == synth) return cmd_synth(spec, out, truth, run, common);
    if (sub == discover) return cmd_discover(in, dopt, out, run, common);
    if (sub == bases) return cmd_bases(in.features, clusters, dopt, out, run, common);
    if (sub == explain) return cmd_explain(in, model, class_name, sample, out, run, common);
    if (sub == protos) return cmd_prototypes(in, model, concept_id, k, out, run, common);
    if (sub == geometry) return cmd_geometry(model, out, run, common);
    if (sub == flip) return cmd_flip(in, model, fopt, out, run, common);
    if (sub == concise) return cmd_conciseness(in, dopt, copt, out, run, common);
    if (sub == report) return cmd_report(explanation, out, height, width, run, common);
  } catch (const mcd::Error& e) {
    common.log.error(sub->get_name(), e.what());
    return e.code() == mcd::ErrorCode::ConfigError ? kExitConfig : kExitData;
  } catch (const std::exception& e) {
    common.log.error(sub->get_name(), e.what());
    return kExitData;
  }
  return kExitConfig;
}
