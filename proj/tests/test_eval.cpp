// Concept flipping, conciseness, serialization, rendering and the CLI.

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>

#include "fixtures.hpp"
#include "mcd/decomposer.hpp"
#include "mcd/discovery.hpp"
#include "mcd/error.hpp"
#include "mcd/eval.hpp"
#include "mcd/model_io.hpp"
#include "mcd/render.hpp"
#include "mcd/synth.hpp"
#include "oracles.hpp"

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

template <typename F>
mcd::ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const mcd::Error& e) {
    return e.code();
  }
  FAIL("expected an mcd::Error");
  return mcd::ErrorCode::IoError;
}

mcd::Explanation explanation(std::vector<MatrixXd> act, std::vector<MatrixXd> rel) {
  mcd::Explanation e;
  e.activation_maps = std::move(act);
  e.relevance_maps = std::move(rel);
  return e;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mcd-unit-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MCD_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

// --------------------------------------------------------------- flipping

TEST_CASE("hard assignment: dominant concept and ties") {
  const MatrixXd hi = MatrixXd::Constant(2, 2, 0.9), lo = MatrixXd::Constant(2, 2, 0.1);
  const MatrixXd rel = MatrixXd::Constant(2, 2, 4.0);
  SUBCASE("dominant everywhere") {
    const auto m = mcd::hard_assign(explanation({lo, hi, lo}, {rel, rel, rel}));
    CHECK((m.assignment.array() == 1).all());
    CHECK(m.sizes(1) == 4);
    CHECK(m.pooled_relevance(1) == doctest::Approx(4.0));
    CHECK(m.pooled_relevance(0) == 0.0);
  }
  SUBCASE("exact tie goes to the lower index") {
    MatrixXd a = lo, b = lo;
    a(0, 1) = b(0, 1) = 0.7;
    const auto m = mcd::hard_assign(explanation({a, b, lo}, {rel, rel, rel}));
    CHECK(m.assignment(0, 1) == 0);
  }
}

TEST_CASE("planted spatial concepts are recovered by the hard masks") {
  mcd::SynthSpec spec;
  spec.feature_dim = 12;
  spec.dims = {2, 3};
  spec.layout = mcd::SpatialLayout{3, 6, 8};
  spec.seed = 4;
  const auto p = mcd::generate(spec);
  std::vector<mcd::ConceptBasis> bases;
  for (std::size_t l = 0; l < p.bases.size(); ++l) bases.push_back({p.bases[l], "p", static_cast<int>(l)});
  const mcd::Decomposer d(mcd::assemble_model(bases, 12));
  Index hit = 0, total = 0;
  for (Index n = 0; n < 3; ++n) {
    const auto m = mcd::hard_assign(d.relevance(p.head, p.stack, n, 0));
    for (Index r = 0; r < 48; ++r, ++total)
      hit += m.assignment(r / 8, r % 8) == p.labels[static_cast<std::size_t>(n * 48 + r)];
  }
  CHECK(static_cast<double>(hit) / static_cast<double>(total) >= 0.95);
}

TEST_CASE("flip curve endpoints") {
  std::mt19937_64 rng(1);
  const auto m = fixture::random_model(6, rng);
  const mcd::Decomposer d(m);
  const auto s = fixture::random_stack(3, 3, 3, 6, rng);
  const auto h = fixture::random_head(2, 6, rng);
  const VectorXd zero = VectorXd::Zero(6);

  SUBCASE("no flips leave the logit unchanged") {
    mcd::FlipConfig c;
    c.max_flips = 0;
    const auto curve = mcd::sdc_curve(d, h, s, 1, 0, c, zero);
    REQUIRE(curve.points.size() == 1);
    const double logit = s.sample_rows(1).colwise().mean().dot(h.weight(0).transpose()) + h.biases(0);
    CHECK(curve.points[0].logit == doctest::Approx(logit));
    CHECK(curve.points[0].fraction == 0.0);
  }
  SUBCASE("flipping every concept location with zeros keeps only complement locations") {
    const auto curve = mcd::sdc_curve(d, h, s, 2, 1, mcd::FlipConfig{}, zero);
    const auto masks = mcd::hard_assign(d.relevance(h, s, 2, 1));
    const MatrixXd rows = s.sample_rows(2);
    double expected = h.biases(1);
    for (Index r = 0; r < 9; ++r)
      if (masks.assignment(r / 3, r % 3) == m.concept_count()) expected += rows.row(r).dot(h.weight(1).transpose()) / 9.0;
    CHECK(curve.points.back().logit == doctest::Approx(expected).epsilon(1e-12));
    for (std::size_t i = 1; i < curve.points.size(); ++i) CHECK(curve.points[i].fraction > curve.points[i - 1].fraction);
  }
  SUBCASE("random order is reproducible per seed") {
    mcd::FlipConfig c;
    c.order = mcd::FlipOrder::Random;
    c.seed = 3;
    const auto a = mcd::sdc_curve(d, h, s, 0, 0, c, zero);
    const auto b = mcd::sdc_curve(d, h, s, 0, 0, c, zero);
    REQUIRE(a.points.size() == b.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i) CHECK(a.points[i].concept_id == b.points[i].concept_id);
  }
  SUBCASE("curves do not depend on the thread count") {
    const auto one = mcd::sdc_curves(d, h, s, 0, mcd::FlipConfig{}, 1);
    const auto four = mcd::sdc_curves(d, h, s, 0, mcd::FlipConfig{}, 4);
    for (std::size_t n = 0; n < one.size(); ++n) CHECK(mcd::flip_auc(one[n]) == mcd::flip_auc(four[n]));
  }
}

TEST_CASE("flip option parsing") {
  CHECK(mcd::parse_imputation("mean") == mcd::Imputation::Mean);
  CHECK(mcd::parse_flip_order("random") == mcd::FlipOrder::Random);
  CHECK(code_of([] { (void)mcd::parse_imputation("median"); }) == mcd::ErrorCode::ConfigError);
  CHECK(code_of([] { (void)mcd::parse_flip_order("sideways"); }) == mcd::ErrorCode::ConfigError);
}

TEST_CASE("flip AUC holds the last value to fraction one") {
  mcd::FlipCurve c;
  c.points = {{0.0, 2.0}, {0.5, 0.0}};
  CHECK(mcd::flip_auc(c) == doctest::Approx(0.5));
  c.points.push_back({1.0, 2.0});
  CHECK(mcd::flip_auc(c) == doctest::Approx(1.0));
}

TEST_CASE("sign test agrees with exact binomial counting") {
  for (int n = 0; n <= 30; ++n)
    for (int w = 0; w <= n; ++w) CHECK(mcd::sign_test_p(w, n - w) == doctest::Approx(oracle::binomial_tail(w, n)));
  CHECK(mcd::sign_test_p(20, 0) == doctest::Approx(std::pow(0.5, 20)));
}

// ------------------------------------------------------------- conciseness

TEST_CASE("single full-space concept reaches any target with one concept") {
  std::mt19937_64 rng(2);
  const MatrixXd q = oracle::gram_schmidt(oracle::gaussian(5, 5, rng));
  const mcd::ModelSequence seq = [&](int n) -> std::optional<mcd::ConceptModel> {
    if (n != 1) return std::nullopt;
    return mcd::assemble_model({{q, "all", 0}}, 5);
  };
  for (const double target : {0.1, 0.5, 1.0}) {
    const auto row = mcd::conciseness_for_class(seq, oracle::gaussian(5, 1, rng).col(0), target, 10);
    REQUIRE(row.n_concepts);
    CHECK(*row.n_concepts == 1);
  }
}

TEST_CASE("unreachable targets are reported as missing") {
  const mcd::ModelSequence seq = [](int n) -> std::optional<mcd::ConceptModel> {
    if (n > 1) return std::nullopt;
    return mcd::assemble_model({{Eigen::MatrixXd::Identity(4, 4).leftCols(1), "e1", 0}}, 4);
  };
  const auto row = mcd::conciseness_for_class(seq, VectorXd::Unit(4, 3), 0.5, 3);
  CHECK_FALSE(row.n_concepts);
  const auto s = mcd::summarize({row});
  CHECK(s.unreached == 1);
  CHECK(std::isnan(s.mean_n_concepts));
}

TEST_CASE("PCA concepts are mutually orthogonal: mean distance pi/2") {
  std::mt19937_64 rng(3);
  const mcd::FeatureStack s(oracle::gaussian(200, 6, rng), std::nullopt);
  const auto h = fixture::random_head(2, 6, rng);
  mcd::DiscoveryConfig cfg;
  cfg.method = mcd::Method::Pca;
  const auto seq = mcd::model_sequence(s, h, 0, cfg);
  const auto row = mcd::conciseness_for_class(seq, h.weight(0), 0.5, 6);
  REQUIRE(row.n_concepts);
  if (*row.n_concepts >= 2) CHECK(row.mean_distance == doctest::Approx(std::numbers::pi / 2));
  CHECK(mcd::mean_pairwise_distance(*seq(4)) == doctest::Approx(std::numbers::pi / 2));
  CHECK(row.mean_dim == 1.0);
}

TEST_CASE("planted three-subspace problem: SSC reaches eta 0.5 within three concepts") {
  mcd::SynthSpec spec;
  spec.noise_sigma = 0.01;
  spec.seed = 1;
  const auto p = mcd::generate(spec);
  mcd::DiscoveryConfig cfg;
  const auto seq = mcd::model_sequence(p.stack, p.head, 0, cfg);
  const auto row = mcd::conciseness_for_class(seq, p.head.weight(0), 0.5, 3);
  MESSAGE("eta at stop " << row.eta);
  REQUIRE(row.n_concepts);
  CHECK(*row.n_concepts <= 3);
}

TEST_CASE("in-span head is complete under the planted bases") {
  mcd::SynthSpec spec;
  spec.seed = 9;
  spec.n_classes = 3;
  const auto p = mcd::generate(spec);
  std::vector<mcd::ConceptBasis> bases;
  for (std::size_t l = 0; l < p.bases.size(); ++l) bases.push_back({p.bases[l], "p", static_cast<int>(l)});
  const auto m = mcd::assemble_model(bases, spec.feature_dim);
  for (Index k = 0; k < 3; ++k) CHECK(std::abs(mcd::completeness_score(m, p.head.weight(k)) - 1.0) <= 1e-10);
}

// -------------------------------------------------------------- json / png

TEST_CASE("model JSON round-trip") {
  std::mt19937_64 rng(4);
  const auto m = fixture::random_model(7, rng);
  const mcd::Json doc = mcd::model_to_json(m, {{"method", "test"}});
  const auto back = mcd::model_from_json(mcd::Json::parse(doc.dump()));
  CHECK(back.concept_count() == m.concept_count());
  CHECK(back.full_basis() == m.full_basis());
  CHECK(mcd::model_to_json(back, {{"method", "test"}}).dump() == doc.dump());
}

TEST_CASE("assignment and synth spec JSON") {
  mcd::ClusterAssignment a;
  a.labels = {0, 1, -1, 1};
  a.n_clusters = 2;
  a.subsample_indices = {0, 2, 4, 6};
  const auto back = mcd::assignment_from_json(mcd::assignment_to_json(a));
  CHECK(back.labels == a.labels);
  CHECK(back.subsample_indices == a.subsample_indices);
  mcd::Json bad = mcd::assignment_to_json(a);
  bad["labels"][0] = 5;
  CHECK(code_of([&] { (void)mcd::assignment_from_json(bad); }) == mcd::ErrorCode::InvalidValue);

  mcd::SynthSpec spec;
  spec.dims = {1, 4};
  spec.layout = mcd::SpatialLayout{2, 3, 3};
  const auto s = mcd::synth_spec_from_json(mcd::synth_spec_to_json(spec));
  CHECK(s.dims == spec.dims);
  CHECK(s.layout == spec.layout);
  mcd::Json extra = mcd::synth_spec_to_json(spec);
  extra["colour"] = "red";
  CHECK(code_of([&] { (void)mcd::synth_spec_from_json(extra); }) == mcd::ErrorCode::ConfigError);
}

TEST_CASE("PNG encoding") {
  mcd::Image img(3, 2);
  img.set(1, 1, {255, 0, 0});
  const auto bytes = mcd::encode_png(img);
  const std::vector<std::uint8_t> sig{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  REQUIRE(bytes.size() > 8);
  CHECK(std::equal(sig.begin(), sig.end(), bytes.begin()));
  CHECK(std::string(bytes.end() - 8, bytes.end() - 4) == "IEND");
  CHECK(mcd::encode_png(img) == bytes);
  const auto heat = mcd::render_relevance(MatrixXd::Random(2, 3), 4);
  CHECK(heat.width == 12);
  CHECK(heat.height == 8);
}

// ---------------------------------------------------------------------- cli

TEST_CASE("CLI exit codes") {
  const fs::path dir = scratch("cli");
  CHECK(run_cli("--version") == 0);
  CHECK(run_cli("discover --features x.npz --out o --no-such-flag") == 2);
  CHECK(run_cli("") == 2);
  std::ofstream(dir / "corrupt.npz") << "PK\x03\x04 definitely not a zip";
  CHECK(run_cli("discover --features " + (dir / "corrupt.npz").string() + " --out " + (dir / "o").string()) == 3);
  CHECK(run_cli("discover --features f.npz --n-concepts zero --out " + (dir / "o").string()) == 2);
  std::ofstream(dir / "spec.json") << R"({"feature_dim": 10, "dims": [2, 2], "points_per_subspace": 20, "seed": 2})";
  CHECK(run_cli("synth --spec " + (dir / "spec.json").string() + " --out " + (dir / "p.npz").string()) == 0);
  CHECK(fs::exists(dir / "manifest.json"));
  std::ofstream(dir / "cfg.json") << R"({"method": "pca", "n-concepts": "2"})";
  CHECK(run_cli("discover --features " + (dir / "p.npz").string() + " --config " + (dir / "cfg.json").string() +
                " --out " + (dir / "d").string()) == 0);
  const mcd::Json summary = mcd::read_json(dir / "d" / "summary.json");
  CHECK(summary["method"] == "pca");
  CHECK(summary["n_concepts"] == 2);
  CHECK(run_cli("flip --features " + (dir / "p.npz").string() + " --model " + (dir / "d" / "concepts.json").string() +
                " --impute median --out " + (dir / "f").string()) == 2);
}
