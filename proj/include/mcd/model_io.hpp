#pragma once

#include <filesystem>

#include <json.hpp>

#include "mcd/concept_bases.hpp"
#include "mcd/subspace_cluster.hpp"
#include "mcd/synth.hpp"

namespace mcd {

using Json = nlohmann::ordered_json;

/// {F, concepts: [{label, dim, source_cluster, basis}], complement: {dim, basis},
/// provenance}. Bases are stored row-major as F x d nested arrays.
Json model_to_json(const ConceptModel& model, const Json& provenance = Json::object());
/// Rebuilds the model and re-validates orthonormality and disjointness.
ConceptModel model_from_json(const Json& doc);

Json assignment_to_json(const ClusterAssignment& assignment);
ClusterAssignment assignment_from_json(const Json& doc);

Json synth_spec_to_json(const SynthSpec& spec);
/// Missing keys keep their defaults; unknown keys are a ConfigError.
SynthSpec synth_spec_from_json(const Json& doc);
/// Planted labels and bases of a synthetic problem.
Json synth_truth_to_json(const SynthProblem& problem, const SynthSpec& spec);

Json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const Json& doc);

Json read_json(const std::filesystem::path& path);
/// Two-space indent, trailing newline.
void write_json(const std::filesystem::path& path, const Json& doc);

}  // namespace mcd
