#pragma once

// Random models, heads and stacks shared by the test binaries.

#include <random>
#include <vector>

#include <Eigen/Dense>

#include "mcd/concept_bases.hpp"
#include "mcd/tensor_store.hpp"
#include "oracles.hpp"

namespace fixture {

/// Generic (pairwise disjoint, non-orthogonal) concepts: independent
/// Gaussian spans split into groups of the given dimensions.
inline std::vector<mcd::ConceptBasis> random_concepts(Eigen::Index f, const std::vector<Eigen::Index>& dims,
                                                      std::mt19937_64& rng) {
  Eigen::Index total = 0;
  for (auto d : dims) total += d;
  const Eigen::MatrixXd g = oracle::gaussian(f, total, rng);
  std::vector<mcd::ConceptBasis> out;
  Eigen::Index col = 0;
  for (std::size_t l = 0; l < dims.size(); ++l) {
    mcd::ConceptBasis b;
    b.vectors = oracle::gram_schmidt(g.middleCols(col, dims[l]));
    b.label = "c" + std::to_string(l);
    b.source_cluster = static_cast<int>(l);
    out.push_back(std::move(b));
    col += dims[l];
  }
  return out;
}

/// Random dimensions d^l >= 1 with n_concepts entries summing to at most f.
inline std::vector<Eigen::Index> random_dims(Eigen::Index f, int n_concepts, std::mt19937_64& rng) {
  std::vector<Eigen::Index> dims;
  Eigen::Index left = f;
  for (int l = 0; l < n_concepts && left > 0; ++l) {
    const Eigen::Index cap = std::max<Eigen::Index>(1, std::min<Eigen::Index>(4, left - (n_concepts - l - 1)));
    std::uniform_int_distribution<Eigen::Index> pick(1, cap);
    dims.push_back(pick(rng));
    left -= dims.back();
  }
  return dims;
}

inline mcd::ConceptModel random_model(Eigen::Index f, std::mt19937_64& rng, int max_concepts = 4) {
  std::uniform_int_distribution<int> count(0, std::min<int>(max_concepts, static_cast<int>(f)));
  return mcd::assemble_model(random_concepts(f, random_dims(f, count(rng), rng), rng), f);
}

/// Mutually orthogonal concepts: consecutive column blocks of one random orthogonal matrix.
inline mcd::ConceptModel orthogonal_model(Eigen::Index f, const std::vector<Eigen::Index>& dims,
                                          std::mt19937_64& rng) {
  const Eigen::MatrixXd q = oracle::gram_schmidt(oracle::gaussian(f, f, rng));
  std::vector<mcd::ConceptBasis> bases;
  Eigen::Index col = 0;
  for (std::size_t l = 0; l < dims.size(); ++l) {
    bases.push_back({q.middleCols(col, dims[l]), "o" + std::to_string(l), static_cast<int>(l)});
    col += dims[l];
  }
  return mcd::assemble_model(std::move(bases), f);
}

inline mcd::ClassifierHead random_head(Eigen::Index classes, Eigen::Index f, std::mt19937_64& rng) {
  return mcd::ClassifierHead(oracle::gaussian(classes, f, rng), oracle::gaussian(classes, 1, rng).col(0));
}

inline mcd::FeatureStack random_stack(Eigen::Index samples, Eigen::Index h, Eigen::Index w, Eigen::Index f,
                                      std::mt19937_64& rng) {
  return mcd::FeatureStack(oracle::gaussian(samples * h * w, f, rng), mcd::SpatialLayout{samples, h, w});
}

}  // namespace fixture
