/**
 * \file matchability.hpp
 * \brief Descriptor matchability and the joint detector/descriptor losses.
 *
 * Implements the loss framework as numerical operations over given
 * descriptor arrays: mutual-nearest correspondence construction with
 * distance-gated negatives, the per-descriptor matchability index, the
 * hardest quadruplet contrastive loss, the exponential likelihood of a
 * matchability index, and the probabilistic detection loss whose per-term
 * minimizer is sigma = m.
 */
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "kelo/cloud.hpp"
#include "kelo/features.hpp"

namespace kelo {

/// Ground-truth aligned training pair. R_p bounds positive pairs, R_n lower
/// bounds negatives (R_n >= R_p > 0).
struct TrainingPair {
  const PointCloud& cloud_p;
  const PointCloud& cloud_q;
  const FeatureSet& desc_p;
  const FeatureSet& desc_q;
  double r_positive = 0.5;
  double r_negative = 1.0;
};

struct CorrespondenceSet {
  /// Mutually nearest (i, j) pairs with ||p_i - q_j|| <= R_p.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  /// negatives_p[k]: indices into Q at least R_n away from p_{pairs[k].first}.
  /// negatives_q[k]: indices into P at least R_n away from q_{pairs[k].second}.
  /// Points with a flagged-unmatched descriptor are excluded.
  std::vector<std::vector<std::uint32_t>> negatives_p;
  std::vector<std::vector<std::uint32_t>> negatives_q;
};

struct EmptyResult : std::runtime_error {
  EmptyResult() : std::runtime_error("no mutual pair within R_p") {}
};
struct EmptyNegatives : std::runtime_error {
  EmptyNegatives() : std::runtime_error("empty negative descriptor set") {}
};
struct EmptyCorrespondences : std::runtime_error {
  EmptyCorrespondences() : std::runtime_error("empty correspondence set") {}
};
struct NonPositiveSigma : std::runtime_error {
  NonPositiveSigma() : std::runtime_error("sigma must be > 0") {}
};
struct LengthMismatch : std::runtime_error {
  LengthMismatch() : std::runtime_error("matchability/sigma length mismatch") {}
};

/// Mutual-nearest pairs within R_p plus per-anchor negative index sets.
/// Deterministic given input order; throws EmptyResult when the clouds share
/// no mutual pair within R_p.
CorrespondenceSet build_correspondences(const TrainingPair& pair);

/// [D(d_i, d_j) - m_p]_+ + [m_n - min_k D(d_i, d_k)]_+ over the given
/// negatives, with Euclidean D. Lower is more matchable.
double matchability_index(const Eigen::VectorXd& d_i,
                          const Eigen::VectorXd& d_j,
                          std::span<const Eigen::VectorXd> negatives,
                          double m_p, double m_n);

struct LossMargins {
  double lambda_p = 1.0;
  double m_p = 0.1;
  double m_n = 1.4;
};

/// Hardest quadruplet contrastive loss averaged over the correspondence set.
/// A pair whose negative set is empty contributes no hinge term for that
/// side (min over an empty set is treated as +inf).
double contrastive_loss(const CorrespondenceSet& cs, const FeatureSet& desc_p,
                        const FeatureSet& desc_q, const LossMargins& margins);

/// Subgradient of contrastive_loss w.r.t. every descriptor entry, one-sided
/// at hinge kinks (inactive at equality). Returns gradients shaped like the
/// descriptor matrices.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> contrastive_loss_gradient(
    const CorrespondenceSet& cs, const FeatureSet& desc_p,
    const FeatureSet& desc_q, const LossMargins& margins);

/// Exponential density (1/sigma) exp(-m / sigma).
double exp_likelihood(double m, double sigma);

/// (1/|C|) sum(ln s_i + m_i/s_i + ln s_j + m_j/s_j) over per-pair
/// (matchability, saliency) values.
double detection_loss(std::span<const std::pair<double, double>> m_pairs,
                      std::span<const std::pair<double, double>> sigma_pairs);

/// Per-pair matchability indices (m_i, m_j) for a correspondence set,
/// evaluated with the hardest negatives. Pairs with an empty negative set
/// on one side get only the positive-distance hinge for that side.
std::vector<std::pair<double, double>> pair_matchabilities(
    const CorrespondenceSet& cs, const FeatureSet& desc_p,
    const FeatureSet& desc_q, double m_p, double m_n);

}  // namespace kelo
