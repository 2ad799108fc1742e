#include "kelo/matchability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kelo/voxel_map.hpp"

namespace kelo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double hinge(double x) { return x > 0.0 ? x : 0.0; }

/// Hardest negative: index and descriptor distance of the closest negative.
std::pair<std::int64_t, double> hardest_negative(
    const Eigen::MatrixXd& descs, const Eigen::VectorXd& anchor,
    const std::vector<std::uint32_t>& negatives) {
  std::int64_t best = -1;
  double best_d = kInf;
  for (const auto k : negatives) {
    const double d = (descs.row(k).transpose() - anchor).norm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return {best, best_d};
}

}  // namespace

CorrespondenceSet build_correspondences(const TrainingPair& pair) {
  if (pair.cloud_p.empty() || pair.cloud_q.empty())
    throw std::invalid_argument("build_correspondences: empty cloud");
  if (!(pair.r_positive > 0.0) || pair.r_negative < pair.r_positive)
    throw std::invalid_argument("build_correspondences: need R_n >= R_p > 0");

  const auto& P = pair.cloud_p.positions;
  const auto& Q = pair.cloud_q.positions;
  PointGrid grid_p(P, pair.r_positive);
  PointGrid grid_q(Q, pair.r_positive);

  CorrespondenceSet cs;
  for (std::uint32_t i = 0; i < P.size(); ++i) {
    const auto nn_q = grid_q.nearest(P[i], pair.r_positive);
    if (!nn_q) continue;
    const auto nn_p = grid_p.nearest(Q[nn_q->first], pair.r_positive);
    if (!nn_p || nn_p->first != i) continue;
    cs.pairs.emplace_back(i, nn_q->first);
  }
  if (cs.pairs.empty()) throw EmptyResult{};

  const double rn_sq = pair.r_negative * pair.r_negative;
  cs.negatives_p.resize(cs.pairs.size());
  cs.negatives_q.resize(cs.pairs.size());
  for (std::size_t k = 0; k < cs.pairs.size(); ++k) {
    const auto [i, j] = cs.pairs[k];
    for (std::uint32_t q = 0; q < Q.size(); ++q) {
      if ((Q[q] - P[i]).squaredNorm() >= rn_sq && pair.desc_q.row_valid(q))
        cs.negatives_p[k].push_back(q);
    }
    for (std::uint32_t p = 0; p < P.size(); ++p) {
      if ((P[p] - Q[j]).squaredNorm() >= rn_sq && pair.desc_p.row_valid(p))
        cs.negatives_q[k].push_back(p);
    }
  }
  return cs;
}

double matchability_index(const Eigen::VectorXd& d_i,
                          const Eigen::VectorXd& d_j,
                          std::span<const Eigen::VectorXd> negatives,
                          double m_p, double m_n) {
  if (negatives.empty()) throw EmptyNegatives{};
  double min_neg = kInf;
  for (const auto& d_k : negatives)
    min_neg = std::min(min_neg, (d_i - d_k).norm());
  return hinge((d_i - d_j).norm() - m_p) + hinge(m_n - min_neg);
}

double contrastive_loss(const CorrespondenceSet& cs, const FeatureSet& desc_p,
                        const FeatureSet& desc_q, const LossMargins& margins) {
  if (cs.pairs.empty()) throw EmptyCorrespondences{};
  double total = 0.0;
  for (std::size_t k = 0; k < cs.pairs.size(); ++k) {
    const auto [i, j] = cs.pairs[k];
    const Eigen::VectorXd d_i = desc_p.descriptors.row(i);
    const Eigen::VectorXd d_j = desc_q.descriptors.row(j);
    total += margins.lambda_p * hinge((d_i - d_j).norm() - margins.m_p);
    const auto [ni, dist_ni] = hardest_negative(desc_q.descriptors, d_i,
                                                cs.negatives_p[k]);
    if (ni >= 0) total += hinge(margins.m_n - dist_ni);
    const auto [nj, dist_nj] = hardest_negative(desc_p.descriptors, d_j,
                                                cs.negatives_q[k]);
    if (nj >= 0) total += hinge(margins.m_n - dist_nj);
  }
  return total / static_cast<double>(cs.pairs.size());
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> contrastive_loss_gradient(
    const CorrespondenceSet& cs, const FeatureSet& desc_p,
    const FeatureSet& desc_q, const LossMargins& margins) {
  if (cs.pairs.empty()) throw EmptyCorrespondences{};
  Eigen::MatrixXd grad_p = Eigen::MatrixXd::Zero(desc_p.descriptors.rows(),
                                                 desc_p.descriptors.cols());
  Eigen::MatrixXd grad_q = Eigen::MatrixXd::Zero(desc_q.descriptors.rows(),
                                                 desc_q.descriptors.cols());
  const double scale = 1.0 / static_cast<double>(cs.pairs.size());

  for (std::size_t k = 0; k < cs.pairs.size(); ++k) {
    const auto [i, j] = cs.pairs[k];
    const Eigen::VectorXd d_i = desc_p.descriptors.row(i);
    const Eigen::VectorXd d_j = desc_q.descriptors.row(j);

    const Eigen::VectorXd diff = d_i - d_j;
    const double dist = diff.norm();
    if (dist - margins.m_p > 0.0 && dist > 0.0) {
      const Eigen::VectorXd g = margins.lambda_p * scale / dist * diff;
      grad_p.row(i) += g.transpose();
      grad_q.row(j) -= g.transpose();
    }

    const auto [ni, dist_ni] = hardest_negative(desc_q.descriptors, d_i,
                                                cs.negatives_p[k]);
    if (ni >= 0 && margins.m_n - dist_ni > 0.0 && dist_ni > 0.0) {
      const Eigen::VectorXd diff_n =
          d_i - desc_q.descriptors.row(ni).transpose();
      const Eigen::VectorXd g = scale / dist_ni * diff_n;
      grad_p.row(i) -= g.transpose();
      grad_q.row(ni) += g.transpose();
    }

    const auto [nj, dist_nj] = hardest_negative(desc_p.descriptors, d_j,
                                                cs.negatives_q[k]);
    if (nj >= 0 && margins.m_n - dist_nj > 0.0 && dist_nj > 0.0) {
      const Eigen::VectorXd diff_n =
          d_j - desc_p.descriptors.row(nj).transpose();
      const Eigen::VectorXd g = scale / dist_nj * diff_n;
      grad_q.row(j) -= g.transpose();
      grad_p.row(nj) += g.transpose();
    }
  }
  return {std::move(grad_p), std::move(grad_q)};
}

double exp_likelihood(double m, double sigma) {
  if (!(sigma > 0.0)) throw NonPositiveSigma{};
  if (m < 0.0) throw std::invalid_argument("exp_likelihood: m < 0");
  return std::exp(-m / sigma) / sigma;
}

double detection_loss(std::span<const std::pair<double, double>> m_pairs,
                      std::span<const std::pair<double, double>> sigma_pairs) {
  if (m_pairs.size() != sigma_pairs.size()) throw LengthMismatch{};
  if (m_pairs.empty()) throw EmptyCorrespondences{};
  double total = 0.0;
  for (std::size_t k = 0; k < m_pairs.size(); ++k) {
    const auto [m_i, m_j] = m_pairs[k];
    const auto [s_i, s_j] = sigma_pairs[k];
    if (!(s_i > 0.0) || !(s_j > 0.0)) throw NonPositiveSigma{};
    total += std::log(s_i) + m_i / s_i + std::log(s_j) + m_j / s_j;
  }
  return total / static_cast<double>(m_pairs.size());
}

std::vector<std::pair<double, double>> pair_matchabilities(
    const CorrespondenceSet& cs, const FeatureSet& desc_p,
    const FeatureSet& desc_q, double m_p, double m_n) {
  std::vector<std::pair<double, double>> out;
  out.reserve(cs.pairs.size());
  for (std::size_t k = 0; k < cs.pairs.size(); ++k) {
    const auto [i, j] = cs.pairs[k];
    const Eigen::VectorXd d_i = desc_p.descriptors.row(i);
    const Eigen::VectorXd d_j = desc_q.descriptors.row(j);
    const double positive = (d_i - d_j).norm();

    double m_val_i = hinge(positive - m_p);
    const auto [ni, dist_ni] = hardest_negative(desc_q.descriptors, d_i,
                                                cs.negatives_p[k]);
    if (ni >= 0) m_val_i += hinge(m_n - dist_ni);

    double m_val_j = hinge(positive - m_p);
    const auto [nj, dist_nj] = hardest_negative(desc_p.descriptors, d_j,
                                                cs.negatives_q[k]);
    if (nj >= 0) m_val_j += hinge(m_n - dist_nj);

    out.emplace_back(m_val_i, m_val_j);
  }
  return out;
}

}  // namespace kelo
