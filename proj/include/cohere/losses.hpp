#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "cohere/common.hpp"
#include "cohere/encoder.hpp"

namespace cohere {

struct LossConfig {
  double delta = 1.0;  // pair margin (dissimilar side)
  double alpha = 0.5;  // quadruplet global margin
};

inline double euclid(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) {
    throw ValidationError("embedding dimensions differ: " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  }
  return (a - b).norm();
}

namespace detail {

/// d/da of ||a-b||, with the origin subgradient chosen as 0.
inline Eigen::VectorXd dist_grad(const Embedding& a, const Embedding& b) {
  const double d = (a - b).norm();
  if (d == 0.0) return Eigen::VectorXd::Zero(a.size());
  return (a - b) / d;
}

}  // namespace detail

struct PairLossResult {
  double loss = 0.0;
  double distance = 0.0;
  Eigen::VectorXd grad_anchor;
  Eigen::VectorXd grad_other;
};

/// Similar pairs (positive=true) pay the distance itself; dissimilar pairs pay
/// the hinge max{0, delta - d}.
inline PairLossResult loss_siamese(const Embedding& anchor, const Embedding& other,
                                   bool positive, const LossConfig& cfg = {}) {
  if (cfg.delta <= 0.0) throw ValidationError("pair margin must be positive");
  PairLossResult r;
  r.distance = euclid(anchor, other);
  r.grad_anchor = Eigen::VectorXd::Zero(anchor.size());
  r.grad_other = Eigen::VectorXd::Zero(other.size());
  if (positive) {
    r.loss = r.distance;
    r.grad_anchor = detail::dist_grad(anchor, other);
    r.grad_other = -r.grad_anchor;
  } else {
    r.loss = std::max(0.0, cfg.delta - r.distance);
    if (r.loss > 0.0) {
      r.grad_anchor = -detail::dist_grad(anchor, other);
      r.grad_other = -r.grad_anchor;
    }
  }
  return r;
}

/// Same functional form as loss_siamese; only the sampling contract differs
/// (negatives come from far-apart frames of the same video).
inline PairLossResult loss_sfa(const Embedding& anchor, const Embedding& other, bool positive,
                               const LossConfig& cfg = {}) {
  return loss_siamese(anchor, other, positive, cfg);
}

struct QuadLossResult {
  double loss = 0.0;
  double d_neighbor = 0.0;      // ||t - t1||
  double d_nonneighbor = 0.0;   // ||t - tn||
  double d_negative = 0.0;      // ||t - neg||
  bool hinge_active = false;
  Eigen::VectorXd grad_anchor;
  Eigen::VectorXd grad_neighbor;
  Eigen::VectorXd grad_nonneighbor;
  Eigen::VectorXd grad_negative;
};

/// Pulls the neighbor in unconditionally and, through the hinge, keeps the
/// same-video non-neighbor closer than the cross-video negative by alpha.
inline QuadLossResult loss_quadruplet(const Embedding& anchor, const Embedding& neighbor,
                                      const Embedding& nonneighbor, const Embedding& negative,
                                      const LossConfig& cfg = {}) {
  if (cfg.alpha <= 0.0) throw ValidationError("global margin must be positive");
  QuadLossResult r;
  r.d_neighbor = euclid(anchor, neighbor);
  r.d_nonneighbor = euclid(anchor, nonneighbor);
  r.d_negative = euclid(anchor, negative);

  const double hinge = r.d_nonneighbor - r.d_negative + cfg.alpha;
  r.hinge_active = hinge > 0.0;
  r.loss = r.d_neighbor + std::max(0.0, hinge);

  const Eigen::VectorXd g_nb = detail::dist_grad(anchor, neighbor);
  r.grad_anchor = g_nb;
  r.grad_neighbor = -g_nb;
  r.grad_nonneighbor = Eigen::VectorXd::Zero(nonneighbor.size());
  r.grad_negative = Eigen::VectorXd::Zero(negative.size());
  if (r.hinge_active) {
    const Eigen::VectorXd g_nn = detail::dist_grad(anchor, nonneighbor);
    const Eigen::VectorXd g_ng = detail::dist_grad(anchor, negative);
    r.grad_anchor += g_nn - g_ng;
    r.grad_nonneighbor = -g_nn;
    r.grad_negative = g_ng;
  }
  return r;
}

}  // namespace cohere
