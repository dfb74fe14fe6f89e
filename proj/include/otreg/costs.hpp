#pragma once

#include <Eigen/Core>

#include "otreg/geometry.hpp"

namespace otreg {

/// Throws DegenerateFeatureError if a row has norm < 1e-12, DomainError on
/// non-finite entries.
void validate_features(const Eigen::MatrixXd& features);

/// Euclidean distance of the L2-normalized inputs; range [0, 2].
double feature_distance(const Eigen::VectorXd& f, const Eigen::VectorXd& g);

/// 2*tanh of the Euclidean distance; range [0, 2).
double euclid_structure_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& q);

/// Cross cost: entry (i,j) = feature_distance(row i of Fp, row j of Fq).
Eigen::MatrixXd build_cross_cost(const Eigen::MatrixXd& Fp, const Eigen::MatrixXd& Fq);

/// Intra-cloud structure cost blending Euclidean and feature terms:
/// lambda * 2*tanh(||p_i - p_k||) + (1 - lambda) * normalized-feature distance.
/// Symmetric with zero diagonal, entries in [0, 2].
Eigen::MatrixXd build_structure_cost(const PointCloud& cloud, const Eigen::MatrixXd& features,
                                     double lambda);

/// Cross cost plus the two structure costs for a cloud pair, aligned by index.
struct CostBundle {
    Eigen::MatrixXd cross;      // N x M
    Eigen::MatrixXd struct_p;   // N x N
    Eigen::MatrixXd struct_q;   // M x M
    double lambda = 0.1;
};

CostBundle build_cost_bundle(const PointCloud& cloud_p, const PointCloud& cloud_q,
                             const Eigen::MatrixXd& Fp, const Eigen::MatrixXd& Fq, double lambda);

/// H with H_kl = sum_ij (Cp_ik - Cq_jl)^2 * coupling_ij, computed by the
/// rank-reduced decomposition
///   H = (Cp∘Cp)^T a 1^T + 1 b^T (Cq∘Cq) - 2 Cp^T Γ Cq,  a = Γ1, b = Γ^T 1.
Eigen::MatrixXd gw_term(const Eigen::MatrixXd& struct_p, const Eigen::MatrixXd& struct_q,
                        const Eigen::MatrixXd& coupling);

/// <gw_term(...), coupling>; the quadratic structural objective.
double gw_objective(const Eigen::MatrixXd& struct_p, const Eigen::MatrixXd& struct_q,
                    const Eigen::MatrixXd& coupling);

}  // namespace otreg
