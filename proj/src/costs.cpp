#include "otreg/costs.hpp"

#include <cmath>

#include "otreg/error.hpp"

namespace otreg {
namespace {

constexpr double kMinFeatureNorm = 1e-12;

// Rows scaled to unit norm; rejects degenerate rows.
Eigen::MatrixXd normalized_rows(const Eigen::MatrixXd& features) {
    Eigen::MatrixXd out = features;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        double n = out.row(i).norm();
        if (!std::isfinite(n)) throw DomainError("feature matrix has non-finite entries");
        if (n < kMinFeatureNorm) {
            throw DegenerateFeatureError("feature row " + std::to_string(i) + " has zero norm");
        }
        out.row(i) /= n;
    }
    return out;
}

}  // namespace

void validate_features(const Eigen::MatrixXd& features) {
    (void)normalized_rows(features);
}

double feature_distance(const Eigen::VectorXd& f, const Eigen::VectorXd& g) {
    if (f.size() != g.size()) throw ShapeError("feature_distance: dimension mismatch");
    double nf = f.norm(), ng = g.norm();
    if (nf < kMinFeatureNorm || ng < kMinFeatureNorm)
        throw DegenerateFeatureError("feature_distance: zero-norm input");
    return (f / nf - g / ng).norm();
}

double euclid_structure_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& q) {
    return 2.0 * std::tanh((p - q).norm());
}

Eigen::MatrixXd build_cross_cost(const Eigen::MatrixXd& Fp, const Eigen::MatrixXd& Fq) {
    if (Fp.cols() != Fq.cols()) throw ShapeError("build_cross_cost: feature dimension mismatch");
    Eigen::MatrixXd np = normalized_rows(Fp);
    Eigen::MatrixXd nq = normalized_rows(Fq);
    Eigen::MatrixXd cost(np.rows(), nq.rows());
    for (Eigen::Index i = 0; i < np.rows(); ++i) {
        for (Eigen::Index j = 0; j < nq.rows(); ++j) {
            cost(i, j) = (np.row(i) - nq.row(j)).norm();
        }
    }
    return cost;
}

Eigen::MatrixXd build_structure_cost(const PointCloud& cloud, const Eigen::MatrixXd& features,
                                     double lambda) {
    if (lambda < 0.0 || lambda > 1.0) throw DomainError("build_structure_cost: lambda not in [0,1]");
    if (features.rows() != cloud.size())
        throw ShapeError("build_structure_cost: cloud/feature length mismatch");
    Eigen::MatrixXd nf = normalized_rows(features);
    const Eigen::Index n = features.rows();
    Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = i + 1; k < n; ++k) {
            double de = euclid_structure_distance(cloud[static_cast<int>(i)],
                                                  cloud[static_cast<int>(k)]);
            double df = (nf.row(i) - nf.row(k)).norm();
            double v = lambda * de + (1.0 - lambda) * df;
            cost(i, k) = v;
            cost(k, i) = v;
        }
    }
    return cost;
}

CostBundle build_cost_bundle(const PointCloud& cloud_p, const PointCloud& cloud_q,
                             const Eigen::MatrixXd& Fp, const Eigen::MatrixXd& Fq, double lambda) {
    CostBundle bundle;
    bundle.cross = build_cross_cost(Fp, Fq);
    bundle.struct_p = build_structure_cost(cloud_p, Fp, lambda);
    bundle.struct_q = build_structure_cost(cloud_q, Fq, lambda);
    bundle.lambda = lambda;
    return bundle;
}

Eigen::MatrixXd gw_term(const Eigen::MatrixXd& struct_p, const Eigen::MatrixXd& struct_q,
                        const Eigen::MatrixXd& coupling) {
    const Eigen::Index n = struct_p.rows();
    const Eigen::Index m = struct_q.rows();
    if (struct_p.cols() != n || struct_q.cols() != m)
        throw ShapeError("gw_term: structure matrices must be square");
    if (coupling.rows() != n || coupling.cols() != m)
        throw ShapeError("gw_term: coupling shape mismatch");

    Eigen::VectorXd a = coupling.rowwise().sum();
    Eigen::VectorXd b = coupling.colwise().sum();
    Eigen::VectorXd p_sq = struct_p.array().square().matrix().transpose() * a;  // length N
    Eigen::VectorXd q_sq = struct_q.array().square().matrix().transpose() * b;  // length M
    return p_sq * Eigen::RowVectorXd::Ones(m) + Eigen::VectorXd::Ones(n) * q_sq.transpose() -
           2.0 * struct_p.transpose() * coupling * struct_q;
}

double gw_objective(const Eigen::MatrixXd& struct_p, const Eigen::MatrixXd& struct_q,
                    const Eigen::MatrixXd& coupling) {
    return gw_term(struct_p, struct_q, coupling).cwiseProduct(coupling).sum();
}

}  // namespace otreg
