#pragma once

#include <Eigen/Core>
#include <functional>

#include "otreg/costs.hpp"

namespace otreg {

/// Per-point masses in [0,1] acting as transport marginals.
struct OverlapScores {
    Eigen::VectorXd weights;

    /// Throws DomainError if any entry lies outside [0,1] or is non-finite.
    void validate() const;
    double total_mass() const { return weights.sum(); }
};

/// Hyperparameters of the coupled transport solver.
struct SolverConfig {
    double xi1 = 1.0;          // pointwise (cross-cost) weight
    double xi2_final = 1.0;    // structural weight reached at the last outer iteration
    double tau = 5.0;          // marginal KL relaxation weight
    double epsilon = 0.001;    // entropic / proximal regularization
    int outer_iters = 20;      // N_O
    int inner_iters = 100;     // N_I
    double gamma_floor = 1e-30;
    bool ramp_xi2 = true;      // xi2 = (k / N_O) * xi2_final at outer iteration k
    bool inner_early_exit = false;
    double inner_early_exit_tol = 1e-9;

    void validate() const;
};

/// Dual potentials; kept across outer iterations as a warm start.
struct SinkhornState {
    Eigen::VectorXd u;
    Eigen::VectorXd v;
};

/// Generalized KL: sum a_i log(a_i/b_i) - a_i + b_i, with 0 log 0 = 0.
/// Requires a >= 0 elementwise and b > 0 elementwise.
double kl_divergence(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Proximal-point linearized cost:
///   C = xi1 * cross + xi2_now * H(struct_p, struct_q, coupling_prev)
///       - epsilon * log(max(coupling_prev, gamma_floor)).
Eigen::MatrixXd proximal_cost(const CostBundle& bundle, const Eigen::MatrixXd& coupling_prev,
                              const SolverConfig& config, double xi2_now);

struct SinkhornOptions {
    double gamma_floor = 1e-30;
    bool early_exit = false;
    double early_exit_tol = 1e-9;
};

/// Unbalanced entropic transport by alternating dual updates (u on even inner
/// steps, v on odd), all in the log domain. Starts from state->u/v when
/// provided (zeros otherwise) and writes the final duals back.
/// Returns B(u,v) = diag(e^{u/eps}) e^{-C/eps} diag(e^{v/eps}).
Eigen::MatrixXd sinkhorn_unbalanced(const Eigen::MatrixXd& cost, const Eigen::VectorXd& mu_p,
                                    const Eigen::VectorXd& mu_q, double epsilon, double tau,
                                    int n_iters, SinkhornState* state = nullptr,
                                    const SinkhornOptions& options = {});

/// Unconstrained transport objective
///   xi1 <cross, G> + xi2 <H(G), G> + tau (KL(G1|mu_p) + KL(G^T 1|mu_q)).
double coupled_objective(const CostBundle& bundle, const Eigen::MatrixXd& coupling,
                         const Eigen::VectorXd& mu_p, const Eigen::VectorXd& mu_q, double xi1,
                         double xi2, double tau, double gamma_floor = 1e-30);

/// One diagnostic line per outer iteration.
struct OuterTraceRow {
    int iteration = 0;
    double xi2 = 0.0;
    double objective = 0.0;
    double kl_row = 0.0;
    double kl_col = 0.0;
};

using TraceSink = std::function<void(const OuterTraceRow&)>;

/// Full coupled solve: proximal-point outer loop around the unbalanced
/// Sinkhorn inner loop, initialized with coupling mu_p * mu_q^T and
/// warm-started duals. Throws InfeasibleInstanceError when either score
/// vector carries no mass.
Eigen::MatrixXd solve_coupled_ot(const CostBundle& bundle, const OverlapScores& mu_p,
                                 const OverlapScores& mu_q, const SolverConfig& config,
                                 const TraceSink& trace = nullptr);

/// Indices of the row-wise maximum (ties to the lowest column).
std::vector<int> row_argmax(const Eigen::MatrixXd& m);

}  // namespace otreg
