#include "otreg/otsolve.hpp"

#include <cmath>
#include <limits>

#include "otreg/error.hpp"

namespace otreg {
namespace {

Eigen::VectorXd clamped_log(const Eigen::VectorXd& v, double floor) {
    return v.cwiseMax(floor).array().log().matrix();
}

// For each row i: log sum_j exp(kernel(i,j) + shift(j)).
Eigen::VectorXd lse_rows(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& shift) {
    Eigen::MatrixXd t = kernel.rowwise() + shift.transpose();
    Eigen::VectorXd m = t.rowwise().maxCoeff();
    return m.array() + (t.colwise() - m).array().exp().rowwise().sum().log();
}

// For each column j: log sum_i exp(kernel(i,j) + shift(i)).
Eigen::VectorXd lse_cols(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& shift) {
    Eigen::MatrixXd t = kernel.colwise() + shift;
    Eigen::RowVectorXd m = t.colwise().maxCoeff();
    return (m.array() + (t.rowwise() - m).array().exp().colwise().sum().log()).transpose();
}

}  // namespace

void OverlapScores::validate() const {
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
        double w = weights[i];
        if (!std::isfinite(w) || w < 0.0 || w > 1.0)
            throw DomainError("overlap score outside [0,1]");
    }
}

void SolverConfig::validate() const {
    if (tau <= 0.0 || epsilon <= 0.0) throw DomainError("SolverConfig: tau and epsilon must be positive");
    if (outer_iters < 1 || inner_iters < 1) throw DomainError("SolverConfig: iteration counts must be >= 1");
    if (gamma_floor <= 0.0) throw DomainError("SolverConfig: gamma_floor must be positive");
    if (xi1 < 0.0 || xi2_final < 0.0) throw DomainError("SolverConfig: xi weights must be non-negative");
}

double kl_divergence(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) throw DomainError("kl_divergence: length mismatch");
    double sum = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        if (a[i] < 0.0) throw DomainError("kl_divergence: negative entry in a");
        if (b[i] <= 0.0) throw DomainError("kl_divergence: non-positive entry in b");
        double term = -a[i] + b[i];
        if (a[i] > 0.0) term += a[i] * std::log(a[i] / b[i]);  // 0 log 0 = 0
        sum += term;
    }
    return sum;
}

Eigen::MatrixXd proximal_cost(const CostBundle& bundle, const Eigen::MatrixXd& coupling_prev,
                              const SolverConfig& config, double xi2_now) {
    if (coupling_prev.rows() != bundle.cross.rows() || coupling_prev.cols() != bundle.cross.cols())
        throw ShapeError("proximal_cost: coupling/cost shape mismatch");
    Eigen::MatrixXd cost = config.xi1 * bundle.cross;
    if (xi2_now != 0.0) cost += xi2_now * gw_term(bundle.struct_p, bundle.struct_q, coupling_prev);
    cost -= config.epsilon *
            coupling_prev.cwiseMax(config.gamma_floor).array().log().matrix();
    return cost;
}

Eigen::MatrixXd sinkhorn_unbalanced(const Eigen::MatrixXd& cost, const Eigen::VectorXd& mu_p,
                                    const Eigen::VectorXd& mu_q, double epsilon, double tau,
                                    int n_iters, SinkhornState* state,
                                    const SinkhornOptions& options) {
    if (!cost.allFinite()) throw DomainError("sinkhorn_unbalanced: non-finite cost entries");
    if (mu_p.size() != cost.rows() || mu_q.size() != cost.cols())
        throw ShapeError("sinkhorn_unbalanced: marginal lengths do not match cost");
    if (epsilon <= 0.0 || tau <= 0.0) throw DomainError("sinkhorn_unbalanced: epsilon, tau > 0 required");

    const Eigen::Index n = cost.rows(), m = cost.cols();
    const Eigen::MatrixXd kernel = (-cost / epsilon);
    const Eigen::VectorXd log_mu_p = clamped_log(mu_p, options.gamma_floor);
    const Eigen::VectorXd log_mu_q = clamped_log(mu_q, options.gamma_floor);
    const double damp = epsilon * tau / (epsilon + tau);

    Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(m);
    if (state != nullptr && state->u.size() == n && state->v.size() == m) {
        u = state->u;
        v = state->v;
    }

    double last_u_step = std::numeric_limits<double>::infinity();
    double last_v_step = std::numeric_limits<double>::infinity();
    for (int it = 0; it < n_iters; ++it) {
        if (it % 2 == 0) {
            // u-update: the log of a = B(u,v) 1 cancels the old u.
            Eigen::VectorXd u_new = damp * (log_mu_p - lse_rows(kernel, v / epsilon));
            last_u_step = (u_new - u).cwiseAbs().maxCoeff();
            u = std::move(u_new);
        } else {
            Eigen::VectorXd v_new = damp * (log_mu_q - lse_cols(kernel, u / epsilon));
            last_v_step = (v_new - v).cwiseAbs().maxCoeff();
            v = std::move(v_new);
        }
        if (options.early_exit && it >= 1 &&
            std::max(last_u_step, last_v_step) < options.early_exit_tol) {
            break;
        }
    }

    if (state != nullptr) {
        state->u = u;
        state->v = v;
    }
    Eigen::MatrixXd log_gamma = kernel;
    log_gamma.colwise() += u / epsilon;
    log_gamma.rowwise() += (v / epsilon).transpose();
    return log_gamma.array().exp();
}

double coupled_objective(const CostBundle& bundle, const Eigen::MatrixXd& coupling,
                         const Eigen::VectorXd& mu_p, const Eigen::VectorXd& mu_q, double xi1,
                         double xi2, double tau, double gamma_floor) {
    if (coupling.rows() != bundle.cross.rows() || coupling.cols() != bundle.cross.cols())
        throw ShapeError("coupled_objective: coupling/cost shape mismatch");
    double obj = xi1 * bundle.cross.cwiseProduct(coupling).sum();
    if (xi2 != 0.0) obj += xi2 * gw_objective(bundle.struct_p, bundle.struct_q, coupling);
    Eigen::VectorXd row = coupling.rowwise().sum();
    Eigen::VectorXd col = coupling.colwise().sum();
    obj += tau * (kl_divergence(row, mu_p.cwiseMax(gamma_floor)) +
                  kl_divergence(col, mu_q.cwiseMax(gamma_floor)));
    return obj;
}

Eigen::MatrixXd solve_coupled_ot(const CostBundle& bundle, const OverlapScores& mu_p,
                                 const OverlapScores& mu_q, const SolverConfig& config,
                                 const TraceSink& trace) {
    config.validate();
    mu_p.validate();
    mu_q.validate();
    if (mu_p.weights.size() != bundle.cross.rows() || mu_q.weights.size() != bundle.cross.cols())
        throw ShapeError("solve_coupled_ot: score lengths do not match cost bundle");
    if (mu_p.total_mass() <= 0.0 || mu_q.total_mass() <= 0.0)
        throw InfeasibleInstanceError("solve_coupled_ot: zero total mass in overlap scores");

    Eigen::MatrixXd coupling = mu_p.weights * mu_q.weights.transpose();
    SinkhornState state;
    state.u = Eigen::VectorXd::Zero(bundle.cross.rows());
    state.v = Eigen::VectorXd::Zero(bundle.cross.cols());

    SinkhornOptions options;
    options.gamma_floor = config.gamma_floor;
    options.early_exit = config.inner_early_exit;
    options.early_exit_tol = config.inner_early_exit_tol;

    for (int k = 0; k < config.outer_iters; ++k) {
        double xi2 = config.ramp_xi2
                         ? (static_cast<double>(k) / config.outer_iters) * config.xi2_final
                         : config.xi2_final;
        Eigen::MatrixXd cost = proximal_cost(bundle, coupling, config, xi2);
        coupling = sinkhorn_unbalanced(cost, mu_p.weights, mu_q.weights, config.epsilon,
                                       config.tau, config.inner_iters, &state, options);
        if (trace) {
            OuterTraceRow row;
            row.iteration = k;
            row.xi2 = xi2;
            row.objective = coupled_objective(bundle, coupling, mu_p.weights, mu_q.weights,
                                              config.xi1, xi2, config.tau, config.gamma_floor);
            row.kl_row = kl_divergence(coupling.rowwise().sum(),
                                       mu_p.weights.cwiseMax(config.gamma_floor));
            row.kl_col = kl_divergence(coupling.colwise().sum().transpose(),
                                       mu_q.weights.cwiseMax(config.gamma_floor));
            trace(row);
        }
    }
    return coupling;
}

std::vector<int> row_argmax(const Eigen::MatrixXd& m) {
    std::vector<int> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        int best = 0;
        for (Eigen::Index j = 1; j < m.cols(); ++j) {
            if (m(i, j) > m(i, best)) best = static_cast<int>(j);
        }
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

}  // namespace otreg
