#include "rtadapt/ipm.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

namespace rtadapt {

namespace {

double constraint_value(const IpmConstraint& c, const VectorXd& z, int nx) {
    double v = c.constant;
    if (c.quad) v += c.quad->value(z.head(nx));
    for (const auto& [i, coef] : c.linear) v += coef * z(i);
    return v;
}

}  // namespace

// Primal-dual interior-point iteration. Primal feasibility (strictly
// positive slacks) is maintained exactly throughout; the dual variables
// follow the perturbed complementarity conditions nu_j * s_j = tau with tau
// driven to zero. Quadratic constraints enter the Newton matrix through both
// their curvature (nu-weighted) and their gradient outer products.
IpmResult solve_ipm(const IpmProblem& problem, const VectorXd& z0, const SolverSettings& settings) {
    const int nx = problem.nx;
    const int nz = problem.nz;
    const int m_ineq = static_cast<int>(problem.constraints.size());
    const int m_lo = static_cast<int>(problem.nonneg.size());
    const int m_up = static_cast<int>(problem.upper.size());
    const int m_total = m_ineq + m_lo + m_up;
    if (z0.size() != nz) throw std::invalid_argument("ipm: start point has wrong dimension");

    VectorXd z = z0;

    auto objective_value = [&](const VectorXd& p) {
        double v = problem.objective_constant;
        if (problem.objective_quad) v += problem.objective_quad->value(p.head(nx));
        for (const auto& [i, coef] : problem.objective_linear) v += coef * p(i);
        return v;
    };

    // Strict feasibility of the start point is the caller's contract.
    VectorXd slack(m_ineq);
    for (int j = 0; j < m_ineq; ++j) {
        slack(j) = -constraint_value(problem.constraints[j], z, nx);
        if (slack(j) <= 0.0)
            throw std::invalid_argument("ipm: start point is not strictly feasible");
    }
    for (int i : problem.nonneg)
        if (z(i) <= 0.0) throw std::invalid_argument("ipm: start point violates a bound");
    for (const auto& [i, cap] : problem.upper)
        if (z(i) >= cap) throw std::invalid_argument("ipm: start point violates an upper bound");

    // Dual start: reciprocal slacks, capped away from extremes.
    auto clamp_dual = [](double v) { return std::clamp(v, 1e-8, 1e12); };
    VectorXd nu(m_ineq);
    for (int j = 0; j < m_ineq; ++j) nu(j) = clamp_dual(1.0 / slack(j));
    VectorXd nu_lo(m_lo), nu_up(m_up);
    for (int k = 0; k < m_lo; ++k) nu_lo(k) = clamp_dual(1.0 / z(problem.nonneg[k]));
    for (int k = 0; k < m_up; ++k)
        nu_up(k) = clamp_dual(1.0 / (problem.upper[k].second - z(problem.upper[k].first)));

    SolverDiagnostics diag;

    std::vector<VectorXd> grad_x(m_ineq);  // x-block gradients of quad constraints
    VectorXd obj_grad = VectorXd::Zero(nz);

    auto refresh_gradients = [&](const VectorXd& p) {
        obj_grad.setZero();
        if (problem.objective_quad)
            obj_grad.head(nx) = problem.objective_quad->gradient(p.head(nx));
        for (const auto& [i, coef] : problem.objective_linear) obj_grad(i) += coef;
        for (int j = 0; j < m_ineq; ++j)
            if (problem.constraints[j].quad)
                grad_x[j] = problem.constraints[j].quad->gradient(p.head(nx));
    };

    auto dual_residual = [&](const VectorXd& p, const VectorXd& nu_c, const VectorXd& lo,
                             const VectorXd& up) {
        // Assumes refresh_gradients(p) was called.
        VectorXd r = obj_grad;
        for (int j = 0; j < m_ineq; ++j) {
            const IpmConstraint& c = problem.constraints[j];
            if (c.quad) r.head(nx) += nu_c(j) * grad_x[j];
            for (const auto& [i, coef] : c.linear) r(i) += nu_c(j) * coef;
        }
        for (int k = 0; k < m_lo; ++k) r(problem.nonneg[k]) -= lo(k);
        for (int k = 0; k < m_up; ++k) r(problem.upper[k].first) += up(k);
        return r;
    };

    auto surrogate_gap = [&](const VectorXd& s, const VectorXd& nu_c, const VectorXd& lo,
                             const VectorXd& up, const VectorXd& p) {
        double eta = s.dot(nu_c);
        for (int k = 0; k < m_lo; ++k) eta += lo(k) * p(problem.nonneg[k]);
        for (int k = 0; k < m_up; ++k) eta += up(k) * (problem.upper[k].second - p(problem.upper[k].first));
        return eta;
    };

    MatrixXd m(nz, nz);
    VectorXd rhs(nz);
    VectorXd dz(nz);

    const double grad_scale_floor = 1.0;
    bool done = false;

    const bool trace = std::getenv("RTADAPT_IPM_TRACE") != nullptr;
    int stalls = 0;
    while (diag.newton_steps < settings.max_newton_total && !done) {
        ++diag.newton_steps;
        refresh_gradients(z);
        const double f0 = objective_value(z);
        const VectorXd r_dual = dual_residual(z, nu, nu_lo, nu_up);
        const double eta = surrogate_gap(slack, nu, nu_lo, nu_up, z);
        const double obj_grad_norm = std::max(1.0, obj_grad.lpNorm<Eigen::Infinity>());

        diag.duality_gap_rel = eta / (1.0 + std::abs(f0));
        diag.kkt_stationarity = r_dual.lpNorm<Eigen::Infinity>() / (1.0 + obj_grad_norm);
        // The dual residual must fall with the gap: a loose residual times a
        // large multiplier norm would void the suboptimality certificate.
        if (diag.duality_gap_rel <= settings.gap_tol_rel &&
            diag.kkt_stationarity <= std::max(10.0 * settings.gap_tol_rel, 1e-11)) {
            done = true;
            break;
        }

        // Newton matrix shared by the predictor and corrector passes.
        m.setZero();
        if (problem.objective_quad) m.topLeftCorner(nx, nx) += 2.0 * problem.objective_quad->Q;
        for (int j = 0; j < m_ineq; ++j) {
            const IpmConstraint& c = problem.constraints[j];
            const double w_outer = nu(j) / slack(j);
            if (c.quad) {
                m.topLeftCorner(nx, nx).selfadjointView<Eigen::Lower>().rankUpdate(grad_x[j],
                                                                                   w_outer);
                m.topLeftCorner(nx, nx) += (2.0 * nu(j)) * c.quad->Q;
                for (const auto& [i, coef] : c.linear)
                    m.row(i).head(nx) += (coef * w_outer) * grad_x[j].transpose();
            }
            for (const auto& [i, coef] : c.linear)
                for (const auto& [i2, coef2] : c.linear) {
                    if (i2 > i) continue;
                    m(i, i2) += coef * coef2 * w_outer;
                }
        }
        for (int k = 0; k < m_lo; ++k) {
            const int i = problem.nonneg[k];
            m(i, i) += nu_lo(k) / z(i);
        }
        for (int k = 0; k < m_up; ++k) {
            const auto& [i, cap] = problem.upper[k];
            m(i, i) += nu_up(k) / (cap - z(i));
        }

        // Jacobi-equilibrate before factoring: the diagonal spans many orders
        // of magnitude near convergence, and a ridge or refinement threshold
        // is only meaningful on the scaled matrix. Refinement runs against
        // the unridged scaled matrix until it stagnates.
        const MatrixXd m_sym = m.selfadjointView<Eigen::Lower>();
        VectorXd equil(nz);
        for (int i = 0; i < nz; ++i) equil(i) = 1.0 / std::sqrt(std::max(m_sym(i, i), 1e-300));
        const MatrixXd m_eq = equil.asDiagonal() * m_sym * equil.asDiagonal();
        Eigen::LDLT<MatrixXd, Eigen::Lower> ldlt;
        {
            double ridge = 1e-14;
            bool factored = false;
            for (int attempt = 0; attempt < 10 && !factored; ++attempt) {
                MatrixXd h = m_eq;
                h.diagonal().array() += ridge;
                ldlt.compute(h);
                factored = ldlt.info() == Eigen::Success;
                ridge *= 100.0;
            }
            if (!factored) throw SolverError("ipm: Newton matrix could not be factored", diag);
        }
        auto solve_refined = [&](const VectorXd& b) {
            const VectorXd b_eq = equil.asDiagonal() * b;
            VectorXd y = ldlt.solve(b_eq);
            double best_res = std::numeric_limits<double>::infinity();
            VectorXd best_y = y;
            for (int refine = 0; refine < 12; ++refine) {
                const VectorXd residual = b_eq - m_eq * y;
                const double res_norm = residual.lpNorm<Eigen::Infinity>();
                if (res_norm < best_res) {
                    best_res = res_norm;
                    best_y = y;
                } else {
                    break;
                }
                if (res_norm <= 1e-15 * (1.0 + b_eq.lpNorm<Eigen::Infinity>())) break;
                y += ldlt.solve(residual);
            }
            VectorXd x = equil.asDiagonal() * best_y;
            if (!x.allFinite()) throw SolverError("ipm: Newton solve produced non-finite step", diag);
            return x;
        };

        // One direction for a given centering target tau and per-constraint
        // complementarity corrections.
        struct Direction {
            VectorXd dz, dnu, dnu_lo, dnu_up;
            VectorXd slack_lin, slack_quad;  // slack change coefficients along dz
        };
        auto compute_direction = [&](double tau, const VectorXd& corr, const VectorXd& corr_lo,
                                     const VectorXd& corr_up) {
            Direction d;
            rhs = -obj_grad;
            for (int j = 0; j < m_ineq; ++j) {
                const IpmConstraint& c = problem.constraints[j];
                const double w_rhs = (tau - corr(j)) / slack(j);
                if (c.quad) rhs.head(nx) -= w_rhs * grad_x[j];
                for (const auto& [i, coef] : c.linear) rhs(i) -= w_rhs * coef;
            }
            for (int k = 0; k < m_lo; ++k) rhs(problem.nonneg[k]) += (tau - corr_lo(k)) / z(problem.nonneg[k]);
            for (int k = 0; k < m_up; ++k) {
                const auto& [i, cap] = problem.upper[k];
                rhs(i) -= (tau - corr_up(k)) / (cap - z(i));
            }
            d.dz = solve_refined(rhs);
            d.slack_lin.resize(m_ineq);
            d.slack_quad.resize(m_ineq);
            d.dnu.resize(m_ineq);
            for (int j = 0; j < m_ineq; ++j) {
                const IpmConstraint& c = problem.constraints[j];
                double lin = 0.0;
                double quad = 0.0;
                if (c.quad) {
                    lin += grad_x[j].dot(d.dz.head(nx));
                    quad = d.dz.head(nx).dot(c.quad->Q * d.dz.head(nx));
                }
                for (const auto& [i, coef] : c.linear) lin += coef * d.dz(i);
                d.slack_lin(j) = lin;
                d.slack_quad(j) = quad;
                d.dnu(j) = (tau - corr(j) - nu(j) * slack(j) + nu(j) * lin) / slack(j);
            }
            d.dnu_lo.resize(m_lo);
            for (int k = 0; k < m_lo; ++k) {
                const int i = problem.nonneg[k];
                d.dnu_lo(k) = (tau - corr_lo(k) - nu_lo(k) * z(i) - nu_lo(k) * d.dz(i)) / z(i);
            }
            d.dnu_up.resize(m_up);
            for (int k = 0; k < m_up; ++k) {
                const auto& [i, cap] = problem.upper[k];
                d.dnu_up(k) = (tau - corr_up(k) - nu_up(k) * (cap - z(i)) + nu_up(k) * d.dz(i)) /
                              (cap - z(i));
            }
            return d;
        };

        auto max_step = [&](const Direction& d) {
            double beta = 1.0;
            for (int j = 0; j < m_ineq; ++j)
                if (d.dnu(j) < 0.0) beta = std::min(beta, -nu(j) / d.dnu(j));
            for (int k = 0; k < m_lo; ++k)
                if (d.dnu_lo(k) < 0.0) beta = std::min(beta, -nu_lo(k) / d.dnu_lo(k));
            for (int k = 0; k < m_up; ++k)
                if (d.dnu_up(k) < 0.0) beta = std::min(beta, -nu_up(k) / d.dnu_up(k));
            for (int j = 0; j < m_ineq; ++j) {
                double hit = std::numeric_limits<double>::infinity();
                if (d.slack_quad(j) > 0.0) {
                    const double disc =
                        d.slack_lin(j) * d.slack_lin(j) + 4.0 * d.slack_quad(j) * slack(j);
                    hit = (-d.slack_lin(j) + std::sqrt(std::max(0.0, disc))) /
                          (2.0 * d.slack_quad(j));
                } else if (d.slack_lin(j) > 0.0) {
                    hit = slack(j) / d.slack_lin(j);
                }
                beta = std::min(beta, hit);
            }
            for (int k = 0; k < m_lo; ++k) {
                const int i = problem.nonneg[k];
                if (d.dz(i) < 0.0) beta = std::min(beta, -z(i) / d.dz(i));
            }
            for (int k = 0; k < m_up; ++k) {
                const auto& [i, cap] = problem.upper[k];
                if (d.dz(i) > 0.0) beta = std::min(beta, (cap - z(i)) / d.dz(i));
            }
            return beta;
        };

        // Predictor: pure Newton direction toward complementarity zero.
        const VectorXd zero_corr = VectorXd::Zero(m_ineq);
        const VectorXd zero_lo = VectorXd::Zero(m_lo);
        const VectorXd zero_up = VectorXd::Zero(m_up);
        const Direction affine = compute_direction(0.0, zero_corr, zero_lo, zero_up);
        const double beta_aff = std::min(1.0, max_step(affine));

        // Complementarity the affine step would reach; sets the centering.
        double eta_aff = 0.0;
        for (int j = 0; j < m_ineq; ++j) {
            const double s_new = slack(j) - beta_aff * affine.slack_lin(j) -
                                 beta_aff * beta_aff * affine.slack_quad(j);
            eta_aff += std::max(0.0, s_new) * std::max(0.0, nu(j) + beta_aff * affine.dnu(j));
        }
        for (int k = 0; k < m_lo; ++k) {
            const int i = problem.nonneg[k];
            eta_aff += std::max(0.0, z(i) + beta_aff * affine.dz(i)) *
                       std::max(0.0, nu_lo(k) + beta_aff * affine.dnu_lo(k));
        }
        for (int k = 0; k < m_up; ++k) {
            const auto& [i, cap] = problem.upper[k];
            eta_aff += std::max(0.0, cap - z(i) - beta_aff * affine.dz(i)) *
                       std::max(0.0, nu_up(k) + beta_aff * affine.dnu_up(k));
        }
        const double sigma = std::clamp(std::pow(eta_aff / eta, 3.0), 1e-4, 0.8);
        const double tau = sigma * eta / std::max(1, m_total);

        // Corrector: re-solve with centering plus the second-order
        // complementarity products of the affine step.
        VectorXd corr(m_ineq), corr_lo(m_lo), corr_up(m_up);
        for (int j = 0; j < m_ineq; ++j)
            corr(j) = (-affine.slack_lin(j) - affine.slack_quad(j)) * affine.dnu(j);
        for (int k = 0; k < m_lo; ++k) corr_lo(k) = affine.dz(problem.nonneg[k]) * affine.dnu_lo(k);
        for (int k = 0; k < m_up; ++k)
            corr_up(k) = -affine.dz(problem.upper[k].first) * affine.dnu_up(k);
        Direction dir = compute_direction(tau, corr, corr_lo, corr_up);

        double beta = 0.99 * std::min(1.0, max_step(dir));
        if (!std::isfinite(beta) || beta <= 1e-12) {
            // Corrector blocked at the boundary; fall back to the damped
            // predictor before giving up.
            dir = affine;
            beta = 0.5 * beta_aff;
        }

        // Safeguard: the combined residual must not blow up.
        auto residual_norm = [&](const VectorXd& p, const VectorXd& nu_c, const VectorXd& lo,
                                 const VectorXd& up, double tau_target) {
            refresh_gradients(p);
            const VectorXd rd = dual_residual(p, nu_c, lo, up);
            double norm2 = rd.squaredNorm() / (obj_grad_norm * obj_grad_norm);
            for (int j = 0; j < m_ineq; ++j) {
                const double s_j = -constraint_value(problem.constraints[j], p, nx);
                const double rc = nu_c(j) * s_j - tau_target;
                norm2 += rc * rc;
            }
            for (int k = 0; k < m_lo; ++k) {
                const double rc = lo(k) * p(problem.nonneg[k]) - tau_target;
                norm2 += rc * rc;
            }
            for (int k = 0; k < m_up; ++k) {
                const double rc =
                    up(k) * (problem.upper[k].second - p(problem.upper[k].first)) - tau_target;
                norm2 += rc * rc;
            }
            return std::sqrt(norm2);
        };
        const double base_norm = residual_norm(z, nu, nu_lo, nu_up, tau);
        bool accepted = false;
        for (int bt = 0; bt < settings.max_backtracks; ++bt) {
            const VectorXd z_try = z + beta * dir.dz;
            bool feasible = true;
            for (int j = 0; j < m_ineq && feasible; ++j)
                feasible = -constraint_value(problem.constraints[j], z_try, nx) > 0.0;
            for (int k = 0; k < m_lo && feasible; ++k) feasible = z_try(problem.nonneg[k]) > 0.0;
            for (int k = 0; k < m_up && feasible; ++k)
                feasible = z_try(problem.upper[k].first) < problem.upper[k].second;
            if (feasible) {
                const VectorXd nu_try = (nu + beta * dir.dnu).cwiseMax(0.0);
                const VectorXd lo_try = (nu_lo + beta * dir.dnu_lo).cwiseMax(0.0);
                const VectorXd up_try = (nu_up + beta * dir.dnu_up).cwiseMax(0.0);
                if (residual_norm(z_try, nu_try, lo_try, up_try, tau) <= 10.0 * base_norm) {
                    z = z_try;
                    nu = nu_try;
                    nu_lo = lo_try;
                    nu_up = up_try;
                    accepted = true;
                    break;
                }
            }
            beta *= 0.5;
        }
        if (trace)
            std::fprintf(stderr, "ipm it=%d eta=%.3e rdual=%.3e sigma=%.2e beta=%.3e acc=%d\n",
                         diag.newton_steps, eta, diag.kkt_stationarity, sigma, beta,
                         accepted ? 1 : 0);
        if (!accepted || beta <= 1e-13) {
            if (++stalls >= 3) break;  // converged as far as the arithmetic allows
        } else {
            stalls = 0;
        }
        if (accepted)
            for (int j = 0; j < m_ineq; ++j)
                slack(j) = -constraint_value(problem.constraints[j], z, nx);
    }

    if (!done) {
        // The iteration may have stopped at the numerical floor; accept the
        // point if it satisfies the requested tolerances outright.
        refresh_gradients(z);
        const double f0 = objective_value(z);
        const VectorXd r_dual = dual_residual(z, nu, nu_lo, nu_up);
        const double eta = surrogate_gap(slack, nu, nu_lo, nu_up, z);
        diag.duality_gap_rel = eta / (1.0 + std::abs(f0));
        diag.kkt_stationarity = r_dual.lpNorm<Eigen::Infinity>() /
                                (1.0 + std::max(1.0, obj_grad.lpNorm<Eigen::Infinity>()));
        done = diag.duality_gap_rel <= 10.0 * settings.gap_tol_rel &&
               diag.kkt_stationarity <= settings.stationarity_tol;
    }

    // Final diagnostics from the true residuals.
    refresh_gradients(z);
    const VectorXd r_dual = dual_residual(z, nu, nu_lo, nu_up);
    diag.kkt_stationarity =
        r_dual.lpNorm<Eigen::Infinity>() / (1.0 + obj_grad.lpNorm<Eigen::Infinity>());
    diag.max_constraint_violation = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < m_ineq; ++j)
        diag.max_constraint_violation =
            std::max(diag.max_constraint_violation, constraint_value(problem.constraints[j], z, nx));
    diag.converged = done && diag.kkt_stationarity <= settings.stationarity_tol;

    IpmResult result;
    result.z = z;
    result.objective = objective_value(z);
    result.constraint_multipliers = nu;
    result.bound_multipliers = nu_lo;
    result.diag = diag;

    if (!diag.converged) {
        throw SolverError("ipm: did not converge (gap " + std::to_string(diag.duality_gap_rel) +
                              ", stationarity " + std::to_string(diag.kkt_stationarity) + ", " +
                              std::to_string(diag.newton_steps) + " iterations)",
                          diag);
    }
    return result;
}

}  // namespace rtadapt
