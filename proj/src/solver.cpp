#include "rtadapt/solver.hpp"

#include <Eigen/QR>

#include <cstdlib>
#include <cstdio>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rtadapt {

double cvar_discrete(const Eigen::Ref<const VectorXd>& values,
                     const Eigen::Ref<const VectorXd>& probs, double alpha) {
    if (values.size() != probs.size() || values.size() == 0)
        throw std::invalid_argument("cvar: values and probabilities must match and be nonempty");
    if (alpha <= 0.0 || alpha > 1.0) throw std::invalid_argument("cvar: alpha must lie in (0, 1]");
    if ((probs.array() < -1e-12).any() || std::abs(probs.sum() - 1.0) > 1e-9)
        throw std::invalid_argument("cvar: probabilities must be nonnegative and sum to 1");

    std::vector<int> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return values(a) > values(b); });

    double remaining = 1.0;
    double total = 0.0;
    for (int i : order) {
        const double take = std::min(probs(i) / alpha, remaining);
        total += take * values(i);
        remaining -= take;
        if (remaining <= 1e-15) break;
    }
    return total;
}

namespace {

/// Grid steps of the systematic scenario shifts; rejects off-grid shifts.
std::vector<long> systematic_steps(const RobustProblem& problem) {
    const double h = problem.phantom->grid().spacing;
    std::vector<long> steps(problem.systematic.size());
    for (int s = 0; s < problem.systematic.size(); ++s) {
        const double step = problem.systematic.shifts(s) / h;
        steps[s] = std::lround(step);
        if (std::abs(step - static_cast<double>(steps[s])) > 1e-9)
            throw std::invalid_argument("systematic scenario shifts must lie on the grid spacing");
    }
    return steps;
}

void validate_problem(const RobustProblem& problem) {
    if (!problem.phantom) throw std::invalid_argument("robust problem has no phantom");
    if (problem.alpha <= 0.0 || problem.alpha > 1.0)
        throw std::invalid_argument("alpha must lie in (0, 1]");
    if (problem.systematic.size() == 0 || problem.sigma_set.size() == 0)
        throw std::invalid_argument("scenario sets must be nonempty");
    if (problem.fractions < 1) throw std::invalid_argument("fractions must be >= 1");
    if (std::abs(problem.systematic.probs.sum() - 1.0) > 1e-9 ||
        std::abs(problem.sigma_set.probs.sum() - 1.0) > 1e-9)
        throw std::invalid_argument("scenario probabilities must sum to 1");
}

/// Per-(systematic, sigma) expected-objective quadratics, scaled by
/// 1/f_scale so the interior-point solver works near unit magnitude.
struct ScaledForms {
    std::vector<std::vector<QuadraticForm>> forms;  // [s][u]
    double f_scale = 1.0;
};

ScaledForms assemble_forms(const RobustProblem& problem) {
    const ExpectedObjective objective(*problem.phantom, problem.spec);
    const std::vector<long> steps = systematic_steps(problem);
    const double h = problem.phantom->grid().spacing;
    const int ns = problem.systematic.size();
    const int nu = problem.sigma_set.size();

    ScaledForms out;
    out.forms.assign(ns, std::vector<QuadraticForm>(nu));
    for (int u = 0; u < nu; ++u) {
        const DiscreteScenarioSet per_fraction =
            discretize_normal(0.0, problem.sigma_set.sigmas(u), h, problem.scenario_half_width);
        std::vector<QuadraticForm> batch =
            objective.fraction_quadratics_grid(steps, per_fraction, problem.fractions);
        for (int s = 0; s < ns; ++s) out.forms[s][u] = std::move(batch[s]);
    }
    out.f_scale = std::max(1.0, out.forms[0][0].c);
    for (auto& row : out.forms)
        for (QuadraticForm& f : row) {
            f.Q /= out.f_scale;
            f.g /= out.f_scale;
            f.c /= out.f_scale;
        }
    return out;
}

/// Starting fluence of roughly prescription magnitude: uniform fluence whose
/// central dose matches the prescription.
double default_fluence_level(const Phantom& phantom, double prescription) {
    const double h = phantom.grid().spacing;
    double kernel_sum = 0.0;
    for (long m = -200; m <= 200; ++m) kernel_sum += phantom.kernel(static_cast<double>(m) * h);
    return std::max(1e-3, prescription / kernel_sum);
}

VectorXd starting_fluence(const Phantom& phantom, const ObjectiveSpec& spec,
                          const SolverSettings& settings, const VectorXd* warm_start,
                          double cap) {
    const double level = default_fluence_level(phantom, spec.prescription);
    VectorXd x0 = VectorXd::Constant(phantom.beamlet_count(), level);
    if (settings.warm_start && warm_start && warm_start->size() == x0.size()) {
        // Pull strictly inside the box; points on the boundary stall the
        // barrier method.
        x0 = 0.9 * warm_start->cwiseMax(0.0).cwiseMin(0.9 * cap) +
             (0.1 * level) * VectorXd::Ones(x0.size());
    }
    return x0;
}

// Upper fluence box. The modeled feasible set is only x >= 0; the box exists
// to keep the barrier subproblems bounded in the nearly-flat kernel null
// space. A solve whose fluence approaches the cap is rerun with a wider box,
// so the cap is never active at a returned solution.
constexpr double kFluenceCapFactor = 12.0;

bool cap_is_active(const VectorXd& x, double cap) { return x.maxCoeff() >= 0.9 * cap; }

double projected_gradient_norm(const QuadraticForm& form, const VectorXd& x) {
    const VectorXd grad = form.gradient(x);
    // Interior-point output leaves bound-active coordinates at a small
    // positive level (complementarity ~ gap), so classify with a tolerance
    // proportional to the fluence scale.
    const double active_tol = 1e-5 * (1.0 + x.lpNorm<Eigen::Infinity>());
    double norm = 0.0;
    for (int i = 0; i < x.size(); ++i) {
        const double pg = x(i) > active_tol ? grad(i) : std::min(grad(i), 0.0);
        norm = std::max(norm, std::abs(pg));
    }
    return norm;
}

/// Bound-constrained quadratic program min F(x) s.t. x >= 0 through the
/// interior-point path; F is pre-scaled internally.
struct QpResult {
    VectorXd x;
    double objective;
    SolverDiagnostics diag;
};

/// Active-set polish of an interior-point iterate: pins near-zero
/// coordinates to the bound and solves the free block exactly, which turns
/// an eps-interior solution into an exact KKT point when the guessed active
/// set is right. Falls back to the unpolished iterate otherwise.
VectorXd polish_nonneg(const QuadraticForm& form, const VectorXd& x_ipm) {
    const int n = static_cast<int>(x_ipm.size());
    const double active_tol = 1e-5 * (1.0 + x_ipm.lpNorm<Eigen::Infinity>());
    std::vector<bool> active(n);
    for (int i = 0; i < n; ++i) active[i] = x_ipm(i) <= active_tol;

    VectorXd x = x_ipm;
    for (int round = 0; round < 8; ++round) {
        std::vector<int> free_set;
        for (int i = 0; i < n; ++i)
            if (!active[i]) free_set.push_back(i);
        x.setZero();
        if (!free_set.empty()) {
            const int nf = static_cast<int>(free_set.size());
            MatrixXd qff(nf, nf);
            VectorXd gf(nf);
            for (int a = 0; a < nf; ++a) {
                gf(a) = form.g(free_set[a]);
                for (int b = 0; b < nf; ++b) qff(a, b) = form.Q(free_set[a], free_set[b]);
            }
            // The kernel Gram is numerically rank deficient; the minimum-norm
            // least-squares solution keeps the null modes out of the fluence.
            Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(qff);
            cod.setThreshold(1e-12);
            const VectorXd xf = cod.solve(gf);
            for (int a = 0; a < nf; ++a) x(free_set[a]) = xf(a);
        }
        bool changed = false;
        for (int i = 0; i < n; ++i)
            if (!active[i] && x(i) < 0.0) {
                active[i] = true;
                changed = true;
            }
        if (changed) continue;
        const VectorXd grad = form.gradient(x);
        for (int i = 0; i < n; ++i)
            if (active[i] && grad(i) < -1e-12 * (1.0 + grad.lpNorm<Eigen::Infinity>())) {
                active[i] = false;
                changed = true;
            }
        if (!changed) break;
    }
    if (std::getenv("RTADAPT_POLISH_TRACE")) {
        int n_active = 0;
        for (int i = 0; i < n; ++i) n_active += active[i] ? 1 : 0;
        const VectorXd grad = form.gradient(x);
        double worst_active = 0.0, worst_free = 0.0;
        for (int i = 0; i < n; ++i) {
            if (active[i]) worst_active = std::min(worst_active, grad(i));
            else worst_free = std::max(worst_free, std::abs(grad(i)));
        }
        std::fprintf(stderr, "polish: n_active=%d neg=%d worst_active_grad=%.3e worst_free=%.3e\n",
                     n_active, int((x.array() < 0.0).any()), worst_active, worst_free);
    }
    if ((x.array() < 0.0).any()) return x_ipm;

    // Keep whichever point has the better first-order certificate.
    auto pg_norm = [&](const VectorXd& p) {
        const VectorXd grad = form.gradient(p);
        const double tol = 1e-5 * (1.0 + p.lpNorm<Eigen::Infinity>());
        double norm = 0.0;
        for (int i = 0; i < n; ++i)
            norm = std::max(norm, std::abs(p(i) > tol ? grad(i) : std::min(grad(i), 0.0)));
        return norm;
    };
    return pg_norm(x) <= pg_norm(x_ipm) ? x : x_ipm;
}

QpResult solve_nonneg_qp(const QuadraticForm& form, const VectorXd& x0,
                         const SolverSettings& settings_in, double cap) {
    // The first-order contract is absolute in the unscaled objective, so
    // bound-constrained solves run to a tighter complementarity gap than the
    // epigraph problems need.
    SolverSettings settings = settings_in;
    settings.gap_tol_rel = std::min(settings.gap_tol_rel, 1e-12);
    const double f_scale = std::max(1.0, std::abs(form.c));
    QuadraticForm scaled{form.Q / f_scale, form.g / f_scale, form.c / f_scale};

    IpmProblem ipm;
    ipm.nx = static_cast<int>(x0.size());
    ipm.nz = ipm.nx;
    ipm.objective_quad = &scaled;
    ipm.nonneg.resize(ipm.nx);
    std::iota(ipm.nonneg.begin(), ipm.nonneg.end(), 0);

    for (int widen = 0;; ++widen) {
        ipm.upper.clear();
        for (int i = 0; i < ipm.nx; ++i) ipm.upper.emplace_back(i, cap);
        IpmResult res = solve_ipm(ipm, x0.cwiseMin(0.5 * cap), settings);
        if (!cap_is_active(res.z, cap) || widen == 3) {
            const VectorXd polished = polish_nonneg(scaled, res.z);
            return QpResult{polished, scaled.value(polished) * f_scale, res.diag};
        }
        cap *= 4.0;
    }
}

}  // namespace

Plan solve_nominal(const Phantom& phantom, const ObjectiveSpec& spec,
                   const SolverSettings& settings) {
    const ExpectedObjective objective(phantom, spec);
    const QuadraticForm form = objective.nominal_quadratic();
    const double cap = kFluenceCapFactor * default_fluence_level(phantom, spec.prescription);
    const VectorXd x0 = starting_fluence(phantom, spec, settings, nullptr, cap);
    QpResult res = solve_nonneg_qp(form, x0, settings, cap);

    const double pg = projected_gradient_norm(form, res.x);
    if (pg > 1e-6 * (1.0 + std::abs(res.objective)))
        throw SolverError("nominal solve missed first-order optimality (projected gradient " +
                              std::to_string(pg) + ")",
                          res.diag);

    Plan plan;
    plan.fluence = res.x;
    plan.provenance = Plan::Provenance::Nominal;
    plan.objective = res.objective;
    const Interval& ptv = phantom.roi_interval(RoiName::Ptv);
    const Interval& ctv = phantom.roi_interval(RoiName::Ctv);
    plan.margin_mm = std::max(ctv.lo - ptv.lo, ptv.hi - ctv.hi);
    return plan;
}

Solution solve_robust_full(const RobustProblem& problem, const SolverSettings& settings,
                           const VectorXd* warm_start) {
    validate_problem(problem);
    const int nx = problem.phantom->beamlet_count();
    const int ns = problem.systematic.size();
    const int nu = problem.sigma_set.size();
    const double alpha = problem.alpha;

    const ScaledForms scaled = assemble_forms(problem);

    // Variable layout: [x | lambda | mu_s | lambda_bar_s | mu_bar_{s,u}].
    const int idx_lambda = nx;
    const int idx_mu = nx + 1;
    const int idx_lambda_bar = nx + 1 + ns;
    const int idx_mu_bar = nx + 1 + 2 * ns;
    const int nz = nx + 1 + 2 * ns + ns * nu;

    IpmProblem ipm;
    ipm.nx = nx;
    ipm.nz = nz;
    ipm.objective_linear.emplace_back(idx_lambda, 1.0);
    for (int s = 0; s < ns; ++s)
        ipm.objective_linear.emplace_back(idx_mu + s, problem.systematic.probs(s) / alpha);

    // lambda_bar(s) + (1/alpha) p_sigma . mu_bar(s) <= lambda + mu_s
    for (int s = 0; s < ns; ++s) {
        IpmConstraint c;
        c.linear.emplace_back(idx_lambda_bar + s, 1.0);
        for (int u = 0; u < nu; ++u)
            c.linear.emplace_back(idx_mu_bar + s * nu + u, problem.sigma_set.probs(u) / alpha);
        c.linear.emplace_back(idx_lambda, -1.0);
        c.linear.emplace_back(idx_mu + s, -1.0);
        ipm.constraints.push_back(std::move(c));
    }
    // F_su(x) <= lambda_bar(s) + mu_bar_u(s)
    for (int s = 0; s < ns; ++s)
        for (int u = 0; u < nu; ++u) {
            IpmConstraint c;
            c.quad = &scaled.forms[s][u];
            c.linear.emplace_back(idx_lambda_bar + s, -1.0);
            c.linear.emplace_back(idx_mu_bar + s * nu + u, -1.0);
            ipm.constraints.push_back(std::move(c));
        }
    for (int i = 0; i < nx; ++i) ipm.nonneg.push_back(i);
    for (int s = 0; s < ns; ++s) ipm.nonneg.push_back(idx_mu + s);
    for (int s = 0; s < ns; ++s)
        for (int u = 0; u < nu; ++u) ipm.nonneg.push_back(idx_mu_bar + s * nu + u);

    double cap =
        kFluenceCapFactor * default_fluence_level(*problem.phantom, problem.spec.prescription);
    IpmResult res;
    for (int widen = 0;; ++widen) {
        ipm.upper.clear();
        for (int i = 0; i < nx; ++i) ipm.upper.emplace_back(i, cap);

        // Strictly feasible start: fluence near prescription scale, epigraph
        // variables one unit above the constraint values they must dominate.
        VectorXd z0 = VectorXd::Zero(nz);
        z0.head(nx) = starting_fluence(*problem.phantom, problem.spec, settings, warm_start, cap);
        double lambda_needed = 0.0;
        for (int s = 0; s < ns; ++s) {
            double worst = 0.0;
            for (int u = 0; u < nu; ++u) {
                const double f = scaled.forms[s][u].value(z0.head(nx));
                worst = std::max(worst, f);
                z0(idx_mu_bar + s * nu + u) = 1.0;
            }
            z0(idx_lambda_bar + s) = worst + 1.0;
            z0(idx_mu + s) = 1.0;
            lambda_needed = std::max(lambda_needed, z0(idx_lambda_bar + s) + 1.0 / alpha - 1.0);
        }
        z0(idx_lambda) = lambda_needed + 1.0;

        res = solve_ipm(ipm, z0, settings);
        if (!cap_is_active(res.z.head(nx), cap) || widen == 3) break;
        cap *= 4.0;
    }

    Solution sol;
    sol.fluence = res.z.head(nx);
    sol.objective = res.objective * scaled.f_scale;
    sol.lambda = res.z(idx_lambda) * scaled.f_scale;
    sol.mu = res.z.segment(idx_mu, ns) * scaled.f_scale;
    sol.lambda_bar = res.z.segment(idx_lambda_bar, ns) * scaled.f_scale;
    sol.mu_bar.resize(ns, nu);
    for (int s = 0; s < ns; ++s)
        for (int u = 0; u < nu; ++u) sol.mu_bar(s, u) = res.z(idx_mu_bar + s * nu + u) * scaled.f_scale;
    sol.diag = res.diag;

    // The optimum of the dual form must coincide with the nested CVaR of the
    // per-scenario objectives at the returned fluence.
    MatrixXd values(ns, nu);
    for (int s = 0; s < ns; ++s)
        for (int u = 0; u < nu; ++u)
            values(s, u) = scaled.forms[s][u].value(sol.fluence) * scaled.f_scale;
    VectorXd inner(ns);
    for (int s = 0; s < ns; ++s)
        inner(s) = cvar_discrete(values.row(s).transpose(), problem.sigma_set.probs, alpha);
    const double nested = cvar_discrete(inner, problem.systematic.probs, alpha);
    if (std::abs(nested - sol.objective) > 1e-5 * (1.0 + std::abs(sol.objective)))
        throw SolverError("robust solve: dual objective disagrees with the nested CVaR value (" +
                              std::to_string(sol.objective) + " vs " + std::to_string(nested) + ")",
                          sol.diag);
    return sol;
}

Plan solve_robust(const RobustProblem& problem, const SolverSettings& settings,
                  const VectorXd* warm_start) {
    Solution sol = solve_robust_full(problem, settings, warm_start);
    Plan plan;
    plan.fluence = sol.fluence;
    plan.provenance = Plan::Provenance::Robust;
    plan.objective = sol.objective;
    plan.alpha = problem.alpha;
    plan.systematic = problem.systematic;
    plan.sigma_set = problem.sigma_set;
    return plan;
}

MatrixXd scenario_objectives(const RobustProblem& problem, const Eigen::Ref<const VectorXd>& x) {
    validate_problem(problem);
    const ExpectedObjective objective(*problem.phantom, problem.spec);
    const double h = problem.phantom->grid().spacing;
    MatrixXd values(problem.systematic.size(), problem.sigma_set.size());
    for (int u = 0; u < problem.sigma_set.size(); ++u) {
        const DiscreteScenarioSet per_fraction =
            discretize_normal(0.0, problem.sigma_set.sigmas(u), h, problem.scenario_half_width);
        for (int s = 0; s < problem.systematic.size(); ++s)
            values(s, u) =
                objective.value(x, problem.systematic.shifts(s), per_fraction, problem.fractions);
    }
    return values;
}

double nested_cvar_objective(const RobustProblem& problem, const Eigen::Ref<const VectorXd>& x) {
    const MatrixXd values = scenario_objectives(problem, x);
    VectorXd inner(values.rows());
    for (int s = 0; s < values.rows(); ++s)
        inner(s) = cvar_discrete(values.row(s).transpose(), problem.sigma_set.probs, problem.alpha);
    return cvar_discrete(inner, problem.systematic.probs, problem.alpha);
}

Plan solve_expectation(const RobustProblem& problem, const SolverSettings& settings) {
    validate_problem(problem);
    const ScaledForms scaled = assemble_forms(problem);
    const int nx = problem.phantom->beamlet_count();

    QuadraticForm expectation{MatrixXd::Zero(nx, nx), VectorXd::Zero(nx), 0.0};
    for (int s = 0; s < problem.systematic.size(); ++s)
        for (int u = 0; u < problem.sigma_set.size(); ++u) {
            const double w = problem.systematic.probs(s) * problem.sigma_set.probs(u);
            expectation.Q += w * scaled.forms[s][u].Q;
            expectation.g += w * scaled.forms[s][u].g;
            expectation.c += w * scaled.forms[s][u].c;
        }
    expectation.Q *= scaled.f_scale;
    expectation.g *= scaled.f_scale;
    expectation.c *= scaled.f_scale;

    const double cap =
        kFluenceCapFactor * default_fluence_level(*problem.phantom, problem.spec.prescription);
    const VectorXd x0 = starting_fluence(*problem.phantom, problem.spec, settings, nullptr, cap);
    QpResult res = solve_nonneg_qp(expectation, x0, settings, cap);

    Plan plan;
    plan.fluence = res.x;
    plan.provenance = Plan::Provenance::Robust;
    plan.objective = res.objective;
    plan.alpha = 1.0;
    plan.systematic = problem.systematic;
    plan.sigma_set = problem.sigma_set;
    return plan;
}

Plan solve_worst_case(const RobustProblem& problem, const SolverSettings& settings) {
    validate_problem(problem);
    const ScaledForms scaled = assemble_forms(problem);
    const int nx = problem.phantom->beamlet_count();
    const int ns = problem.systematic.size();
    const int nu = problem.sigma_set.size();
    const int idx_epi = nx;

    IpmProblem ipm;
    ipm.nx = nx;
    ipm.nz = nx + 1;
    ipm.objective_linear.emplace_back(idx_epi, 1.0);
    for (int s = 0; s < ns; ++s)
        for (int u = 0; u < nu; ++u) {
            IpmConstraint c;
            c.quad = &scaled.forms[s][u];
            c.linear.emplace_back(idx_epi, -1.0);
            ipm.constraints.push_back(std::move(c));
        }
    for (int i = 0; i < nx; ++i) ipm.nonneg.push_back(i);

    double cap =
        kFluenceCapFactor * default_fluence_level(*problem.phantom, problem.spec.prescription);
    IpmResult res;
    for (int widen = 0;; ++widen) {
        ipm.upper.clear();
        for (int i = 0; i < nx; ++i) ipm.upper.emplace_back(i, cap);
        VectorXd z0 = VectorXd::Zero(nx + 1);
        z0.head(nx) = starting_fluence(*problem.phantom, problem.spec, settings, nullptr, cap);
        double worst = 0.0;
        for (int s = 0; s < ns; ++s)
            for (int u = 0; u < nu; ++u)
                worst = std::max(worst, scaled.forms[s][u].value(z0.head(nx)));
        z0(idx_epi) = worst + 1.0;

        res = solve_ipm(ipm, z0, settings);
        if (!cap_is_active(res.z.head(nx), cap) || widen == 3) break;
        cap *= 4.0;
    }

    Plan plan;
    plan.fluence = res.z.head(nx);
    plan.provenance = Plan::Provenance::Robust;
    plan.objective = res.objective * scaled.f_scale;
    plan.alpha = problem.alpha;
    plan.systematic = problem.systematic;
    plan.sigma_set = problem.sigma_set;
    return plan;
}

}  // namespace rtadapt
