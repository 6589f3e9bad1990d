#include "mfe2/solver.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "mfe2/error.hpp"

namespace mfe2 {

void SparseLinearSolver::factorize(const SparseMatrix& a)
{
    if (a.rows() != a.cols()) {
        throw InputError("linear solver needs a square matrix");
    }
    n_ = a.rows();
    if (n_ == 0) return;
    SparseMatrix m = a;
    m.makeCompressed();
    lu_.analyzePattern(m);
    lu_.factorize(m);
    if (lu_.info() != Eigen::Success) {
        throw SingularSystemError("sparse LU factorization failed: " + lu_.lastErrorMessage());
    }
}

Vector SparseLinearSolver::solve(const Vector& b) const
{
    if (n_ == 0) return Vector(0);
    // SparseLU::solve is logically const but not declared so.
    auto& lu = const_cast<Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>&>(lu_);
    Vector x = lu.solve(b);
    if (!x.allFinite()) {
        throw SingularSystemError("linear solve produced non-finite values");
    }
    return x;
}

double residual_noise(const NonlinearSystem& system, const SparseMatrix& jac, const Vector& z)
{
    const Vector terms = jac.cwiseAbs() * z.cwiseAbs();
    return 64.0 * std::numeric_limits<double>::epsilon() * system.norm(terms);
}

NewtonResult newton_solve(NonlinearSystem& system, Vector z0, const NewtonConfig& cfg,
                          std::shared_ptr<const SparseLinearSolver> frozen)
{
    NewtonResult res;
    res.solution = std::move(z0);
    Vector f;
    SparseMatrix jac;
    const bool chord = static_cast<bool>(frozen);
    system.evaluate(res.solution, f, chord ? nullptr : &jac);
    const double r0 = system.norm(f);
    const double target = cfg.tol * std::max(r0, cfg.floor);
    res.trace.push_back(r0);
    double r = r0;

    for (int it = 0;; ++it) {
        if (!std::isfinite(r)) break;
        // Round-off acceptance only after a step, so a small initial residual still moves.
        const double noise = chord || it == 0 ? 0.0 : residual_noise(system, jac, res.solution);
        if (it >= cfg.min_iter && r <= std::max(target, noise)) {
            res.converged = true;
            break;
        }
        if (it >= cfg.max_iter) break;

        std::shared_ptr<const SparseLinearSolver> factor = frozen;
        if (!chord) {
            auto lu = std::make_shared<SparseLinearSolver>();
            lu->factorize(jac);
            factor = lu;
        }
        res.factor = factor;
        const Vector dz = factor->solve(-f);
        res.solution += dz;
        ++res.iterations;
        system.evaluate(res.solution, f, chord ? nullptr : &jac);
        r = system.norm(f);
        res.trace.push_back(r);
    }

    if (!res.converged && cfg.throw_on_failure) {
        std::ostringstream os;
        os << "Newton did not converge in " << res.iterations << " iterations (residual " << r
           << ", target " << target << ")";
        throw ConvergenceError(os.str(), res.trace);
    }
    return res;
}

ConstrainedProblem::ConstrainedProblem(FullEvaluator eval, const AffineConstraints& constraints,
                                       std::vector<double> dof_weights)
    : eval_(std::move(eval)), c_(constraints)
{
    if (!c_.closed()) {
        throw InputError("constraints must be closed before use");
    }
    free_weight_.assign(static_cast<std::size_t>(c_.free_dofs()), 1.0);
    for (int i = 0; i < c_.dofs(); ++i) {
        const int j = c_.free_index(i);
        if (j >= 0 && static_cast<std::size_t>(i) < dof_weights.size()) {
            free_weight_[static_cast<std::size_t>(j)] = dof_weights[static_cast<std::size_t>(i)];
        }
    }
    for (std::size_t k = 0; k < c_.means().size(); ++k) {
        means_.push_back(c_.reduced_mean(k));
    }
}

Eigen::Index ConstrainedProblem::size() const
{
    return c_.free_dofs() + static_cast<Eigen::Index>(means_.size());
}

void ConstrainedProblem::evaluate(const Vector& z, Vector& residual, SparseMatrix* jac)
{
    const Eigen::Index nf = c_.free_dofs();
    const Eigen::Index nm = static_cast<Eigen::Index>(means_.size());
    const Vector u = c_.expand(z.head(nf));
    Vector r;
    SparseMatrix j_full;
    eval_(u, r, jac ? &j_full : nullptr);

    residual.resize(nf + nm);
    residual.head(nf) = c_.reduce_vector(r);
    for (Eigen::Index k = 0; k < nm; ++k) {
        const auto& [w, rhs] = means_[static_cast<std::size_t>(k)];
        residual.head(nf) += z[nf + k] * w;
        residual[nf + k] = w.dot(z.head(nf)) - rhs;
    }
    if (!jac) return;

    SparseMatrix jr = c_.reduce_matrix(j_full);
    if (nm == 0) {
        *jac = std::move(jr);
        return;
    }
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(jr.nonZeros() + 2 * nm * nf));
    for (Eigen::Index k = 0; k < jr.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(jr, k); it; ++it) {
            trip.emplace_back(it.row(), it.col(), it.value());
        }
    }
    for (Eigen::Index k = 0; k < nm; ++k) {
        const auto& w = means_[static_cast<std::size_t>(k)].first;
        for (Eigen::Index i = 0; i < nf; ++i) {
            if (w[i] != 0.0) {
                trip.emplace_back(i, nf + k, w[i]);
                trip.emplace_back(nf + k, i, w[i]);
            }
        }
    }
    jac->resize(nf + nm, nf + nm);
    jac->setFromTriplets(trip.begin(), trip.end());
    jac->makeCompressed();
}

double ConstrainedProblem::norm(const Vector& residual) const
{
    double s = 0.0;
    for (std::size_t j = 0; j < free_weight_.size(); ++j) {
        const double v = free_weight_[j] * residual[static_cast<Eigen::Index>(j)];
        s += v * v;
    }
    return std::sqrt(s);
}

Vector ConstrainedProblem::initial_guess(const Vector& u) const
{
    const Eigen::Index nf = c_.free_dofs();
    const Eigen::Index nm = static_cast<Eigen::Index>(means_.size());
    Vector z = Vector::Zero(nf + nm);
    z.head(nf) = c_.restrict_free(u);
    for (const auto& [w, rhs] : means_) {
        const double total = w.sum();
        if (total == 0.0) continue;
        const double delta = (rhs - w.dot(z.head(nf))) / total;
        for (Eigen::Index i = 0; i < nf; ++i) {
            if (w[i] != 0.0) z[i] += delta;
        }
    }
    return z;
}

Vector ConstrainedProblem::expand(const Vector& z) const
{
    return c_.expand(z.head(c_.free_dofs()));
}

std::vector<double> field_weights(int n_nodes, double moisture_weight)
{
    std::vector<double> w(static_cast<std::size_t>(2 * n_nodes), 1.0);
    for (int i = n_nodes; i < 2 * n_nodes; ++i) w[static_cast<std::size_t>(i)] = moisture_weight;
    return w;
}

void SolverConfig::validate() const
{
    if (!(newton.tol > 0.0) || !(newton.floor > 0.0)) {
        throw InputError("Newton tolerances must be positive");
    }
    if (newton.max_iter < 1) {
        throw InputError("Newton needs at least one iteration");
    }
    if (!(dt > 0.0)) {
        throw InputError("time step must be positive");
    }
    if (!(theta_cn > 0.0 && theta_cn <= 1.0)) {
        throw InputError("time integration parameter must lie in (0, 1]");
    }
    if (linear_solver != "sparse_lu") {
        throw InputError("unsupported linear solver '" + linear_solver + "'");
    }
}

Vector theta_step_linear(const SparseMatrix& C, const SparseMatrix& K, const Vector& u,
                         const Vector& f_old, const Vector& f_new, double dt, double theta_cn)
{
    const SparseMatrix lhs = C / dt + theta_cn * K;
    const Vector rhs = (C / dt) * u - (1.0 - theta_cn) * (K * u) + theta_cn * f_new +
                       (1.0 - theta_cn) * f_old;
    SparseLinearSolver lu;
    lu.factorize(lhs);
    return lu.solve(rhs);
}

namespace {

void check_humidity(const Vector& u, Eigen::Index n)
{
    constexpr double slack = 1e-12;
    for (Eigen::Index i = n; i < 2 * n; ++i) {
        if (u[i] < -slack || u[i] > 1.0 + slack) {
            std::ostringstream os;
            os << "relative humidity " << u[i] << " at node " << i - n << " left [0, 1]";
            throw InputError(os.str());
        }
    }
}

} // namespace

StepResult crank_nicolson_step(const Mesh& mesh, const MaterialModel& model,
                               const SystemPattern& pattern, const FieldState& state,
                               const StepBoundary& bc_old, const StepBoundary& bc_new, double dt,
                               const SolverConfig& cfg)
{
    if (!(dt > 0.0)) {
        throw InputError("time step must be positive");
    }
    const int n = static_cast<int>(mesh.nodes.size());
    const Vector u_old = pack(state);
    const Vector f_old = neumann_vector(mesh, bc_old.neumann);
    const Vector f_new = neumann_vector(mesh, bc_new.neumann);
    const double th = cfg.theta_cn;

    AffineConstraints constraints(2 * n);
    apply_dirichlet(constraints, bc_new.dirichlet, n);
    constraints.close();

    try {
        Vector history = -th * f_new - (1.0 - th) * f_old;
        if (th < 1.0) {
            history += (1.0 - th) * internal_force(mesh, model, u_old);
        }
        FullEvaluator eval = [&](const Vector& u, Vector& r, SparseMatrix* jac) {
            assemble_transient(mesh, model, pattern, u, u_old, history, dt, th, cfg.jacobian, r, jac);
        };
        ConstrainedProblem problem(eval, constraints, field_weights(n, cfg.moisture_weight));
        auto result = newton_solve(problem, problem.initial_guess(u_old), cfg.newton);
        const Vector u_new = problem.expand(result.solution);
        check_humidity(u_new, n);
        StepResult out{unpack(u_new, state.time + dt), std::move(result)};
        // Clip round-off excursions of the humidity bounds.
        out.state.phi = out.state.phi.cwiseMax(0.0).cwiseMin(1.0);
        return out;
    } catch (const ConvergenceError& e) {
        throw StepFailure(std::string(e.what()) + "; retry with dt/2", e.trace(), 0.5 * dt);
    } catch (const InputError& e) {
        throw StepFailure(std::string("step evaluation failed: ") + e.what() + "; retry with dt/2",
                          {}, 0.5 * dt);
    } catch (const SingularSystemError& e) {
        throw StepFailure(std::string(e.what()) + "; retry with dt/2", {}, 0.5 * dt);
    }
}

int step_count(double t_end, double dt)
{
    if (!(dt > 0.0) || !(t_end >= 0.0)) {
        throw InputError("t_end must be non-negative and dt positive");
    }
    const double ratio = t_end / dt;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
        throw InputError("t_end must be an integer multiple of dt");
    }
    return static_cast<int>(rounded);
}

History transient_solve(const Mesh& mesh, const MaterialModel& model,
                        const BoundaryProvider& boundary, const FieldState& initial,
                        const SolverConfig& cfg, double t_end, const StepObserver& observer)
{
    cfg.validate();
    const int steps = step_count(t_end, cfg.dt);
    if (initial.theta.size() != static_cast<Eigen::Index>(mesh.nodes.size()) ||
        initial.phi.size() != initial.theta.size()) {
        throw InputError("initial state does not match the mesh");
    }
    const SystemPattern pattern(mesh);
    History history{initial};
    history.front().time = 0.0;
    FieldState current = history.front();
    StepBoundary bc_old = boundary(0.0);

    for (int k = 1; k <= steps; ++k) {
        const double t_old = (k - 1) * cfg.dt;
        const double t_new = k * cfg.dt;
        StepBoundary bc_new = boundary(t_new);
        try {
            auto step = crank_nicolson_step(mesh, model, pattern, current, bc_old, bc_new, cfg.dt, cfg);
            current = std::move(step.state);
            if (observer) observer(current, step.newton);
        } catch (const StepFailure&) {
            try {
                const double half = 0.5 * cfg.dt;
                const StepBoundary bc_mid = boundary(t_old + half);
                auto a = crank_nicolson_step(mesh, model, pattern, current, bc_old, bc_mid, half, cfg);
                auto b = crank_nicolson_step(mesh, model, pattern, a.state, bc_mid, bc_new, half, cfg);
                current = std::move(b.state);
                if (observer) observer(current, b.newton);
            } catch (const StepFailure& e) {
                std::ostringstream os;
                os << "time step " << k << " (t = " << t_new << " s) failed after dt halving: "
                   << e.what();
                throw StepFailure(os.str(), e.trace(), e.suggested_dt());
            }
        }
        current.time = t_new;
        history.push_back(current);
        bc_old = std::move(bc_new);
    }
    return history;
}

} // namespace mfe2
