#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/SparseLU>

#include "mfe2/constraints.hpp"
#include "mfe2/error.hpp"
#include "mfe2/fem.hpp"

namespace mfe2 {

// Direct sparse LU; the only linear backend.
class SparseLinearSolver {
public:
    void factorize(const SparseMatrix& a);
    Vector solve(const Vector& b) const;
    Eigen::Index size() const { return n_; }

private:
    Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu_;
    Eigen::Index n_ = 0;
};

struct NewtonConfig {
    double tol = 1e-8;    // relative to max(initial residual norm, floor)
    double floor = 1e-3;  // absolute residual scale below which round-off dominates
    int max_iter = 25;
    int min_iter = 0;
    bool throw_on_failure = true;
};

class NonlinearSystem {
public:
    virtual ~NonlinearSystem() = default;
    virtual Eigen::Index size() const = 0;
    // Residual at z; the Jacobian as well when jac is non-null.
    virtual void evaluate(const Vector& z, Vector& residual, SparseMatrix* jac) = 0;
    virtual double norm(const Vector& residual) const { return residual.norm(); }
};

struct NewtonResult {
    Vector solution;
    std::vector<double> trace; // residual norm before each iteration and at exit
    int iterations = 0;
    bool converged = false;
    std::shared_ptr<const SparseLinearSolver> factor; // last Jacobian factorization
};

// Round-off level of a residual evaluated at z, estimated from the magnitude of its terms.
double residual_noise(const NonlinearSystem& system, const SparseMatrix& jac, const Vector& z);

// Newton-Raphson; also converged once the residual is at round-off level. With a frozen factorization the Jacobian is never
// re-evaluated (chord iteration).
NewtonResult newton_solve(NonlinearSystem& system, Vector z0, const NewtonConfig& cfg,
                          std::shared_ptr<const SparseLinearSolver> frozen = nullptr);

// Full-space residual/Jacobian evaluator u -> (r, J).
using FullEvaluator = std::function<void(const Vector& u, Vector& r, SparseMatrix* jac)>;

// Reduces a full-space problem by affine constraints. The unknown is
// z = [free dofs; one multiplier per mean constraint]; the residual norm is
// weighted per field and ignores the multiplier rows.
class ConstrainedProblem final : public NonlinearSystem {
public:
    ConstrainedProblem(FullEvaluator eval, const AffineConstraints& constraints,
                       std::vector<double> dof_weights);

    Eigen::Index size() const override;
    void evaluate(const Vector& z, Vector& residual, SparseMatrix* jac) override;
    double norm(const Vector& residual) const override;

    // Free components of u, shifted field-wise to satisfy the mean constraints.
    Vector initial_guess(const Vector& u) const;
    Vector expand(const Vector& z) const;

private:
    FullEvaluator eval_;
    const AffineConstraints& c_;
    std::vector<double> free_weight_;
    std::vector<std::pair<Vector, double>> means_;
};

// Residual weights per DOF: 1 for heat rows, moisture_weight for moisture rows.
std::vector<double> field_weights(int n_nodes, double moisture_weight);

struct SolverConfig {
    NewtonConfig newton;
    double dt = 3600.0;       // [s]
    double theta_cn = 0.5;
    JacobianMode jacobian = JacobianMode::consistent;
    std::string linear_solver = "sparse_lu";
    // Latent heat used to bring moisture residuals [kg/(m s)] to heat units [W/m].
    double moisture_weight = 2.5e6;

    void validate() const;
};

// Boundary data at a given time [s].
struct StepBoundary {
    std::vector<NodalValue> dirichlet;
    std::vector<NeumannLoad> neumann;
};

using BoundaryProvider = std::function<StepBoundary(double time)>;

// Newton failure of a time step, with the suggested retry step size.
class StepFailure : public ConvergenceError {
public:
    StepFailure(const std::string& what, std::vector<double> trace, double suggested_dt)
        : ConvergenceError(what, std::move(trace)), suggested_dt_(suggested_dt) {}
    double suggested_dt() const noexcept { return suggested_dt_; }

private:
    double suggested_dt_;
};

struct StepResult {
    FieldState state;
    NewtonResult newton;
};

// Linear theta-method step for C du/dt + K u = f with constant matrices.
Vector theta_step_linear(const SparseMatrix& C, const SparseMatrix& K, const Vector& u,
                         const Vector& f_old, const Vector& f_new, double dt, double theta_cn);

// One Crank-Nicolson step of the nonlinear coupled problem on a mesh.
StepResult crank_nicolson_step(const Mesh& mesh, const MaterialModel& model,
                               const SystemPattern& pattern, const FieldState& state,
                               const StepBoundary& bc_old, const StepBoundary& bc_new, double dt,
                               const SolverConfig& cfg);

using History = std::vector<FieldState>;

using StepObserver = std::function<void(const FieldState&, const NewtonResult&)>;

// Time loop from state at t = 0 to t_end with fixed dt. A failed step is
// retried once as two half steps before aborting.
History transient_solve(const Mesh& mesh, const MaterialModel& model,
                        const BoundaryProvider& boundary, const FieldState& initial,
                        const SolverConfig& cfg, double t_end,
                        const StepObserver& observer = {});

// Number of steps of size dt covering t_end; rejects non-integral ratios.
int step_count(double t_end, double dt);

} // namespace mfe2
