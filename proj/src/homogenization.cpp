#include "mfe2/homogenization.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include "mfe2/constraints.hpp"
#include "mfe2/error.hpp"

namespace mfe2 {

void MacroLoading::validate() const
{
    if (!std::isfinite(Theta) || !std::isfinite(Phi) || !grad_Theta.allFinite() ||
        !grad_Phi.allFinite()) {
        throw InputError("macro loading has non-finite entries");
    }
    if (Phi < 0.0 || Phi > 1.0) {
        throw InputError("macro humidity outside [0, 1]");
    }
    if (!(dt > 0.0)) {
        throw InputError("macro loading needs dt > 0");
    }
}

InputVector to_inputs(const MacroLoading& l)
{
    InputVector x;
    x << l.Theta, l.Phi, l.grad_Theta.x(), l.grad_Theta.y(), l.grad_Phi.x(), l.grad_Phi.y();
    return x;
}

MacroLoading from_inputs(const InputVector& x, double dt)
{
    MacroLoading l;
    l.Theta = x[kInTheta];
    l.Phi = x[kInPhi];
    l.grad_Theta = {x[kInGradThetaX], x[kInGradThetaY]};
    l.grad_Phi = {x[kInGradPhiX], x[kInGradPhiY]};
    l.dt = dt;
    return l;
}

OutputVector CellAverages::to_vector() const
{
    OutputVector v;
    v << q_bar.x(), q_bar.y(), g_bar.x(), g_bar.y(), s_t, s_f, m_t.x(), m_t.y(), m_f.x(), m_f.y();
    return v;
}

namespace {

const Mesh& checked_cell_mesh(const Mesh& mesh, const MaterialModel* model)
{
    if (!model) {
        throw InputError("cell needs a material model");
    }
    validate_mesh(mesh, model->phase_count());
    return mesh;
}

} // namespace

CellModel::CellModel(Mesh mesh, std::shared_ptr<const MaterialModel> model)
    : mesh_(std::move(mesh)), model_(std::move(model)), pattern_(checked_cell_mesh(mesh_, model_.get()))
{
    pairing_ = detect_periodic_pairs(mesh_);
    x0_ = mesh_.bbox_center();
    weights_ = Vector::Zero(static_cast<Eigen::Index>(mesh_.nodes.size()));
    for (std::size_t e = 0; e < mesh_.triangles.size(); ++e) {
        const double a = mesh_.signed_area(e);
        volume_ += a;
        for (int node : mesh_.triangles[e].nodes) weights_[node] += a / 3.0;
    }
}

Vector CellModel::affine_field(const MacroLoading& l) const
{
    const auto n = static_cast<Eigen::Index>(mesh_.nodes.size());
    Vector u(2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Point& p = mesh_.nodes[static_cast<std::size_t>(i)];
        const Vector2 d(p.x - x0_.x, p.y - x0_.y);
        u[i] = l.Theta + l.grad_Theta.dot(d);
        u[n + i] = l.Phi + l.grad_Phi.dot(d);
    }
    return u;
}

MesoState MesoState::initial(std::shared_ptr<const CellModel> cell, const MacroLoading& loading)
{
    if (!cell) {
        throw InputError("meso state needs a cell");
    }
    MesoState s;
    const auto n = static_cast<std::size_t>(cell->node_count());
    s.cell = std::move(cell);
    s.fluctuation = FieldState::uniform(n, 0.0, 0.0);
    s.loading = loading;
    return s;
}

Vector MesoState::total_field() const
{
    return cell->affine_field(loading) + pack(fluctuation);
}

namespace {

struct ElementFlux {
    Vector2 q;
    Vector2 g;
};

ElementFlux element_flux(const ElementGeometry& geom, const CoefficientSet& k, const Vector6& ue)
{
    const Eigen::Vector3d dt = ue.head<3>().array() - ue[0];
    const Eigen::Vector3d dp = ue.tail<3>().array() - ue[3];
    const Vector2 gt = geom.grad * dt;
    const Vector2 gp = geom.grad * dp;
    return {-(k.k_tt * gt + k.k_tf * gp), -(k.k_ft * gt + k.k_ff * gp)};
}

Vector6 element_values(const Mesh& mesh, std::size_t e, const Vector& u)
{
    const auto n = static_cast<Eigen::Index>(mesh.nodes.size());
    Vector6 v;
    for (int a = 0; a < 3; ++a) {
        const int node = mesh.triangles[e].nodes[static_cast<std::size_t>(a)];
        v[a] = u[node];
        v[a + 3] = u[n + node];
    }
    return v;
}

AffineConstraints cell_constraints(const CellModel& cell, const MacroLoading& l)
{
    const int n = cell.node_count();
    AffineConstraints c(2 * n);
    apply_periodic(c, cell.pairing(), n, {l.grad_Theta.x(), l.grad_Theta.y()},
                   {l.grad_Phi.x(), l.grad_Phi.y()});
    const Vector hom = cell.affine_field(l);
    const Vector& w = cell.node_weights();
    for (int f = 0; f < 2; ++f) {
        MeanConstraint m;
        m.weights.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const int dof = dof_index(f, i, n);
            m.weights.emplace_back(dof, w[i]);
            m.target += w[i] * hom[dof];
        }
        c.add_mean(std::move(m));
    }
    c.close();
    return c;
}

// Residual shifted by a constant, so that a perturbed problem shares the
// base solution's residual error and finite differences see only the
// perturbation.
class OffsetSystem final : public NonlinearSystem {
public:
    OffsetSystem(NonlinearSystem& inner, Vector offset) : inner_(inner), offset_(std::move(offset)) {}
    Eigen::Index size() const override { return inner_.size(); }
    void evaluate(const Vector& z, Vector& r, SparseMatrix* jac) override
    {
        inner_.evaluate(z, r, jac);
        r -= offset_;
    }
    double norm(const Vector& r) const override { return inner_.norm(r); }

private:
    NonlinearSystem& inner_;
    Vector offset_;
};

// Stagnation this far below the initial residual is round-off, not divergence.
constexpr double kStagnationRatio = 1e-5;

// Chord iteration to round-off level; false when it neither reaches the
// target nor stagnates close to it or below noise.
bool chord_solve(NonlinearSystem& sys, const SparseLinearSolver& lu, Vector& z, double noise)
{
    Vector r;
    sys.evaluate(z, r, nullptr);
    const double r0 = sys.norm(r);
    if (r0 == 0.0) return true;
    double last = r0;
    for (int it = 0; it < 30; ++it) {
        if (last <= 1e-12 * r0) return true;
        z += lu.solve(-r);
        sys.evaluate(z, r, nullptr);
        const double cur = sys.norm(r);
        if (!std::isfinite(cur)) return false;
        if (cur > 0.5 * last) return cur <= std::max(kStagnationRatio * r0, noise);
        last = cur;
    }
    return last <= std::max(kStagnationRatio * r0, noise);
}

struct Increment {
    Vector u_new;
    Vector u_old;
    NewtonResult newton;
};

class CellStep {
public:
    CellStep(const MesoState& meso, const MacroLoading& loading, const RveOptions& opt)
        : cell_(*meso.cell), loading_(loading), opt_(opt)
    {
        const int n = cell_.node_count();
        u_old_ = meso.total_field();
        history_ = Vector::Zero(2 * n);
        if (opt.theta_cn < 1.0) {
            history_ = (1.0 - opt.theta_cn) * internal_force(cell_.mesh(), cell_.model(), u_old_);
        }
        start_ = cell_.affine_field(loading) + pack(meso.fluctuation);
        weights_ = field_weights(n, opt.moisture_weight);
    }

    FullEvaluator evaluator() const
    {
        return [this](const Vector& u, Vector& r, SparseMatrix* jac) {
            assemble_transient(cell_.mesh(), cell_.model(), cell_.pattern(), u, u_old_, history_,
                               loading_.dt, opt_.theta_cn, opt_.jacobian, r, jac);
        };
    }

    Increment solve()
    {
        constraints_ = std::make_unique<AffineConstraints>(cell_constraints(cell_, loading_));
        problem_ = std::make_unique<ConstrainedProblem>(evaluator(), *constraints_, weights_);
        Increment inc;
        inc.newton = newton_solve(*problem_, problem_->initial_guess(start_), opt_.newton);
        inc.u_new = problem_->expand(inc.newton.solution);
        inc.u_old = u_old_;
        return inc;
    }

    // Finite-difference sensitivity about a converged increment.
    Sensitivity tangent(const Increment& base) const
    {
        Vector offset;
        SparseMatrix jac;
        problem_->evaluate(base.newton.solution, offset, &jac);
        const double noise = residual_noise(*problem_, jac, base.newton.solution);
        const OutputVector out0 =
            average_fields(cell_, base.u_new, u_old_, loading_.dt).to_vector();
        const InputVector x0 = to_inputs(loading_);
        const Vector hom0 = cell_.affine_field(loading_);
        const auto nf = static_cast<Eigen::Index>(constraints_->free_dofs());

        Sensitivity s;
        for (int k = 0; k < kMacroInputs; ++k) {
            bool done = false;
            double h = opt_.fd_step;
            for (int attempt = 0; attempt < 2 && !done; ++attempt, h *= 0.1) {
                InputVector x = x0;
                // Humidity perturbed downwards at the saturation bound.
                const double step = (k == kInPhi && x0[k] + h > 1.0) ? -h : h;
                x[k] += step;
                const MacroLoading lp = from_inputs(x, loading_.dt);
                const AffineConstraints cp = cell_constraints(cell_, lp);
                ConstrainedProblem pp(evaluator(), cp, weights_);
                OffsetSystem sys(pp, offset);
                Vector z = base.newton.solution;
                z.head(nf) = cp.restrict_free(base.u_new + cell_.affine_field(lp) - hom0);
                bool ok = false;
                try {
                    if (attempt == 0 && base.newton.factor) {
                        ok = chord_solve(sys, *base.newton.factor, z, noise);
                    } else {
                        NewtonConfig cfg{1e-10, 0.0, 25, 1, false};
                        auto res = newton_solve(sys, z, cfg);
                        z = res.solution;
                        ok = res.converged ||
                             res.trace.back() <= std::max(kStagnationRatio * res.trace.front(), noise);
                    }
                } catch (const std::exception&) {
                    ok = false;
                }
                if (!ok) continue;
                const Vector up = pp.expand(z);
                s.col(k) = (average_fields(cell_, up, u_old_, loading_.dt).to_vector() - out0) / step;
                done = true;
            }
            if (!done) {
                throw ConvergenceError("perturbed cell solve failed for input " + std::to_string(k), {});
            }
        }
        return s;
    }

private:
    const CellModel& cell_;
    MacroLoading loading_;
    RveOptions opt_;
    Vector u_old_;
    Vector history_;
    Vector start_;
    std::vector<double> weights_;
    std::unique_ptr<AffineConstraints> constraints_;
    std::unique_ptr<ConstrainedProblem> problem_;
};

void fill_tangent(EffectiveResponse& r, const Sensitivity& s, double dt)
{
    r.sensitivity = s;
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            r.K_tt(i, j) = -s(kOutQx + i, kInGradThetaX + j);
            r.K_tf(i, j) = -s(kOutQx + i, kInGradPhiX + j);
            r.K_ft(i, j) = -s(kOutGx + i, kInGradThetaX + j);
            r.K_ff(i, j) = -s(kOutGx + i, kInGradPhiX + j);
        }
    }
    r.c_tt = dt * s(kOutSt, kInTheta);
    r.c_ff = dt * s(kOutSf, kInPhi);
    r.has_tangent = true;
}

[[noreturn]] void rethrow_tagged(const std::exception& e, std::vector<double> trace, int point)
{
    std::ostringstream os;
    os << "meso problem";
    if (point >= 0) os << " of macro point " << point;
    os << " failed: " << e.what();
    throw MesoFailure(os.str(), std::move(trace), point);
}

} // namespace

CellAverages average_fields(const CellModel& cell, const Vector& u_new, const Vector& u_old, double dt)
{
    const Mesh& mesh = cell.mesh();
    const Point x0 = cell.x0();
    CellAverages avg;
    for (std::size_t e = 0; e < mesh.triangles.size(); ++e) {
        const auto geom = element_geometry(mesh, e);
        const Vector6 ue = element_values(mesh, e, u_new);
        const CentroidState cs{ue.head<3>().mean(), ue.tail<3>().mean()};
        const auto k = element_coefficients(mesh, cell.model(), e, cs);
        const auto flux = element_flux(geom, k, ue);
        avg.q_bar += geom.area * flux.q;
        avg.g_bar += geom.area * flux.g;
        avg.cap_t += geom.area * k.c_tt;
        avg.cap_f += geom.area * k.c_ff;
        if (dt > 0.0) {
            const Vector6 uo = element_values(mesh, e, u_old);
            const double rt = k.c_tt * (cs.theta - uo.head<3>().mean()) / dt;
            const double rf = k.c_ff * (cs.phi - uo.tail<3>().mean()) / dt;
            const Point c = mesh.centroid(e);
            const Vector2 d(c.x - x0.x, c.y - x0.y);
            avg.s_t += geom.area * rt;
            avg.s_f += geom.area * rf;
            avg.m_t += geom.area * rt * d;
            avg.m_f += geom.area * rf * d;
        }
    }
    const double v = cell.volume();
    avg.q_bar /= v;
    avg.g_bar /= v;
    avg.s_t /= v;
    avg.s_f /= v;
    avg.m_t /= v;
    avg.m_f /= v;
    avg.cap_t /= v;
    avg.cap_f /= v;
    return avg;
}

CellAverages average_fluxes(const CellModel& cell, const Vector& u)
{
    return average_fields(cell, u, u, 0.0);
}

RveResult solve_rve_increment(const MesoState& meso, const MacroLoading& loading,
                              const RveOptions& opt, int point)
{
    if (!meso.cell) {
        throw InputError("meso state has no cell");
    }
    loading.validate();
    const auto tagged = [point](auto&& fn) {
        try {
            return fn();
        } catch (const ConvergenceError& e) {
            rethrow_tagged(e, e.trace(), point);
        } catch (const InputError& e) {
            rethrow_tagged(e, {}, point);
        } catch (const SingularSystemError& e) {
            rethrow_tagged(e, {}, point);
        }
    };
    std::optional<CellStep> step;
    const Increment inc = tagged([&] {
        step.emplace(meso, loading, opt);
        return step->solve();
    });

    RveResult out;
    const CellModel& cell = *meso.cell;
    out.response.avg = average_fields(cell, inc.u_new, inc.u_old, loading.dt);
    out.response.newton_iterations = inc.newton.iterations;
    if (opt.compute_tangent) {
        tagged([&] {
            fill_tangent(out.response, step->tangent(inc), loading.dt);
            return 0;
        });
    }

    out.state.cell = meso.cell;
    out.state.loading = loading;
    const FieldState fl = unpack(inc.u_new - cell.affine_field(loading), meso.fluctuation.time + loading.dt);
    out.state.fluctuation = fl;
    return out;
}

EffectiveResponse effective_tangent(const MesoState& meso, const MacroLoading& loading,
                                    const RveOptions& opt)
{
    RveOptions o = opt;
    o.compute_tangent = true;
    return solve_rve_increment(meso, loading, o).response;
}

CellAverages state_fluxes(const MesoState& meso)
{
    return average_fluxes(*meso.cell, meso.total_field());
}

EffectiveConductivity steady_linear_homogenize(const Mesh& mesh, const MaterialModel& model,
                                               double theta_ref, double phi_ref)
{
    validate_mesh(mesh, model.phase_count());
    const PeriodicPairing pairing = detect_periodic_pairs(mesh);
    const int n = static_cast<int>(mesh.nodes.size());

    std::vector<CoefficientSet> coeff(mesh.triangles.size());
    std::vector<ElementGeometry> geom(mesh.triangles.size());
    const SystemPattern pattern(mesh);
    SparseMatrix K = pattern.zero_matrix();
    Vector weights = Vector::Zero(n);
    double volume = 0.0;
    for (std::size_t e = 0; e < mesh.triangles.size(); ++e) {
        geom[e] = element_geometry(mesh, e);
        coeff[e] = element_coefficients(mesh, model, e, {theta_ref, phi_ref});
        pattern.scatter(K, e, element_matrices(geom[e], coeff[e]).k);
        volume += geom[e].area;
        for (int node : mesh.triangles[e].nodes) weights[node] += geom[e].area / 3.0;
    }
    const Point x0 = mesh.bbox_center();

    EffectiveConductivity out;
    for (int col = 0; col < 4; ++col) {
        Point gt, gp;
        if (col == 0) gt.x = 1.0;
        if (col == 1) gt.y = 1.0;
        if (col == 2) gp.x = 1.0;
        if (col == 3) gp.y = 1.0;
        AffineConstraints c(2 * n);
        apply_periodic(c, pairing, n, gt, gp);
        Vector hom(2 * n);
        for (int i = 0; i < n; ++i) {
            const Point& p = mesh.nodes[static_cast<std::size_t>(i)];
            hom[i] = gt.x * (p.x - x0.x) + gt.y * (p.y - x0.y);
            hom[n + i] = gp.x * (p.x - x0.x) + gp.y * (p.y - x0.y);
        }
        for (int f = 0; f < 2; ++f) {
            MeanConstraint m;
            for (int i = 0; i < n; ++i) {
                const int dof = dof_index(f, i, n);
                m.weights.emplace_back(dof, weights[i]);
                m.target += weights[i] * hom[dof];
            }
            c.add_mean(std::move(m));
        }
        c.close();

        const auto red = c.reduce_linear(K, Vector::Zero(2 * n));
        const Eigen::Index nf = c.free_dofs();
        std::vector<Eigen::Triplet<double>> trip;
        for (Eigen::Index k = 0; k < red.A.outerSize(); ++k) {
            for (SparseMatrix::InnerIterator it(red.A, k); it; ++it) {
                trip.emplace_back(it.row(), it.col(), it.value());
            }
        }
        Vector rhs = Vector::Zero(nf + 2);
        rhs.head(nf) = red.b;
        for (int f = 0; f < 2; ++f) {
            const auto [w, target] = c.reduced_mean(static_cast<std::size_t>(f));
            for (Eigen::Index i = 0; i < nf; ++i) {
                if (w[i] != 0.0) {
                    trip.emplace_back(i, nf + f, w[i]);
                    trip.emplace_back(nf + f, i, w[i]);
                }
            }
            rhs[nf + f] = target;
        }
        SparseMatrix A(nf + 2, nf + 2);
        A.setFromTriplets(trip.begin(), trip.end());
        SparseLinearSolver lu;
        lu.factorize(A);
        const Vector z = lu.solve(rhs);
        if ((A * z - rhs).norm() > 1e-8 * std::max(1.0, rhs.norm())) {
            throw SingularSystemError("cell conductivity problem is singular");
        }
        const Vector u = c.expand(z.head(nf));

        Eigen::Vector4d flux = Eigen::Vector4d::Zero();
        for (std::size_t e = 0; e < mesh.triangles.size(); ++e) {
            const auto ef = element_flux(geom[e], coeff[e], element_values(mesh, e, u));
            flux.head<2>() += geom[e].area * ef.q;
            flux.tail<2>() += geom[e].area * ef.g;
        }
        out.K.col(col) = -flux / volume;
    }
    return out;
}

double periodicity_defect(const CellModel& cell, const FieldState& fluctuation)
{
    double worst = 0.0;
    for (const auto& p : cell.pairing().pairs) {
        worst = std::max(worst, std::abs(fluctuation.theta[p.slave] - fluctuation.theta[p.master]));
        worst = std::max(worst, std::abs(fluctuation.phi[p.slave] - fluctuation.phi[p.master]));
    }
    return worst;
}

Eigen::Vector4d mean_fluctuation_gradient(const CellModel& cell, const FieldState& fluctuation)
{
    const Mesh& mesh = cell.mesh();
    const Vector u = pack(fluctuation);
    Eigen::Vector4d g = Eigen::Vector4d::Zero();
    for (std::size_t e = 0; e < mesh.triangles.size(); ++e) {
        const auto geom = element_geometry(mesh, e);
        const Vector6 ue = element_values(mesh, e, u);
        g.head<2>() += geom.area * (geom.grad * ue.head<3>());
        g.tail<2>() += geom.area * (geom.grad * ue.tail<3>());
    }
    return g / cell.volume();
}

} // namespace mfe2
