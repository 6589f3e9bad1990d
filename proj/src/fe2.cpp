#include "mfe2/fe2.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "mfe2/constraints.hpp"
#include "mfe2/error.hpp"

namespace mfe2 {

std::shared_ptr<const CellModel> CellLibrary::for_region(int region) const
{
    if (region < 0 || static_cast<std::size_t>(region) >= region_cell.size()) {
        throw InputError("macro region " + std::to_string(region) + " has no cell assigned");
    }
    const int id = region_cell[static_cast<std::size_t>(region)];
    if (id < 0 || static_cast<std::size_t>(id) >= cells.size() || !cells[static_cast<std::size_t>(id)]) {
        throw InputError("macro region " + std::to_string(region) + " maps to a missing cell");
    }
    return cells[static_cast<std::size_t>(id)];
}

MacroLoading element_loading(const Mesh& macro, std::size_t element, const Vector& u, double dt)
{
    const auto n = static_cast<Eigen::Index>(macro.nodes.size());
    const auto geom = element_geometry(macro, element);
    Eigen::Vector3d th, ph;
    for (int a = 0; a < 3; ++a) {
        const int node = macro.triangles[element].nodes[static_cast<std::size_t>(a)];
        th[a] = u[node];
        ph[a] = u[n + node];
    }
    MacroLoading l;
    l.Theta = th.mean();
    l.Phi = ph.mean();
    l.grad_Theta = geom.grad * th;
    l.grad_Phi = geom.grad * ph;
    l.dt = dt;
    return l;
}

MacroPointRegistry::MacroPointRegistry(const Mesh& macro, const CellLibrary& library,
                                       const FieldState& initial, double dt)
{
    const Vector u = pack(initial);
    if (u.size() != static_cast<Eigen::Index>(2 * macro.nodes.size())) {
        throw InputError("initial macro state does not match the macro mesh");
    }
    for (std::size_t e = 0; e < macro.triangles.size(); ++e) {
        const int region = macro.triangles[e].phase;
        Entry entry;
        auto cell = library.for_region(region);
        entry.cell_id = library.region_cell[static_cast<std::size_t>(region)];
        entry.state = MesoState::initial(cell, element_loading(macro, e, u, dt));
        entry.response = state_fluxes(entry.state);
        entries_.push_back(std::move(entry));
    }
}

std::vector<MesoState> MacroPointRegistry::states() const
{
    std::vector<MesoState> s;
    s.reserve(entries_.size());
    for (const auto& e : entries_) s.push_back(e.state);
    return s;
}

void MacroPointRegistry::commit(const std::vector<PointResult>& results)
{
    if (results.size() != entries_.size()) {
        throw InputError("commit needs one result per macro point");
    }
    for (const auto& r : results) {
        auto& e = entries_.at(static_cast<std::size_t>(r.point));
        e.state = r.state;
        e.response = r.response.avg;
    }
}

void MacroPointRegistry::check(const Mesh& macro, const CellLibrary& library) const
{
    if (entries_.size() != macro.triangles.size()) {
        throw InputError("registry does not have one entry per macro element");
    }
    for (std::size_t e = 0; e < entries_.size(); ++e) {
        const int region = macro.triangles[e].phase;
        if (region < 0 || static_cast<std::size_t>(region) >= library.region_cell.size() ||
            library.region_cell[static_cast<std::size_t>(region)] != entries_[e].cell_id) {
            throw InputError("registry cell of element " + std::to_string(e) +
                             " does not match its region");
        }
    }
}

namespace {

// Macro element residual and Jacobian from the cell responses.
void assemble_macro(const Mesh& macro, const SystemPattern& pattern, const Vector& u,
                    const Vector& u_old, const Vector& history, double dt, double theta_cn,
                    bool cprime, const std::vector<PointResult>& results,
                    const MacroPointRegistry& registry, Vector& r, SparseMatrix* jac)
{
    r = history;
    if (jac) *jac = pattern.zero_matrix();
    for (std::size_t e = 0; e < macro.triangles.size(); ++e) {
        const auto& dofs = pattern.element_dofs(e);
        const auto geom = element_geometry(macro, e);
        const double A = geom.area;
        const EffectiveResponse& resp = results[e].response;
        const CellAverages& prev = registry.entry(e).response;

        Vector6 rate;
        for (int i = 0; i < 6; ++i) {
            const int d = dofs[static_cast<std::size_t>(i)];
            rate[i] = (u[d] - u_old[d]) / dt;
        }
        const Vector2 j_new[2] = {resp.avg.q_bar, resp.avg.g_bar};
        const Vector2 j_old[2] = {prev.q_bar, prev.g_bar};
        const double s[2] = {resp.avg.s_t, resp.avg.s_f};
        const Vector2 m[2] = {resp.avg.m_t, resp.avg.m_f};
        // Redistributes storage inside the element like the lumped single-scale
        // matrix; the element total stays s.
        const double c_eff[2] = {resp.avg.cap_t, resp.avg.cap_f};

        Vector6 re;
        for (int f = 0; f < 2; ++f) {
            const double mean_rate = rate.segment<3>(3 * f).mean();
            const Vector2 flux = theta_cn * j_new[f] + (1.0 - theta_cn) * j_old[f];
            for (int a = 0; a < 3; ++a) {
                const Vector2 gN = geom.grad.col(a);
                double v = A / 3.0 * (s[f] + c_eff[f] * (rate[3 * f + a] - mean_rate));
                if (cprime) v += A * gN.dot(m[f]);
                v -= A * gN.dot(flux);
                re[3 * f + a] = v;
            }
        }
        for (int i = 0; i < 6; ++i) r[dofs[static_cast<std::size_t>(i)]] += re[i];

        if (!jac) continue;
        // Inputs (Theta, Phi, grad Theta, grad Phi) as functions of the element dofs.
        Eigen::Matrix<double, kMacroInputs, 6> M = Eigen::Matrix<double, kMacroInputs, 6>::Zero();
        for (int b = 0; b < 3; ++b) {
            M(kInTheta, b) = 1.0 / 3.0;
            M(kInPhi, 3 + b) = 1.0 / 3.0;
            M(kInGradThetaX, b) = geom.grad(0, b);
            M(kInGradThetaY, b) = geom.grad(1, b);
            M(kInGradPhiX, 3 + b) = geom.grad(0, b);
            M(kInGradPhiY, 3 + b) = geom.grad(1, b);
        }
        const Eigen::Matrix<double, kMacroOutputs, 6> D = resp.sensitivity * M;
        Matrix6 ke;
        for (int f = 0; f < 2; ++f) {
            const int s_row = kOutSt + f;
            const int m_row = f == 0 ? kOutMtx : kOutMfx;
            const int j_row = f == 0 ? kOutQx : kOutGx;
            for (int a = 0; a < 3; ++a) {
                const Vector2 gN = geom.grad.col(a);
                for (int j = 0; j < 6; ++j) {
                    double lumped = 0.0;
                    if (j / 3 == f) lumped = ((j == 3 * f + a ? 1.0 : 0.0) - 1.0 / 3.0) / dt;
                    double v = A / 3.0 * (D(s_row, j) + c_eff[f] * lumped);
                    if (cprime) v += A * (gN.x() * D(m_row, j) + gN.y() * D(m_row + 1, j));
                    v -= theta_cn * A * (gN.x() * D(j_row, j) + gN.y() * D(j_row + 1, j));
                    ke(3 * f + a, j) = v;
                }
            }
        }
        pattern.scatter(*jac, e, ke);
    }
}

} // namespace

Fe2StepResult fe2_step(const Mesh& macro, const FieldState& state, MacroPointRegistry& registry,
                       const StepBoundary& bc_old, const StepBoundary& bc_new, double dt,
                       const Fe2Config& cfg, Scheduler& scheduler)
{
    if (!(dt > 0.0)) {
        throw InputError("time step must be positive");
    }
    if (registry.size() != macro.triangles.size()) {
        throw InputError("registry does not match the macro mesh");
    }
    const int n = static_cast<int>(macro.nodes.size());
    const double th = cfg.solver.theta_cn;
    const Vector u_old = pack(state);
    const Vector history = -th * neumann_vector(macro, bc_new.neumann) -
                           (1.0 - th) * neumann_vector(macro, bc_old.neumann);
    const SystemPattern pattern(macro);
    const std::vector<MesoState> states = registry.states();

    AffineConstraints constraints(2 * n);
    apply_dirichlet(constraints, bc_new.dirichlet, n);
    constraints.close();

    RveOptions rve = cfg.rve;
    rve.compute_tangent = true;
    rve.theta_cn = th;
    const PointEvaluator evaluate = [&rve](int point, const MesoState& s, const MacroLoading& l) {
        return solve_rve_increment(s, l, rve, point);
    };

    std::vector<PointResult> trial;
    int rounds = 0;
    FullEvaluator eval = [&](const Vector& u, Vector& r, SparseMatrix* jac) {
        std::vector<MacroLoading> loadings;
        loadings.reserve(macro.triangles.size());
        for (std::size_t e = 0; e < macro.triangles.size(); ++e) {
            loadings.push_back(element_loading(macro, e, u, dt));
        }
        RoundResult round = scheduler.run(states, loadings, evaluate);
        ++rounds;
        if (round.results.size() != macro.triangles.size()) {
            throw InputError("round returned an incomplete set of cell responses");
        }
        trial = std::move(round.results);
        assemble_macro(macro, pattern, u, u_old, history, dt, th, cfg.cprime, trial, registry, r, jac);
    };

    try {
        ConstrainedProblem problem(eval, constraints, field_weights(n, cfg.solver.moisture_weight));
        NewtonResult result = newton_solve(problem, problem.initial_guess(u_old), cfg.solver.newton);
        Vector u_new = problem.expand(result.solution);
        for (int i = n; i < 2 * n; ++i) {
            if (u_new[i] < -1e-12 || u_new[i] > 1.0 + 1e-12) {
                throw InputError("macro relative humidity left [0, 1] at node " + std::to_string(i - n));
            }
            u_new[i] = std::clamp(u_new[i], 0.0, 1.0);
        }
        registry.commit(trial);
        Fe2StepResult out{unpack(u_new, state.time + dt), std::move(result), rounds};
        return out;
    } catch (const ConvergenceError& e) {
        throw StepFailure(std::string("macro step failed: ") + e.what() + "; retry with dt/2",
                          e.trace(), 0.5 * dt);
    } catch (const InputError& e) {
        throw StepFailure(std::string("macro step failed: ") + e.what() + "; retry with dt/2", {},
                          0.5 * dt);
    } catch (const SingularSystemError& e) {
        throw StepFailure(std::string("macro step failed: ") + e.what() + "; retry with dt/2", {},
                          0.5 * dt);
    }
}

Fe2Result fe2_solve(const Mesh& macro, const CellLibrary& library, const BoundaryProvider& boundary,
                    const FieldState& initial, const Fe2Config& cfg, double t_end,
                    const Fe2Observer& observer)
{
    cfg.solver.validate();
    validate_mesh(macro);
    const double dt = cfg.solver.dt;
    const int steps = step_count(t_end, dt);

    MacroPointRegistry registry(macro, library, initial, dt);
    Scheduler scheduler(cfg.workers, cfg.policy);
    std::vector<int> points, regions;
    for (std::size_t e = 0; e < macro.triangles.size(); ++e) {
        points.push_back(static_cast<int>(e));
        regions.push_back(macro.triangles[e].phase);
    }
    scheduler.plan(points, regions);

    Fe2Result out;
    out.partition = scheduler.partition();
    FieldState current = initial;
    current.time = 0.0;
    out.history.push_back(current);
    StepBoundary bc_old = boundary(0.0);

    for (int k = 1; k <= steps; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        const double t_old = (k - 1) * dt;
        const double t_new = k * dt;
        StepBoundary bc_new = boundary(t_new);
        Fe2StepLog log;
        log.step = k;
        log.time = t_new;
        try {
            auto r = fe2_step(macro, current, registry, bc_old, bc_new, dt, cfg, scheduler);
            current = std::move(r.state);
            log.newton_iterations = r.newton.iterations;
            log.rounds = r.rounds;
        } catch (const StepFailure&) {
            const MacroPointRegistry saved = registry;
            try {
                const double half = 0.5 * dt;
                const StepBoundary bc_mid = boundary(t_old + half);
                auto a = fe2_step(macro, current, registry, bc_old, bc_mid, half, cfg, scheduler);
                auto b = fe2_step(macro, a.state, registry, bc_mid, bc_new, half, cfg, scheduler);
                current = std::move(b.state);
                log.newton_iterations = a.newton.iterations + b.newton.iterations;
                log.rounds = a.rounds + b.rounds;
                log.halved = true;
            } catch (const StepFailure& e) {
                registry = saved;
                std::ostringstream os;
                os << "macro step " << k << " (t = " << t_new << " s) failed after dt halving: "
                   << e.what();
                throw StepFailure(os.str(), e.trace(), e.suggested_dt());
            }
        }
        current.time = t_new;
        log.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.history.push_back(current);
        out.steps.push_back(log);
        if (observer) observer(current, log);
        bc_old = std::move(bc_new);
    }
    out.rounds = scheduler.log();
    return out;
}

History fine_scale_reference_solve(const Mesh& mesh, const MaterialModel& model,
                                   const BoundaryProvider& boundary, const FieldState& initial,
                                   const SolverConfig& cfg, double t_end, const StepObserver& observer)
{
    validate_mesh(mesh, model.phase_count());
    return transient_solve(mesh, model, boundary, initial, cfg, t_end, observer);
}

CellMap CellMap::grid(const Mesh& fine, const Mesh& macro, Point origin, double w, double h, int nx,
                      int ny)
{
    if (!(w > 0.0) || !(h > 0.0) || nx < 1 || ny < 1) {
        throw InputError("comparison grid needs positive cell sizes and counts");
    }
    CellMap map;
    map.cells = nx * ny;
    auto locate = [&](const Point& c) {
        const int i = static_cast<int>(std::floor((c.x - origin.x) / w));
        const int j = static_cast<int>(std::floor((c.y - origin.y) / h));
        return (i >= 0 && i < nx && j >= 0 && j < ny) ? j * nx + i : -1;
    };
    for (std::size_t e = 0; e < fine.triangles.size(); ++e) map.fine_cell.push_back(locate(fine.centroid(e)));
    for (std::size_t e = 0; e < macro.triangles.size(); ++e) {
        map.macro_cell.push_back(locate(macro.centroid(e)));
    }
    std::ostringstream os;
    os << nx << "x" << ny << " cells of " << w << " m x " << h << " m, elements assigned by centroid";
    map.descriptor = os.str();
    return map;
}

std::vector<double> cell_averages(const Mesh& mesh, const std::vector<int>& element_cell, int cells,
                                  const Vector& nodal)
{
    if (element_cell.size() != mesh.triangles.size()) {
        throw InputError("cell map does not match the mesh");
    }
    std::vector<double> sum(static_cast<std::size_t>(cells), 0.0);
    std::vector<double> area(static_cast<std::size_t>(cells), 0.0);
    for (std::size_t e = 0; e < mesh.triangles.size(); ++e) {
        const int c = element_cell[e];
        if (c < 0) continue;
        const auto& t = mesh.triangles[e].nodes;
        const double a = mesh.signed_area(e);
        sum[static_cast<std::size_t>(c)] += a * (nodal[t[0]] + nodal[t[1]] + nodal[t[2]]) / 3.0;
        area[static_cast<std::size_t>(c)] += a;
    }
    for (std::size_t c = 0; c < sum.size(); ++c) {
        if (area[c] <= 0.0) {
            throw InputError("comparison cell " + std::to_string(c) + " contains no elements");
        }
        sum[c] /= area[c];
    }
    return sum;
}

ComparisonReport compare_fields(const History& reference, const Mesh& reference_mesh,
                                const History& other, const Mesh& other_mesh, const CellMap& map)
{
    if (reference.empty() || reference.size() != other.size()) {
        throw InputError("histories have different numbers of frames");
    }
    for (std::size_t k = 0; k < reference.size(); ++k) {
        if (std::abs(reference[k].time - other[k].time) > 1e-6) {
            throw InputError("time grids differ at frame " + std::to_string(k));
        }
        if (reference[k].size() != reference_mesh.nodes.size() ||
            other[k].size() != other_mesh.nodes.size()) {
            throw InputError("history frame " + std::to_string(k) + " does not match its mesh");
        }
    }
    ComparisonReport rep;
    rep.cells = map.cells;
    rep.descriptor = map.descriptor + "; frames after the initial state";
    const std::size_t first = reference.size() > 1 ? 1 : 0;
    rep.steps = static_cast<int>(reference.size() - first);
    rep.cell_theta_error.assign(static_cast<std::size_t>(map.cells), 0.0);
    rep.cell_phi_error.assign(static_cast<std::size_t>(map.cells), 0.0);

    struct Acc {
        double rel = 0.0, abs = 0.0;
        std::size_t rel_n = 0, n = 0;
    } acc[2];
    FieldError* err[2] = {&rep.theta, &rep.phi};
    std::vector<double>* per_cell[2] = {&rep.cell_theta_error, &rep.cell_phi_error};
    std::vector<double>* per_step[2] = {&rep.step_theta_error, &rep.step_phi_error};

    for (std::size_t k = first; k < reference.size(); ++k) {
        for (int f = 0; f < 2; ++f) {
            const Vector& ref_nodal = f == 0 ? reference[k].theta : reference[k].phi;
            const Vector& oth_nodal = f == 0 ? other[k].theta : other[k].phi;
            const auto a = cell_averages(reference_mesh, map.fine_cell, map.cells, ref_nodal);
            const auto b = cell_averages(other_mesh, map.macro_cell, map.cells, oth_nodal);
            double step_sum = 0.0;
            for (int c = 0; c < map.cells; ++c) {
                const auto ci = static_cast<std::size_t>(c);
                const double d = std::abs(b[ci] - a[ci]);
                acc[f].abs += d;
                ++acc[f].n;
                if (std::abs(a[ci]) > 1e-12) {
                    acc[f].rel += d / std::abs(a[ci]);
                    ++acc[f].rel_n;
                }
                (*per_cell[f])[ci] += d;
                step_sum += d;
                if (d > err[f]->max_absolute) {
                    err[f]->max_absolute = d;
                    err[f]->worst_cell = c;
                    err[f]->worst_step = static_cast<int>(k);
                }
            }
            per_step[f]->push_back(step_sum / map.cells);
        }
    }
    for (int f = 0; f < 2; ++f) {
        err[f]->absolute = acc[f].n ? acc[f].abs / static_cast<double>(acc[f].n) : 0.0;
        err[f]->relative_percent =
            acc[f].rel_n ? 100.0 * acc[f].rel / static_cast<double>(acc[f].rel_n) : 0.0;
        for (auto& v : *per_cell[f]) v /= std::max(1, rep.steps);
    }
    return rep;
}

History subsample(const History& h, const std::vector<double>& times)
{
    History out;
    std::size_t pos = 0;
    for (double t : times) {
        while (pos < h.size() && h[pos].time < t - 1e-6) ++pos;
        if (pos == h.size() || std::abs(h[pos].time - t) > 1e-6) {
            throw InputError("history has no frame at t = " + std::to_string(t) + " s");
        }
        out.push_back(h[pos]);
    }
    return out;
}

} // namespace mfe2
