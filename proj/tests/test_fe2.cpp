#include <doctest.h>

#include <cmath>
#include <cstring>

#include "mfe2/error.hpp"
#include "mfe2/fe2.hpp"

using namespace mfe2;

namespace {

const CoefficientSet kBrickLike{0.6, 0.0, 0.0, 2e-9, 1.5e6, 40.0};
const CoefficientSet kMortarLike{0.9, 0.0, 0.0, 6e-9, 1.7e6, 20.0};

CellLibrary single_cell(std::shared_ptr<const CellModel> cell)
{
    CellLibrary lib;
    lib.cells.push_back(std::move(cell));
    lib.region_cell = {0};
    return lib;
}

std::shared_ptr<const CellModel> constant_cell(const Mesh& m, std::vector<CoefficientSet> phases)
{
    return std::make_shared<const CellModel>(m, std::make_shared<ConstantModel>(std::move(phases)));
}

std::shared_ptr<const CellModel> kunzel_cell()
{
    static const auto cell = std::make_shared<const CellModel>(
        generate_masonry_cell({0.29, 0.14, 0.01, Bond::stack, 2, 2, 2}),
        std::make_shared<KunzelModel>(std::vector<MaterialParams>{MaterialParams::brick(), MaterialParams::mortar()}));
    return cell;
}

BoundaryProvider wall_boundary(const Mesh& m, double th_left, double ph_left, double th_right, double ph_right)
{
    const auto L = m.boundary_nodes("left"), R = m.boundary_nodes("right");
    return [=](double) {
        StepBoundary b;
        for (int n : L) {
            b.dirichlet.push_back({n, kTheta, th_left});
            b.dirichlet.push_back({n, kPhi, ph_left});
        }
        for (int n : R) {
            b.dirichlet.push_back({n, kTheta, th_right});
            b.dirichlet.push_back({n, kPhi, ph_right});
        }
        return b;
    };
}

Fe2Config config(double dt, bool cprime, int workers = 1)
{
    Fe2Config c;
    c.solver.dt = dt;
    c.cprime = cprime;
    c.workers = workers;
    return c;
}

double max_diff(const Vector& a, const Vector& b) { return (a - b).cwiseAbs().maxCoeff(); }

bool bit_equal(const Vector& a, const Vector& b)
{
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

} // namespace

TEST_CASE("homogeneous cells reproduce the single-scale solution")
{
    const Mesh macro = generate_rectangle_mesh(0.4, 0.1, 8, 2, 0, "wall");
    const CoefficientSet mat{0.8, 1e-4, 2e2 * 1e-9, 3e-9, 1.6e6, 30.0};
    const auto cell = constant_cell(generate_rectangle_mesh(0.05, 0.05, 3, 3, 0, "wall"), {mat});
    const auto bc = wall_boundary(macro, 5.0, 0.8, 22.0, 0.45);
    const FieldState init = FieldState::uniform(macro.nodes.size(), 20.0, 0.5);

    const Fe2Config cfg = config(3600.0, false);
    const Fe2Result fe2 = fe2_solve(macro, single_cell(cell), bc, init, cfg, 5 * 3600.0);
    const History ref = transient_solve(macro, ConstantModel({mat}), bc, init, cfg.solver, 5 * 3600.0);

    REQUIRE(fe2.history.size() == ref.size());
    for (std::size_t k = 0; k < ref.size(); ++k) {
        CHECK(max_diff(fe2.history[k].theta, ref[k].theta) <= 1e-8 * 17.0);
        CHECK(max_diff(fe2.history[k].phi, ref[k].phi) <= 1e-8 * 0.35);
        CHECK(fe2.history[k].time == doctest::Approx(ref[k].time));
    }
    REQUIRE(fe2.steps.size() == 5);
    CHECK(fe2.steps[0].rounds >= 2);
    CHECK_FALSE(fe2.steps[0].halved);
    CHECK(fe2.rounds.size() >= 10);
}

TEST_CASE("registry is committed only when the macro step converges")
{
    const Mesh macro = generate_rectangle_mesh(0.3, 0.1, 3, 1, 0, "masonry");
    const auto lib = single_cell(kunzel_cell());
    const FieldState init = FieldState::uniform(macro.nodes.size(), 20.0, 0.5);
    MacroPointRegistry registry(macro, lib, init, 3600.0);
    registry.check(macro, lib);
    const MacroPointRegistry before = registry;
    Scheduler scheduler(1, PartitionPolicy::contiguous);
    std::vector<int> pts;
    for (std::size_t e = 0; e < macro.triangles.size(); ++e) pts.push_back(static_cast<int>(e));
    scheduler.plan(pts, std::vector<int>(pts.size(), 0));

    // Saturation above one cannot be evaluated by the cells.
    const StepBoundary bad = wall_boundary(macro, 5.0, 1.4, 20.0, 0.5)(3600.0);
    const StepBoundary old = wall_boundary(macro, 20.0, 0.5, 20.0, 0.5)(0.0);
    const Fe2Config cfg = config(3600.0, true);
    try {
        fe2_step(macro, init, registry, old, bad, 3600.0, cfg, scheduler);
        FAIL("step should fail");
    } catch (const StepFailure& e) {
        CHECK(e.suggested_dt() == doctest::Approx(1800.0));
        CHECK(std::string(e.what()).find("point") != std::string::npos);
    }
    for (std::size_t p = 0; p < registry.size(); ++p) {
        CHECK(bit_equal(registry.entry(p).state.fluctuation.theta, before.entry(p).state.fluctuation.theta));
        CHECK(bit_equal(registry.entry(p).state.fluctuation.phi, before.entry(p).state.fluctuation.phi));
        CHECK(registry.entry(p).state.loading.Theta == before.entry(p).state.loading.Theta);
    }

    const StepBoundary good = wall_boundary(macro, 10.0, 0.7, 20.0, 0.5)(3600.0);
    const auto r = fe2_step(macro, init, registry, old, good, 3600.0, cfg, scheduler);
    CHECK(r.newton.converged);
    CHECK(registry.entry(0).state.loading.Theta != before.entry(0).state.loading.Theta);
    CHECK(registry.entry(0).state.fluctuation.time == doctest::Approx(3600.0));
}

TEST_CASE("registry rejects a mismatched mesh or library")
{
    const Mesh macro = generate_rectangle_mesh(0.3, 0.1, 3, 1, 0, "masonry");
    const auto lib = single_cell(kunzel_cell());
    const FieldState init = FieldState::uniform(macro.nodes.size(), 20.0, 0.5);
    const MacroPointRegistry registry(macro, lib, init, 3600.0);
    CHECK(registry.size() == macro.triangles.size());
    CHECK_THROWS_AS(registry.check(generate_rectangle_mesh(0.3, 0.1, 2, 1, 0, "masonry"), lib), InputError);
    CellLibrary other = lib;
    other.cells.push_back(lib.cells[0]);
    other.region_cell = {1};
    CHECK_THROWS_AS(registry.check(macro, other), InputError);
    CellLibrary empty;
    CHECK_THROWS_AS(MacroPointRegistry(macro, empty, init, 3600.0), InputError);
}

TEST_CASE("element loading is the centroid value and the constant gradient")
{
    const Mesh m = generate_rectangle_mesh(1.0, 1.0, 2, 2, 0, "a");
    const auto n = static_cast<Eigen::Index>(m.nodes.size());
    Vector u(2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& p = m.nodes[static_cast<std::size_t>(i)];
        u[i] = 3.0 + 2.0 * p.x - 1.0 * p.y;
        u[n + i] = 0.4 + 0.1 * p.y;
    }
    for (std::size_t e = 0; e < m.triangles.size(); ++e) {
        const auto l = element_loading(m, e, u, 60.0);
        const Point c = m.centroid(e);
        CHECK(l.Theta == doctest::Approx(3.0 + 2.0 * c.x - c.y));
        CHECK(l.Phi == doctest::Approx(0.4 + 0.1 * c.y));
        CHECK(l.grad_Theta.x() == doctest::Approx(2.0));
        CHECK(l.grad_Theta.y() == doctest::Approx(-1.0));
        CHECK(l.grad_Phi.x() == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(l.grad_Phi.y() == doctest::Approx(0.1));
        CHECK(l.dt == 60.0);
    }
}

TEST_CASE("fe2 results do not depend on the worker count")
{
    const Mesh macro = generate_rectangle_mesh(0.6, 0.3, 3, 2, 0, "masonry");
    const auto lib = single_cell(kunzel_cell());
    const auto bc = wall_boundary(macro, 5.0, 0.8, 24.0, 0.5);
    const FieldState init = FieldState::uniform(macro.nodes.size(), 20.0, 0.5);
    const Fe2Result one = fe2_solve(macro, lib, bc, init, config(3600.0, true, 1), 2 * 3600.0);
    for (int w : {2, 3}) {
        const Fe2Result many = fe2_solve(macro, lib, bc, init, config(3600.0, true, w), 2 * 3600.0);
        REQUIRE(many.history.size() == one.history.size());
        for (std::size_t k = 0; k < one.history.size(); ++k) {
            CHECK(bit_equal(one.history[k].theta, many.history[k].theta));
            CHECK(bit_equal(one.history[k].phi, many.history[k].phi));
        }
        CHECK(many.partition.workers() == static_cast<std::size_t>(w));
    }
}

TEST_CASE("storage moment correction fades as the wall approaches steady state")
{
    const Mesh macro = generate_rectangle_mesh(0.6, 0.14, 4, 1, 0, "masonry");
    const Mesh cell_mesh = generate_masonry_cell({0.29, 0.14, 0.01, Bond::running, 2, 3, 3});
    const auto lib = single_cell(constant_cell(cell_mesh, {kBrickLike, kMortarLike}));
    const auto bc = wall_boundary(macro, 0.0, 0.9, 20.0, 0.5);
    const FieldState init = FieldState::uniform(macro.nodes.size(), 20.0, 0.5);

    // Early: one hour of Crank-Nicolson after the boundary jump.
    const Fe2Result on = fe2_solve(macro, lib, bc, init, config(3600.0, true), 3600.0);
    const Fe2Result off = fe2_solve(macro, lib, bc, init, config(3600.0, false), 3600.0);
    CHECK(max_diff(on.history.back().theta, off.history.back().theta) > 1e-6);

    // Late: backward Euler with very long steps lands on the steady state.
    Fe2Config late_on = config(1e12, true), late_off = config(1e12, false);
    late_on.solver.theta_cn = late_off.solver.theta_cn = 1.0;
    const Fe2Result s_on = fe2_solve(macro, lib, bc, init, late_on, 4e12);
    const Fe2Result s_off = fe2_solve(macro, lib, bc, init, late_off, 4e12);
    const double th_range = 20.0, ph_range = 0.4;
    CHECK(max_diff(s_on.history.back().theta, s_off.history.back().theta) < 1e-6 * th_range);
    CHECK(max_diff(s_on.history.back().phi, s_off.history.back().phi) < 1e-6 * ph_range);
}

TEST_CASE("comparison of identical histories is zero")
{
    const Mesh fine = generate_rectangle_mesh(1.0, 0.5, 8, 4, 0, "a");
    const Mesh macro = generate_rectangle_mesh(1.0, 0.5, 4, 2, 0, "a");
    const CellMap map = CellMap::grid(fine, macro, {0.0, 0.0}, 0.5, 0.25, 2, 2);
    CHECK(map.cells == 4);

    // The same affine field on both meshes has identical cell averages.
    auto frame = [](const Mesh& m, double t) {
        FieldState s = FieldState::uniform(m.nodes.size(), 0.0, 0.0, t);
        for (std::size_t i = 0; i < m.nodes.size(); ++i) {
            s.theta[static_cast<Eigen::Index>(i)] = 10.0 + m.nodes[i].x + 0.001 * t;
            s.phi[static_cast<Eigen::Index>(i)] = 0.5 + 0.1 * m.nodes[i].y;
        }
        return s;
    };
    History a{frame(fine, 0.0), frame(fine, 3600.0), frame(fine, 7200.0)};
    History b{frame(macro, 0.0), frame(macro, 3600.0), frame(macro, 7200.0)};
    const auto rep = compare_fields(a, fine, b, macro, map);
    CHECK(rep.theta.relative_percent < 1e-12);
    CHECK(rep.phi.max_absolute < 1e-14);
    CHECK(rep.steps == 2);
    CHECK(rep.cell_theta_error.size() == 4);

    b[2].theta.array() += 1.0;
    const auto shifted = compare_fields(a, fine, b, macro, map);
    CHECK(shifted.theta.max_absolute == doctest::Approx(1.0));
    CHECK(shifted.theta.worst_step == 2);
    CHECK(shifted.theta.absolute == doctest::Approx(0.5));

    b.pop_back();
    CHECK_THROWS_AS(compare_fields(a, fine, b, macro, map), InputError);
}

TEST_CASE("cell map assigns elements by centroid")
{
    const Mesh fine = generate_rectangle_mesh(1.0, 1.0, 4, 4, 0, "a");
    const Mesh macro = generate_rectangle_mesh(1.0, 1.0, 2, 2, 0, "a");
    const CellMap map = CellMap::grid(fine, macro, {0.0, 0.0}, 0.5, 1.0, 2, 1);
    for (std::size_t e = 0; e < fine.triangles.size(); ++e) {
        CHECK(map.fine_cell[e] == (fine.centroid(e).x < 0.5 ? 0 : 1));
    }
    const CellMap partial = CellMap::grid(fine, macro, {0.0, 0.0}, 0.25, 0.25, 1, 1);
    int inside = 0;
    for (int c : partial.fine_cell) inside += c == 0 ? 1 : 0;
    CHECK(inside == 2);
    CHECK_THROWS_AS(CellMap::grid(fine, macro, {0.0, 0.0}, 0.0, 1.0, 1, 1), InputError);
    // Empty comparison cell.
    CHECK_THROWS_AS(cell_averages(macro, partial.macro_cell, 1, Vector::Zero(9)), InputError);
}

TEST_CASE("subsample picks frames at the requested times")
{
    History h;
    for (int k = 0; k <= 8; ++k) h.push_back(FieldState::uniform(2, k, 0.5, 450.0 * k));
    const History s = subsample(h, {0.0, 1800.0, 3600.0});
    REQUIRE(s.size() == 3);
    CHECK(s[1].theta[0] == 4.0);
    CHECK(s[2].time == 3600.0);
    CHECK_THROWS_AS(subsample(h, {100.0}), InputError);
}
