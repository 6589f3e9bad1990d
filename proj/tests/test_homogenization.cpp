#include <doctest.h>

#include <cmath>
#include <random>

#include "mfe2/error.hpp"
#include "mfe2/homogenization.hpp"

using namespace mfe2;

namespace {

std::shared_ptr<CellModel> constant_cell(Mesh m, std::vector<CoefficientSet> phases)
{
    return std::make_shared<CellModel>(std::move(m), std::make_shared<ConstantModel>(std::move(phases)));
}

Mesh laminate(double width, int layers_x, double height)
{
    return generate_tensor_mesh({{0.5 * width, layers_x}, {0.5 * width, layers_x}}, {{height, 3}},
                                [width](const Point& c) { return c.x < 0.5 * width ? 0 : 1; }, {"a", "b"});
}

const CoefficientSet kBrickLike{0.6, 0.0, 0.0, 2e-9, 1.5e6, 40.0};
const CoefficientSet kMortarLike{0.9, 0.0, 0.0, 6e-9, 1.7e6, 20.0};

} // namespace

TEST_CASE("uniform loading leaves the cell at rest")
{
    auto cell = std::make_shared<CellModel>(generate_masonry_cell({0.29, 0.14, 0.01, Bond::stack, 2, 3, 3}),
                                            std::make_shared<KunzelModel>(std::vector<MaterialParams>{
                                                MaterialParams::brick(), MaterialParams::mortar()}));
    MacroLoading l;
    l.Theta = 18.0;
    l.Phi = 0.55;
    const auto r = solve_rve_increment(MesoState::initial(cell, l), l);
    CHECK(r.state.fluctuation.theta.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.state.fluctuation.phi.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.response.avg.q_bar.norm() < 1e-12);
    CHECK(r.response.avg.g_bar.norm() < 1e-20);
    CHECK(std::abs(r.response.avg.s_t) < 1e-9);
    CHECK(std::abs(r.response.avg.s_f) < 1e-16);
}

TEST_CASE("homogeneous cell reproduces the local conductivity")
{
    const CoefficientSet k{0.8, 0.01, 3e-10, 4e-9, 1.6e6, 30.0};
    auto cell = constant_cell(generate_rectangle_mesh(0.3, 0.15, 6, 3), {k});
    MacroLoading l;
    l.grad_Theta = {1.0, 0.0};
    MesoState s = MesoState::initial(cell, l);
    RveResult r;
    for (int i = 0; i < 3; ++i) {
        r = solve_rve_increment(s, l);
        s = r.state;
    }
    CHECK(r.state.fluctuation.theta.cwiseAbs().maxCoeff() < 1e-10);
    CHECK(r.response.avg.q_bar.x() == doctest::Approx(-k.k_tt).epsilon(1e-10));
    CHECK(std::abs(r.response.avg.q_bar.y()) < 1e-12);
    CHECK(r.response.avg.g_bar.x() == doctest::Approx(-k.k_ft).epsilon(1e-8));
    CHECK((r.response.K_tt - k.k_tt * Eigen::Matrix2d::Identity()).norm() < 1e-6 * k.k_tt);
    CHECK((r.response.K_ff - k.k_ff * Eigen::Matrix2d::Identity()).norm() < 1e-6 * k.k_ff);
    CHECK((r.response.K_tf - k.k_tf * Eigen::Matrix2d::Identity()).norm() < 1e-6 * k.k_tf);
}

TEST_CASE("homogeneous nonlinear cell at a uniform state")
{
    auto model = std::make_shared<KunzelModel>(std::vector<MaterialParams>{MaterialParams::brick()});
    auto cell = std::make_shared<CellModel>(generate_rectangle_mesh(0.3, 0.15, 4, 2), model);
    MacroLoading l;
    const auto r = solve_rve_increment(MesoState::initial(cell, l), l);
    const auto k = model->coefficients(0, l.Theta, l.Phi);
    CHECK((r.response.K_tt - k.k_tt * Eigen::Matrix2d::Identity()).norm() < 1e-5 * k.k_tt);
    CHECK((r.response.K_ff - k.k_ff * Eigen::Matrix2d::Identity()).norm() < 1e-5 * k.k_ff);
}

TEST_CASE("averaging identities")
{
    const Mesh m = generate_tensor_mesh({{1.0, 20}}, {{1.0, 20}}, [](const Point&) { return 0; }, {"unit"});
    Mesh shifted = m;
    for (auto& p : shifted.nodes) {
        p.x -= 0.5;
        p.y -= 0.5;
    }
    shifted.origin = {-0.5, -0.5};
    auto cell = constant_cell(shifted, {{2.0, 0.0, 0.0, 1.0, 1.0, 1.0}});
    const int n = cell->node_count();
    REQUIRE(cell->x0().x == doctest::Approx(0.0));

    // Uniform storage rate: zero first moment.
    Vector u_old = Vector::Zero(2 * n), u_new = Vector::Constant(2 * n, 3.0);
    auto a = average_fields(*cell, u_new, u_old, 1.0);
    CHECK(a.s_t == doctest::Approx(3.0));
    CHECK(a.m_t.norm() < 1e-14);

    // Rate equal to x: first moment is the second moment of the square.
    for (int i = 0; i < n; ++i) u_new[i] = shifted.nodes[static_cast<std::size_t>(i)].x;
    u_new.tail(n).setZero();
    a = average_fields(*cell, u_new, u_old, 1.0);
    CHECK(a.m_t.x() == doctest::Approx(1.0 / 12.0).epsilon(5e-3));
    // The diagonal split of the squares biases the cross moment slightly.
    CHECK(std::abs(a.m_t.y()) < 1e-3 / 12.0);
    CHECK(std::abs(a.s_t) < 1e-14);

    // Linear field: uniform flux.
    const auto f = average_fluxes(*cell, u_new);
    CHECK(f.q_bar.x() == doctest::Approx(-2.0));
    CHECK(std::abs(f.q_bar.y()) < 1e-14);
}

TEST_CASE("laminate conductivity")
{
    ConstantModel model({{0.25, 0, 0, 1e-9, 1e6, 50}, {0.45, 0, 0, 1e-9, 1e6, 50}});
    const auto K = steady_linear_homogenize(laminate(1.0, 4, 1.0), model);
    CHECK(K.tt()(0, 0) == doctest::Approx(2.0 / (1 / 0.25 + 1 / 0.45)).epsilon(1e-10));
    CHECK(K.tt()(1, 1) == doctest::Approx(0.35).epsilon(1e-10));
    CHECK(std::abs(K.tt()(0, 1)) < 1e-12);
    CHECK(K.ff()(0, 0) == doctest::Approx(1e-9).epsilon(1e-10));
}

TEST_CASE("homogeneous steady homogenization is the identity")
{
    ConstantModel model({{0.7, 0.0, 0.0, 3e-9, 1e6, 10}});
    const auto K = steady_linear_homogenize(generate_rectangle_mesh(0.45, 0.44, 5, 4), model);
    CHECK((K.tt() - 0.7 * Eigen::Matrix2d::Identity()).norm() < 1e-12);
    CHECK((K.ff() - 3e-9 * Eigen::Matrix2d::Identity()).norm() < 1e-20);
}

TEST_CASE("transient cell solve reaches the steady homogenized flux")
{
    const Mesh m = generate_masonry_cell({0.29, 0.14, 0.01, Bond::running, 2, 4, 3});
    const std::vector<CoefficientSet> phases{kBrickLike, kMortarLike};
    const auto K = steady_linear_homogenize(m, ConstantModel(phases));
    auto cell = constant_cell(m, phases);
    MacroLoading l;
    l.grad_Theta = {1.0, 0.5};
    l.dt = 1e12;
    // Backward Euler damps the stiff modes that Crank-Nicolson carries along.
    RveOptions opt;
    opt.theta_cn = 1.0;
    MesoState s = MesoState::initial(cell, l);
    RveResult r;
    for (int i = 0; i < 3; ++i) {
        r = solve_rve_increment(s, l, opt);
        s = r.state;
    }
    const Vector2 expect = -(K.tt() * Vector2(1.0, 0.5));
    CHECK((r.response.avg.q_bar - expect).norm() <= 1e-6 * expect.norm());
    CHECK((r.response.K_tt - K.tt()).norm() <= 1e-5 * K.tt().norm());
}

TEST_CASE("steady homogenized conductivity is scale invariant")
{
    const Mesh m = generate_masonry_cell({0.29, 0.14, 0.01, Bond::stack, 2, 3, 3});
    const ConstantModel model({kBrickLike, kMortarLike});
    const auto a = steady_linear_homogenize(m, model);
    for (double s : {0.01, 0.1, 10.0}) {
        const auto b = steady_linear_homogenize(scale_mesh(m, s), model);
        CHECK((a.K - b.K).norm() <= 1e-10 * a.K.norm());
    }
}

TEST_CASE("random two-phase cells respect the Voigt-Reuss bounds")
{
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> k(0.1, 2.0), geo(0.05, 0.4), joint(0.005, 0.03);
    for (int i = 0; i < 10; ++i) {
        const double bw = geo(rng), bh = geo(rng), j = std::min(joint(rng), 0.5 * std::min(bw, bh));
        const Bond bond = i % 2 ? Bond::running : Bond::stack;
        const Mesh m = generate_masonry_cell({bw, bh, j, bond, 2, 0, 0});
        const CoefficientSet a{k(rng), 0, 0, 1e-9, 1e6, 10}, b{k(rng), 0, 0, 1e-9, 1e6, 10};
        const auto K = steady_linear_homogenize(m, ConstantModel({a, b}));
        double area = 0.0, brick = 0.0;
        for (std::size_t e = 0; e < m.triangles.size(); ++e) {
            area += m.signed_area(e);
            if (m.triangles[e].phase == kBrickPhase) brick += m.signed_area(e);
        }
        const double f = brick / area;
        const double voigt = f * a.k_tt + (1 - f) * b.k_tt;
        const double reuss = 1.0 / (f / a.k_tt + (1 - f) / b.k_tt);
        for (int d = 0; d < 2; ++d) {
            CHECK(K.tt()(d, d) <= voigt * (1 + 1e-12));
            CHECK(K.tt()(d, d) >= reuss * (1 - 1e-12));
        }
    }
}

TEST_CASE("fd tangent of a symmetric cell is symmetric at a uniform state")
{
    auto model = std::make_shared<KunzelModel>(std::vector<MaterialParams>{MaterialParams::brick(), MaterialParams::mortar()});
    auto cell = std::make_shared<CellModel>(generate_masonry_cell({0.29, 0.14, 0.01, Bond::stack, 2, 3, 3}), model);
    MacroLoading l;
    l.dt = 1e12;
    RveOptions opt;
    opt.theta_cn = 1.0;
    const auto r = solve_rve_increment(MesoState::initial(cell, l), l, opt);
    const auto& K = r.response.K_tt;
    CHECK(std::abs(K(0, 1) - K(1, 0)) <= 1e-4 * K.norm());
    const auto steady = steady_linear_homogenize(cell->mesh(), *model, l.Theta, l.Phi);
    CHECK((K - steady.tt()).norm() <= 1e-4 * K.norm());
    CHECK(r.response.has_tangent);
    CHECK(r.response.sensitivity.allFinite());
    CHECK(r.response.c_tt > 0.0);
    CHECK(r.response.c_ff > 0.0);
}

TEST_CASE("fluctuations are periodic with zero mean gradient")
{
    auto model = std::make_shared<KunzelModel>(std::vector<MaterialParams>{MaterialParams::brick(), MaterialParams::mortar()});
    auto cell = std::make_shared<CellModel>(generate_masonry_cell({0.29, 0.14, 0.01, Bond::running, 2, 4, 3}), model);
    MacroLoading l;
    MesoState s = MesoState::initial(cell, l);
    l.Theta = 15.0;
    l.Phi = 0.6;
    l.grad_Theta = {20.0, -5.0};
    l.grad_Phi = {0.3, 0.4};
    for (int i = 0; i < 3; ++i) {
        const auto r = solve_rve_increment(s, l);
        s = r.state;
        CHECK(periodicity_defect(*cell, s.fluctuation) < 1e-10);
        CHECK(mean_fluctuation_gradient(*cell, s.fluctuation).norm() < 1e-9 * (l.grad_Theta.norm() + l.grad_Phi.norm()));
        CHECK(s.fluctuation.theta.cwiseAbs().maxCoeff() > 1e-6);
    }
}

TEST_CASE("meso failures name the macro point")
{
    auto cell = std::make_shared<CellModel>(
        generate_rectangle_mesh(0.3, 0.15, 3, 2),
        std::make_shared<KunzelModel>(std::vector<MaterialParams>{MaterialParams::brick()}));
    MacroLoading l;
    l.Phi = 0.99;
    l.grad_Phi = {1.0, 0.0};
    try {
        solve_rve_increment(MesoState::initial(cell, l), l, {}, 17);
        FAIL("expected a meso failure");
    } catch (const MesoFailure& e) {
        CHECK(e.point() == 17);
    }
}

TEST_CASE("macro loading checks")
{
    MacroLoading l;
    CHECK_NOTHROW(l.validate());
    l.Phi = 1.2;
    CHECK_THROWS_AS(l.validate(), InputError);
    l.Phi = 0.5;
    l.dt = 0.0;
    CHECK_THROWS_AS(l.validate(), InputError);
    MacroLoading x;
    x.Theta = 3;
    x.Phi = 0.25;
    x.grad_Theta = {1, 2};
    x.grad_Phi = {3, 4};
    const auto y = from_inputs(to_inputs(x), 60.0);
    CHECK(y.Theta == 3);
    CHECK(y.grad_Phi.y() == 4);
    CHECK(y.dt == 60.0);
}

TEST_CASE("a phase without conductivity makes the cell problem singular")
{
    const Mesh m = generate_masonry_cell({0.29, 0.14, 0.01, Bond::stack, 2, 3, 3});
    ConstantModel model({{0.0, 0, 0, 0.0, 1e6, 10}, kMortarLike});
    CHECK_THROWS(steady_linear_homogenize(m, model));
}
