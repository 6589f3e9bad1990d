#include <doctest.h>

#include <cmath>
#include <random>

#include "mfe2/constitutive.hpp"
#include "mfe2/error.hpp"
#include "oracles.hpp"

using namespace mfe2;

TEST_CASE("approximation factor of the masonry phases")
{
    CHECK(MaterialParams::brick().b == doctest::Approx(1.679).epsilon(1e-3));
    CHECK(MaterialParams::mortar().b == doctest::Approx(1.043).epsilon(1e-3));
    CHECK(oracle::rel(MaterialParams::brick().b, oracle::approximation_factor(229.30, 141.68)) < 1e-12);
    CHECK(oracle::rel(MaterialParams::mortar().b, oracle::approximation_factor(160.0, 22.72)) < 1e-12);
    for (const auto& m : {MaterialParams::brick(), MaterialParams::mortar()}) {
        CHECK(std::abs(water_content(m, 0.8).value - m.w_80) <= 1e-10 * m.w_f);
        CHECK(m.b > 1.0);
    }
}

TEST_CASE("approximation factor round trip")
{
    const double w_f = 200.0;
    const double b = 2.0;
    const double w_80 = 0.8 * w_f * (b - 1.0) / (b - 0.8);
    CHECK(derive_approximation_factor(w_f, w_80) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("approximation factor rejects unreachable sorption data")
{
    CHECK_THROWS_AS(derive_approximation_factor(100.0, 100.0), InputError);
    CHECK_THROWS_AS(derive_approximation_factor(100.0, 120.0), InputError);
    CHECK_THROWS_AS(derive_approximation_factor(100.0, 0.0), InputError);
    CHECK_THROWS_AS(MaterialParams::from_measured(100, 50, -1, 1, 1, 1, 1, 1), InputError);
}

TEST_CASE("water content examples")
{
    const auto brick = MaterialParams::brick();
    CHECK(water_content(brick, 1.0).value == doctest::Approx(brick.w_f).epsilon(1e-14));
    CHECK(water_content(brick, 0.0).value == 0.0);
    CHECK(water_content(brick, 0.8).value == doctest::Approx(141.68).epsilon(1e-12));
    CHECK(water_content(brick, 0.5).value == doctest::Approx(66.0).epsilon(5e-3));
    CHECK_THROWS_AS(water_content(brick, 1.01), InputError);
    CHECK_THROWS_AS(water_content(brick, -0.01), InputError);
}

TEST_CASE("saturation pressure examples")
{
    CHECK(saturation_pressure(0.0).value == doctest::Approx(611.0).epsilon(1e-14));
    CHECK(saturation_pressure(-1e-12).value == doctest::Approx(611.0).epsilon(1e-12));
    CHECK(saturation_pressure(20.0).value == doctest::Approx(611.0 * std::exp(17.08 * 20.0 / 254.18)));
    CHECK(saturation_pressure(20.0).value == doctest::Approx(2342).epsilon(1e-3));
    CHECK_THROWS_AS(saturation_pressure(-45.0), InputError);
    CHECK_THROWS_AS(saturation_pressure(85.0), InputError);
}

TEST_CASE("vapor permeability, capillary transport, conductivity and enthalpy examples")
{
    PhysicalConstants c;
    auto unit = MaterialParams::brick();
    unit.mu = 1.0;
    CHECK(vapor_permeability(unit, c, 20.0) == doctest::Approx(1.937e-10).epsilon(1e-3));
    CHECK(vapor_permeability(MaterialParams::brick(), c, 20.0) == doctest::Approx(1.153e-11).epsilon(1e-3));

    const auto brick = MaterialParams::brick();
    const double base = 3.8 * std::pow(brick.A / brick.w_f, 2);
    CHECK(capillary_transport(brick, brick.w_f) == doctest::Approx(base).epsilon(1e-14));
    CHECK(capillary_transport(brick, 0.0) == doctest::Approx(base / 1000.0).epsilon(1e-14));
    CHECK(capillary_transport(brick, 141.68) ==
          doctest::Approx(base * std::pow(1000.0, 141.68 / 229.30 - 1.0)).epsilon(1e-14));

    CHECK(thermal_conductivity(brick, 0.0) == brick.lambda_0);
    CHECK(thermal_conductivity(brick, 141.68) == doctest::Approx(0.4596).epsilon(1e-4));
    CHECK(thermal_conductivity(MaterialParams::mortar(), 160.0) == doctest::Approx(0.838).epsilon(1e-3));
    CHECK_THROWS_AS(thermal_conductivity(brick, -1.0), InputError);

    CHECK(evaporation_enthalpy(273.15) == doctest::Approx(2.5008e6).epsilon(1e-15));
    CHECK(evaporation_enthalpy(293.15) < 2.5008e6);
    CHECK(evaporation_enthalpy(293.15) ==
          doctest::Approx(2.5008e6 * std::pow(273.15 / 293.15, 0.167 + 3.67e-4 * 293.15)));
    CHECK_THROWS_AS(evaporation_enthalpy(0.0), InputError);
}

TEST_CASE("gas constant of water vapor")
{
    CHECK(std::abs(PhysicalConstants{}.R_v - 8314.41 / 18.01528) / (8314.41 / 18.01528) < 1e-3);
}

TEST_CASE("coupling vanishes without vapor transport or when dry")
{
    auto m = MaterialParams::brick();
    m.mu = 1e300;
    const auto c = transport_coefficients(m, PhysicalConstants{}, 20.0, 0.5);
    CHECK(std::abs(c.k_tf) < 1e-250);
    CHECK(std::abs(c.k_ft) < 1e-250);
    const auto dry = transport_coefficients(MaterialParams::brick(), PhysicalConstants{}, 20.0, 0.0);
    CHECK(dry.k_ft == 0.0);
}

TEST_CASE("coefficient sets match the direct evaluation")
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> th(-39.0, 79.0), ph(0.0, 1.0);
    for (const auto& m : {MaterialParams::brick(), MaterialParams::mortar()}) {
        for (int i = 0; i < 50; ++i) {
            const double theta = th(rng), phi = ph(rng);
            const auto c = transport_coefficients(m, PhysicalConstants{}, theta, phi);
            const auto o = oracle::coefficients(m, theta, phi);
            CHECK(oracle::rel(c.k_tt, o.k_tt) < 1e-10);
            CHECK(oracle::rel(c.k_tf, o.k_tf) < 1e-10);
            CHECK(oracle::rel(c.k_ft, o.k_ft) < 1e-10);
            CHECK(oracle::rel(c.k_ff, o.k_ff) < 1e-10);
            CHECK(oracle::rel(c.c_tt, o.c_tt) < 1e-10);
            CHECK(oracle::rel(c.c_ff, o.c_ff) < 1e-10);
            CHECK(c.k_tt >= m.lambda_0);
            CHECK(c.c_tt >= m.rho_s * m.c_s);
        }
    }
}

TEST_CASE("water content is increasing and spans [0, w_f]")
{
    for (const auto& m : {MaterialParams::brick(), MaterialParams::mortar()}) {
        double prev = -1.0;
        for (int i = 0; i <= 1000; ++i) {
            const double w = water_content(m, i / 1000.0).value;
            CHECK(w > prev);
            prev = w;
        }
        CHECK(water_content(m, 1.0).value == doctest::Approx(m.w_f).epsilon(1e-14));
    }
}

TEST_CASE("all coefficients positive over the working range")
{
    for (const auto& m : {MaterialParams::brick(), MaterialParams::mortar()}) {
        for (double theta = -20.0; theta <= 40.0; theta += 2.5) {
            for (double phi = 0.1; phi <= 0.99; phi += 0.0445) {
                const auto c = transport_coefficients(m, PhysicalConstants{}, theta, phi);
                CHECK(c.k_tt > 0);
                CHECK(c.k_tf > 0);
                CHECK(c.k_ft > 0);
                CHECK(c.k_ff > 0);
                CHECK(c.c_tt > 0);
                CHECK(c.c_ff > 0);
            }
        }
    }
}

TEST_CASE("saturation pressure is monotone on the validity window")
{
    double prev = 0.0;
    for (double theta = -39.9; theta < 79.9; theta += 0.05) {
        const double p = saturation_pressure(theta).value;
        CHECK(p > prev);
        prev = p;
    }
}

TEST_CASE("models dispatch on the phase label")
{
    KunzelModel k({MaterialParams::brick(), MaterialParams::mortar()});
    CHECK(k.phase_count() == 2);
    CHECK_FALSE(k.is_linear());
    CHECK(k.coefficients(1, 20.0, 0.5).c_tt ==
          doctest::Approx(transport_coefficients(MaterialParams::mortar(), {}, 20.0, 0.5).c_tt));
    CHECK_THROWS_AS(k.coefficients(2, 20.0, 0.5), InputError);
    ConstantModel c({{1, 0, 0, 2, 3, 4}});
    CHECK(c.is_linear());
    CHECK(c.coefficients(0, -100.0, 5.0).k_ff == 2.0);
}
