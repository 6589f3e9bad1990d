#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "mfe2/climate.hpp"
#include "mfe2/error.hpp"
#include "mfe2/results_io.hpp"
#include "mfe2/scenario.hpp"

using namespace mfe2;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test case.
fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("mfe2_test_io_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string read_all(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_all(const fs::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary);
    out << text;
}

std::string error_of(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const InputError& e) {
        return e.what();
    }
    return {};
}

ClimateSeries parse(const std::string& text)
{
    std::istringstream is(text);
    return parse_climate_series(is, "test.csv");
}

History small_history(std::size_t nodes, int frames)
{
    History h;
    for (int k = 0; k < frames; ++k) {
        FieldState s = FieldState::uniform(nodes, 0.0, 0.0, 3600.0 * k);
        for (std::size_t i = 0; i < nodes; ++i) {
            s.theta[static_cast<Eigen::Index>(i)] = 20.0 + 0.1 * k - 1.0 / 3.0 * static_cast<double>(i);
            s.phi[static_cast<Eigen::Index>(i)] = 0.5 + 0.01 * k + 1e-17 * static_cast<double>(i);
        }
        h.push_back(s);
    }
    return h;
}

const char* kConstantMaterials = R"({
  "model": "constant",
  "phases": { "plaster": { "k_tt": 0.7, "k_tf": 0.0, "k_ft": 0.0, "k_ff": 3e-9, "c_tt": 1.5e6, "c_ff": 25.0 } }
})";

} // namespace

TEST_CASE("climate rows are parsed and errors name the line")
{
    const auto s = parse("# exterior\ntime_h,temperature_C,relative_humidity\n0,5,0.8\n1,6,0.7\n\n3,2,0.9\n");
    REQUIRE(s.samples.size() == 3);
    CHECK(s.samples[2].time_h == 3.0);
    CHECK(s.samples[2].humidity == 0.9);

    CHECK(error_of([] { parse("time,T,phi\n0,5,0.8\n"); }).find("line 1") != std::string::npos);
    CHECK(error_of([] { parse("time_h,temperature_C,relative_humidity\n0,5,0.8\n1,x,0.7\n"); })
              .find("line 3") != std::string::npos);
    CHECK(error_of([] { parse("time_h,temperature_C,relative_humidity\n0,5\n"); }).find("line 2") !=
          std::string::npos);
    CHECK(error_of([] { parse("time_h,temperature_C,relative_humidity\n0,5,0.8\n0,5,0.8\n"); })
              .find("not after") != std::string::npos);
    CHECK(error_of([] { parse("time_h,temperature_C,relative_humidity\n0,5,1.3\n"); }).find("outside") !=
          std::string::npos);
    CHECK_FALSE(error_of([] { parse("time_h,temperature_C,relative_humidity\n"); }).empty());
    CHECK_FALSE(error_of([] { parse(""); }).empty());
}

TEST_CASE("climate sampling interpolates and extends")
{
    auto s = parse("time_h,temperature_C,relative_humidity\n0,0,0.5\n10,10,0.7\n20,0,0.5\n");
    CHECK(sample_climate(s, 5.0).temperature == doctest::Approx(5.0));
    CHECK(sample_climate(s, 15.0).humidity == doctest::Approx(0.6));
    CHECK(sample_climate(s, -3.0).temperature == 0.0);
    // Periodic seam: the span is 20 h.
    CHECK(sample_climate(s, 25.0).temperature == doctest::Approx(5.0));
    CHECK(sample_climate(s, 40.0).temperature == doctest::Approx(0.0));
    CHECK(sample_climate(s, 49.0).temperature == doctest::Approx(9.0));
    s.extension = ClimateExtension::clamp;
    CHECK(sample_climate(s, 25.0).temperature == 0.0);
    CHECK(sample_climate(s, 25.0).humidity == 0.5);
    CHECK_THROWS_AS(climate_extension_from_string("mirror"), InputError);
}

TEST_CASE("synthetic climate is reproducible and continuous across the seam")
{
    SyntheticClimateSpec spec;
    spec.days = 30.0;
    const auto a = synthetic_climate(spec);
    const auto b = synthetic_climate(spec);
    REQUIRE(a.samples.size() == 30 * 24 + 1);
    std::ostringstream sa, sb;
    write_climate_series(sa, a);
    write_climate_series(sb, b);
    CHECK(sa.str() == sb.str());
    CHECK(a.samples.back().temperature == a.samples.front().temperature);
    CHECK(sample_climate(a, a.end() + 0.5).temperature == doctest::Approx(sample_climate(a, 0.5).temperature));
    a.validate();
    for (const auto& x : a.samples) {
        CHECK(x.humidity >= 0.05);
        CHECK(x.humidity <= 0.99);
    }

    spec.seed = 2;
    std::ostringstream sc;
    write_climate_series(sc, synthetic_climate(spec));
    CHECK(sc.str() != sa.str());

    // Written series read back exactly.
    std::istringstream in(sa.str());
    const auto back = parse_climate_series(in);
    REQUIRE(back.samples.size() == a.samples.size());
    CHECK(back.samples[17].temperature == a.samples[17].temperature);

    spec.step_h = 7.0;
    CHECK_THROWS_AS(synthetic_climate(spec), InputError);
}

TEST_CASE("csv results are deterministic and read back exactly")
{
    const fs::path dir = scratch("csv");
    const History h = small_history(5, 3);
    const auto paths = write_results_csv(h, (dir / "a").string());
    write_results_csv(h, (dir / "b").string());
    CHECK(paths.size() == 2);
    CHECK(read_all(dir / "a" / "theta.csv") == read_all(dir / "b" / "theta.csv"));
    CHECK(read_all(dir / "a" / "phi.csv") == read_all(dir / "b" / "phi.csv"));
    CHECK(read_all(dir / "a" / "theta.csv").rfind("node,0,1,2\n0,20,", 0) == 0);

    const History back = read_results_csv((dir / "a").string());
    REQUIRE(back.size() == h.size());
    for (std::size_t k = 0; k < h.size(); ++k) {
        CHECK(back[k].time == h[k].time);
        CHECK(back[k].theta == h[k].theta);
        CHECK(back[k].phi == h[k].phi);
    }

    write_all(dir / "a" / "phi.csv", "node,0,1\n0,0.5,0.5\n");
    CHECK_THROWS_AS(read_results_csv((dir / "a").string()), InputError);
    std::istringstream bad("node,0\n0,abc\n");
    CHECK_THROWS_AS(read_field_csv(bad), InputError);
    CHECK_THROWS_AS(write_results_csv({}, (dir / "c").string()), InputError);
}

TEST_CASE("vtk frames are deterministic")
{
    const fs::path dir = scratch("vtk");
    const Mesh m = generate_rectangle_mesh(1.0, 1.0, 1, 1, 0, "a");
    const History h = small_history(m.nodes.size(), 2);
    const auto paths = write_results(h, m, ResultFormat::vtk, (dir / "a").string());
    write_results(h, m, ResultFormat::vtk, (dir / "b").string());
    REQUIRE(paths.size() == 2);
    CHECK(fs::path(paths[1]).filename() == "frame_0001.vtk");
    const std::string text = read_all(paths[0]);
    CHECK(text == read_all(dir / "b" / "frame_0000.vtk"));
    CHECK(text.find("POINTS 4 double") != std::string::npos);
    CHECK(text.find("CELLS 2 8") != std::string::npos);
    CHECK(text.find("SCALARS phi double 1") != std::string::npos);
    CHECK_THROWS_AS(write_results(small_history(3, 1), m, ResultFormat::vtk, (dir / "c").string()), InputError);
    CHECK_THROWS_AS(result_format_from_string("hdf5"), InputError);
}

TEST_CASE("scenario serialization is a fixed point")
{
    const std::string text = R"({
      "mesh": {"kind": "rectangle", "lx": 0.6, "ly": 0.3, "nx": 3, "ny": 2, "phase": "masonry"},
      "cells": {"stack": {"brick_w": 0.29, "brick_h": 0.14, "joint": 0.01, "bond": "stack"}},
      "regions": {"masonry": "stack"},
      "climates": {"outdoor": {"synthetic": {"days": 2, "seed": 9}}},
      "boundaries": [{"set": "left", "theta": {"climate": "outdoor"}, "phi": {"climate": "outdoor"}},
                     {"set": "right", "theta": 21.5, "phi": {"value": 0.45}}],
      "time": {"dt_hours": 0.5, "t_end_hours": 3},
      "fe2": {"workers": 2, "policy": "region-aware", "cprime": false},
      "output": {"dir": "out", "format": "vtk"}
    })";
    const ScenarioConfig a = parse_scenario(text);
    CHECK(a.cells.at("stack").kind == "masonry_cell");
    CHECK(a.boundaries[0].theta->kind == "climate");
    CHECK(a.boundaries[1].theta->value == 21.5);
    CHECK(a.climates.at("outdoor").synthetic.seed == 9);
    CHECK(a.workers == 2);
    CHECK_FALSE(a.cprime);
    const std::string once = serialize_scenario(a);
    const std::string twice = serialize_scenario(parse_scenario(once));
    CHECK(once == twice);
    const auto lib = MaterialLibrary::masonry();
    CHECK(parse_materials(serialize_materials(lib)).kunzel.at("brick").w_80 == lib.kunzel.at("brick").w_80);
    const auto constant = parse_materials(kConstantMaterials);
    CHECK(serialize_materials(parse_materials(serialize_materials(constant))) == serialize_materials(constant));
}

TEST_CASE("scenario errors list every offending key")
{
    const std::string msg = error_of([] {
        parse_scenario(R"({"mesh": {"kind": "rectangle", "nx": "three"}, "colour": 1,
                          "time": {"dt_hours": -1}, "fe2": {"workers": 0, "policy": "random"},
                          "boundaries": [{"set": "left", "theta": {"climate": "nowhere"}}]})");
    });
    for (const char* key : {"mesh.nx", "colour", "time.dt_hours", "fe2.workers", "fe2.policy", "nowhere"}) {
        CHECK_MESSAGE(msg.find(key) != std::string::npos, key);
    }
    CHECK_FALSE(error_of([] { parse_scenario("{ not json"); }).empty());
    CHECK_FALSE(error_of([] { parse_scenario(R"({"time": {"dt_hours": 2, "t_end_hours": 3}})"); }).empty());
    CHECK_FALSE(error_of([] { parse_scenario(R"({"regions": {"a": "missing"}})"); }).empty());
    CHECK_FALSE(error_of([] { parse_materials(R"({"model": "kunzel", "phases": {}})"); }).empty());
    CHECK_FALSE(error_of([] { parse_materials(R"({"phases": {"x": {"w_f": 1}}})"); }).empty());
}

TEST_CASE("environment overrides sit between the file and the command line")
{
    ::setenv("MFE2_WORKERS", "3", 1);
    ::setenv("MFE2_CPRIME", "off", 1);
    ::setenv("MFE2_DT_HOURS", "0.25", 1);
    const ScenarioOverrides env = overrides_from_env();
    ScenarioOverrides cli;
    cli.workers = 5;
    ScenarioConfig c = parse_scenario(R"({"climates": {"x": {"synthetic": {"days": 1}}}})");
    ScenarioOverrides both = merge(env, cli);
    both.seed = 77;
    apply_overrides(c, both);
    CHECK(c.workers == 5);
    CHECK_FALSE(c.cprime);
    CHECK(c.dt_hours == 0.25);
    CHECK(c.climates.at("x").synthetic.seed == 77);

    ::setenv("MFE2_CPRIME", "maybe", 1);
    CHECK_THROWS_AS(overrides_from_env(), InputError);
    ::setenv("MFE2_CPRIME", "on", 1);
    ::setenv("MFE2_WORKERS", "many", 1);
    CHECK_THROWS_AS(overrides_from_env(), InputError);
    ::unsetenv("MFE2_WORKERS");
    ::unsetenv("MFE2_CPRIME");
    ::unsetenv("MFE2_DT_HOURS");

    ScenarioConfig d;
    ScenarioOverrides bad;
    bad.dt_hours = 0.7;
    CHECK_THROWS_AS(apply_overrides(d, bad), InputError);
}

TEST_CASE("boundary provider samples climates and reports missing sets")
{
    const Mesh m = generate_rectangle_mesh(1.0, 1.0, 2, 2, 0, "a");
    ScenarioConfig c = parse_scenario(R"({
      "climates": {"x": {"synthetic": {"days": 1, "temperature_noise": 0, "humidity_noise": 0}}},
      "boundaries": [{"set": "left", "theta": {"climate": "x"}, "phi": 0.6}, {"set": "bottom", "theta": 3}]})");
    const auto bc = make_boundary_provider(c, m);
    const StepBoundary b = bc(3.0 * 3600.0);
    SyntheticClimateSpec spec = c.climates.at("x").synthetic;
    const double expect = sample_climate(synthetic_climate(spec), 3.0).temperature;
    int left_theta = 0, corner = 0;
    for (const auto& v : b.dirichlet) {
        if (v.field == kTheta && v.node == 0) {
            // The corner belongs to both sets; the later entry wins.
            CHECK(v.value == 3.0);
            ++corner;
        } else if (v.field == kTheta && m.nodes[static_cast<std::size_t>(v.node)].x == 0.0) {
            CHECK(v.value == doctest::Approx(expect));
            ++left_theta;
        }
    }
    CHECK(corner == 1);
    CHECK(left_theta == 2);

    c.boundaries.push_back({"north", FieldBoundary{}, std::nullopt});
    CHECK(error_of([&] { make_boundary_provider(c, m); }).find("north") != std::string::npos);
}

TEST_CASE("gen-mesh writes a readable mesh")
{
    const fs::path dir = scratch("gen");
    ScenarioConfig c = parse_scenario(R"({"mesh": {"kind": "rectangle", "lx": 1, "ly": 1, "nx": 2, "ny": 2}})");
    c.output_dir = dir.string();
    std::ostringstream out, err;
    CHECK(run_scenario(c, "gen-mesh", out, err) == 0);
    const Mesh m = read_mesh_file((dir / "mesh.mesh").string());
    CHECK(m.nodes.size() == 9);
    CHECK(m.triangles.size() == 8);
    CHECK(m.has_boundary("left"));
    CHECK(run_scenario(c, "solve-everything", out, err) == 2);
}

TEST_CASE("solve-fine and compare on identical histories give zero error")
{
    const fs::path dir = scratch("compare");
    write_all(dir / "materials.json", kConstantMaterials);
    write_all(dir / "scenario.json", R"({
      "materials": "materials.json",
      "mesh": {"kind": "rectangle", "lx": 0.4, "ly": 0.1, "nx": 4, "ny": 1, "phase": "plaster"},
      "boundaries": [{"set": "left", "theta": 5, "phi": 0.8}],
      "time": {"dt_hours": 1, "t_end_hours": 3},
      "compare": {"reference": "a", "other": "b", "origin": [0, 0], "cell": [0.2, 0.1], "cells": [2, 1]},
      "output": {"dir": "a"}
    })");
    ScenarioConfig c = load_scenario((dir / "scenario.json").string());
    std::ostringstream out, err;
    c.output_dir = (dir / "a").string();
    REQUIRE(run_scenario(c, "solve-fine", out, err) == 0);
    c.output_dir = (dir / "b").string();
    REQUIRE(run_scenario(c, "solve-fine", out, err) == 0);
    CHECK(read_all(dir / "a" / "theta.csv") == read_all(dir / "b" / "theta.csv"));
    c.output_dir = (dir / "cmp").string();
    REQUIRE(run_scenario(c, "compare", out, err) == 0);
    const std::string table = read_all(dir / "cmp" / "comparison.csv");
    CHECK(table.find("theta,0,0,0,") != std::string::npos);
    CHECK(table.find("phi,0,0,0,") != std::string::npos);

    c.compare->other_dir = "missing";
    CHECK(run_scenario(c, "compare", out, err) == 2);
}

TEST_CASE("solve-rve on a homogeneous cell returns the material flux")
{
    const fs::path dir = scratch("rve");
    write_all(dir / "materials.json", kConstantMaterials);
    write_all(dir / "scenario.json", R"({
      "materials": "materials.json",
      "cells": {"plain": {"kind": "rectangle", "lx": 0.1, "ly": 0.1, "nx": 3, "ny": 3, "phase": "plaster"}},
      "rve": {"cell": "plain", "theta": 20, "phi": 0.5, "grad_theta": [1, 0], "grad_phi": [0, 0], "steps": 2},
      "output": {"dir": "out"}
    })");
    ScenarioConfig c = load_scenario((dir / "scenario.json").string());
    c.output_dir = (dir / "out").string();
    std::ostringstream out, err;
    REQUIRE(run_scenario(c, "solve-rve", out, err) == 0);
    std::istringstream table(read_all(dir / "out" / "rve_response.csv"));
    std::string header, row;
    std::getline(table, header);
    std::getline(table, row);
    std::getline(table, row);
    std::vector<double> v;
    std::stringstream ss(row);
    std::string f;
    while (std::getline(ss, f, ',')) v.push_back(std::stod(f));
    REQUIRE(v.size() == 22);
    CHECK(v[0] == 2.0);
    CHECK(v[2] == doctest::Approx(-0.7).epsilon(1e-9)); // q_x
    CHECK(std::abs(v[3]) < 1e-12);                     // q_y
    CHECK(v[12] == doctest::Approx(0.7).epsilon(1e-6)); // K_tt_xx
}
