#include "mfe2/scenario.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mfe2/error.hpp"
#include "mfe2/results_io.hpp"
#include "mfe2/scheduler.hpp"

namespace mfe2 {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Collects every problem found while reading a document.
class Reader {
public:
    explicit Reader(std::string source) : source_(std::move(source)) {}

    void error(const std::string& path, const std::string& msg) { errors_.push_back(path + ": " + msg); }

    bool object(const json& j, const std::string& path, std::initializer_list<const char*> allowed)
    {
        if (!j.is_object()) {
            error(path, "expected an object");
            return false;
        }
        std::set<std::string> ok(allowed.begin(), allowed.end());
        for (const auto& [key, value] : j.items()) {
            if (!ok.count(key)) error(join(path, key), "unknown key");
        }
        return true;
    }

    static std::string join(const std::string& path, const std::string& key)
    {
        return path.empty() ? key : path + "." + key;
    }

    void number(const json& j, const std::string& path, const char* key, double& out, bool required = false)
    {
        if (!present(j, path, key, required)) return;
        const json& v = j.at(key);
        if (!v.is_number()) return error(join(path, key), "expected a number");
        out = v.get<double>();
    }

    void integer(const json& j, const std::string& path, const char* key, int& out, bool required = false)
    {
        if (!present(j, path, key, required)) return;
        const json& v = j.at(key);
        if (!v.is_number_integer()) return error(join(path, key), "expected an integer");
        out = v.get<int>();
    }

    void uint64(const json& j, const std::string& path, const char* key, std::uint64_t& out)
    {
        if (!present(j, path, key, false)) return;
        const json& v = j.at(key);
        if (!v.is_number_unsigned()) return error(join(path, key), "expected a non-negative integer");
        out = v.get<std::uint64_t>();
    }

    void string(const json& j, const std::string& path, const char* key, std::string& out, bool required = false)
    {
        if (!present(j, path, key, required)) return;
        const json& v = j.at(key);
        if (!v.is_string()) return error(join(path, key), "expected a string");
        out = v.get<std::string>();
    }

    void boolean(const json& j, const std::string& path, const char* key, bool& out)
    {
        if (!present(j, path, key, false)) return;
        const json& v = j.at(key);
        if (!v.is_boolean()) return error(join(path, key), "expected true or false");
        out = v.get<bool>();
    }

    void pair(const json& j, const std::string& path, const char* key, double& a, double& b)
    {
        if (!present(j, path, key, false)) return;
        const json& v = j.at(key);
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
            return error(join(path, key), "expected [x, y]");
        }
        a = v[0].get<double>();
        b = v[1].get<double>();
    }

    void finish() const
    {
        if (errors_.empty()) return;
        std::ostringstream os;
        os << source_ << ": " << errors_.size() << " problem" << (errors_.size() > 1 ? "s" : "");
        for (const auto& e : errors_) os << "\n  " << e;
        throw InputError(os.str());
    }

private:
    bool present(const json& j, const std::string& path, const char* key, bool required)
    {
        if (j.contains(key)) return true;
        if (required) error(join(path, key), "missing");
        return false;
    }

    std::string source_;
    std::vector<std::string> errors_;
};

json parse_json(const std::string& text, const std::string& source)
{
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(source + ": " + e.what());
    }
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string resolve(const std::string& base, const std::string& path)
{
    if (path.empty() || fs::path(path).is_absolute()) return path;
    return (fs::path(base) / path).string();
}

} // namespace

bool MaterialLibrary::has(const std::string& name) const
{
    return kind == Kind::kunzel ? kunzel.count(name) > 0 : constant.count(name) > 0;
}

std::shared_ptr<const MaterialModel> MaterialLibrary::model_for(const Mesh& mesh) const
{
    std::vector<std::string> missing;
    for (const auto& n : mesh.phase_names) {
        if (!n.empty() && !has(n)) missing.push_back(n);
    }
    if (!missing.empty()) {
        std::string msg = "material library lacks phase";
        for (const auto& m : missing) msg += " '" + m + "'";
        throw InputError(msg);
    }
    if (kind == Kind::kunzel) {
        std::vector<MaterialParams> phases;
        for (const auto& n : mesh.phase_names) {
            phases.push_back(n.empty() ? kunzel.begin()->second : kunzel.at(n));
        }
        return std::make_shared<KunzelModel>(std::move(phases), constants);
    }
    std::vector<CoefficientSet> phases;
    for (const auto& n : mesh.phase_names) {
        phases.push_back(n.empty() ? constant.begin()->second : constant.at(n));
    }
    return std::make_shared<ConstantModel>(std::move(phases));
}

MaterialLibrary MaterialLibrary::masonry()
{
    MaterialLibrary lib;
    lib.kunzel["brick"] = MaterialParams::brick();
    lib.kunzel["mortar"] = MaterialParams::mortar();
    return lib;
}

MaterialLibrary parse_materials(const std::string& json_text, const std::string& source)
{
    const json j = parse_json(json_text, source);
    Reader r(source);
    MaterialLibrary lib;
    if (!r.object(j, "", {"model", "constants", "phases"})) r.finish();
    std::string model = "kunzel";
    r.string(j, "", "model", model);
    if (model == "constant") {
        lib.kind = MaterialLibrary::Kind::constant;
    } else if (model != "kunzel") {
        r.error("model", "expected kunzel or constant");
    }
    if (j.contains("constants") && r.object(j["constants"], "constants", {"p_a", "R_v", "c_w", "p"})) {
        const json& c = j["constants"];
        r.number(c, "constants", "p_a", lib.constants.p_a);
        r.number(c, "constants", "R_v", lib.constants.R_v);
        r.number(c, "constants", "c_w", lib.constants.c_w);
        r.number(c, "constants", "p", lib.constants.p);
    }
    if (!j.contains("phases") || !j["phases"].is_object() || j["phases"].empty()) {
        r.error("phases", "expected a non-empty object");
    }
    r.finish();

    Reader pr(source);
    for (const auto& [name, p] : j["phases"].items()) {
        const std::string path = "phases." + name;
        if (lib.kind == MaterialLibrary::Kind::kunzel) {
            if (!pr.object(p, path, {"w_f", "w_80", "lambda_0", "b_tcs", "rho_s", "mu", "A", "c_s"})) continue;
            double v[8] = {};
            const char* keys[8] = {"w_f", "w_80", "lambda_0", "b_tcs", "rho_s", "mu", "A", "c_s"};
            for (int k = 0; k < 8; ++k) pr.number(p, path, keys[k], v[k], true);
            try {
                lib.kunzel[name] = MaterialParams::from_measured(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]);
            } catch (const InputError& e) {
                pr.error(path, e.what());
            }
        } else {
            if (!pr.object(p, path, {"k_tt", "k_tf", "k_ft", "k_ff", "c_tt", "c_ff"})) continue;
            CoefficientSet c;
            pr.number(p, path, "k_tt", c.k_tt, true);
            pr.number(p, path, "k_tf", c.k_tf, true);
            pr.number(p, path, "k_ft", c.k_ft, true);
            pr.number(p, path, "k_ff", c.k_ff, true);
            pr.number(p, path, "c_tt", c.c_tt, true);
            pr.number(p, path, "c_ff", c.c_ff, true);
            if (!(c.c_tt > 0.0) || !(c.c_ff > 0.0) || c.k_tt < 0.0 || c.k_ff < 0.0) {
                pr.error(path, "storage must be positive and diagonal conductivities non-negative");
            }
            lib.constant[name] = c;
        }
    }
    pr.finish();
    return lib;
}

std::string serialize_materials(const MaterialLibrary& lib)
{
    json j;
    j["model"] = lib.kind == MaterialLibrary::Kind::kunzel ? "kunzel" : "constant";
    j["constants"] = {{"p_a", lib.constants.p_a}, {"R_v", lib.constants.R_v},
                      {"c_w", lib.constants.c_w}, {"p", lib.constants.p}};
    json phases = json::object();
    for (const auto& [name, m] : lib.kunzel) {
        phases[name] = {{"w_f", m.w_f},   {"w_80", m.w_80}, {"lambda_0", m.lambda_0},
                        {"b_tcs", m.b_tcs}, {"rho_s", m.rho_s}, {"mu", m.mu},
                        {"A", m.A},       {"c_s", m.c_s}};
    }
    for (const auto& [name, c] : lib.constant) {
        phases[name] = {{"k_tt", c.k_tt}, {"k_tf", c.k_tf}, {"k_ft", c.k_ft},
                        {"k_ff", c.k_ff}, {"c_tt", c.c_tt}, {"c_ff", c.c_ff}};
    }
    j["phases"] = phases;
    return j.dump(2) + "\n";
}

MaterialLibrary load_materials(const std::string& path)
{
    return parse_materials(read_file(path), path);
}

Mesh build_mesh(const MeshSpec& s, const std::string& base_dir)
{
    Mesh m;
    if (s.kind == "rectangle") {
        m = generate_rectangle_mesh(s.lx, s.ly, s.nx, s.ny, 0, s.phase);
    } else if (s.kind == "masonry_cell") {
        m = generate_masonry_cell(s.cell);
    } else if (s.kind == "masonry_wall") {
        m = generate_masonry_wall(s.cell, s.cells_x, s.cells_y);
    } else if (s.kind == "file") {
        m = read_mesh_file(resolve(base_dir, s.file));
    } else {
        throw InputError("unknown mesh kind '" + s.kind + "'");
    }
    if (s.scale != 1.0) m = scale_mesh(m, s.scale);
    return m;
}

namespace {

void read_mesh_spec(Reader& r, const json& j, const std::string& path, MeshSpec& s)
{
    if (!r.object(j, path, {"kind", "file", "lx", "ly", "nx", "ny", "phase", "brick_w", "brick_h",
                            "joint", "bond", "joint_divisions", "brick_divisions_x",
                            "brick_divisions_y", "cells_x", "cells_y", "scale"})) {
        return;
    }
    r.string(j, path, "kind", s.kind);
    r.string(j, path, "file", s.file);
    r.number(j, path, "lx", s.lx);
    r.number(j, path, "ly", s.ly);
    r.integer(j, path, "nx", s.nx);
    r.integer(j, path, "ny", s.ny);
    r.string(j, path, "phase", s.phase);
    r.number(j, path, "brick_w", s.cell.brick_w);
    r.number(j, path, "brick_h", s.cell.brick_h);
    r.number(j, path, "joint", s.cell.joint);
    std::string bond = s.cell.bond == Bond::stack ? "stack" : "running";
    r.string(j, path, "bond", bond);
    try {
        s.cell.bond = bond_from_string(bond);
    } catch (const InputError&) {
        r.error(Reader::join(path, "bond"), "expected stack or running");
    }
    r.integer(j, path, "joint_divisions", s.cell.joint_divisions);
    r.integer(j, path, "brick_divisions_x", s.cell.brick_divisions_x);
    r.integer(j, path, "brick_divisions_y", s.cell.brick_divisions_y);
    r.integer(j, path, "cells_x", s.cells_x);
    r.integer(j, path, "cells_y", s.cells_y);
    r.number(j, path, "scale", s.scale);

    static const std::set<std::string> kinds{"rectangle", "masonry_cell", "masonry_wall", "file"};
    if (!kinds.count(s.kind)) r.error(Reader::join(path, "kind"), "expected rectangle, masonry_cell, masonry_wall or file");
    if (s.kind == "file" && s.file.empty()) r.error(Reader::join(path, "file"), "required for kind file");
    if (s.kind == "rectangle" && (s.nx < 1 || s.ny < 1 || !(s.lx > 0.0) || !(s.ly > 0.0))) {
        r.error(path, "rectangle needs positive lx, ly, nx, ny");
    }
    if (!(s.scale > 0.0)) r.error(Reader::join(path, "scale"), "must be positive");
}

json mesh_spec_json(const MeshSpec& s)
{
    return {{"kind", s.kind},
            {"file", s.file},
            {"lx", s.lx},
            {"ly", s.ly},
            {"nx", s.nx},
            {"ny", s.ny},
            {"phase", s.phase},
            {"brick_w", s.cell.brick_w},
            {"brick_h", s.cell.brick_h},
            {"joint", s.cell.joint},
            {"bond", s.cell.bond == Bond::stack ? "stack" : "running"},
            {"joint_divisions", s.cell.joint_divisions},
            {"brick_divisions_x", s.cell.brick_divisions_x},
            {"brick_divisions_y", s.cell.brick_divisions_y},
            {"cells_x", s.cells_x},
            {"cells_y", s.cells_y},
            {"scale", s.scale}};
}

void read_field_boundary(Reader& r, const json& j, const std::string& path, std::optional<FieldBoundary>& out)
{
    FieldBoundary f;
    if (j.is_number()) {
        f.value = j.get<double>();
        out = f;
        return;
    }
    if (!r.object(j, path, {"value", "climate"})) return;
    if (j.contains("value") == j.contains("climate")) {
        r.error(path, "give exactly one of value or climate");
        return;
    }
    if (j.contains("value")) {
        r.number(j, path, "value", f.value);
    } else {
        f.kind = "climate";
        r.string(j, path, "climate", f.climate);
    }
    out = f;
}

json field_boundary_json(const FieldBoundary& f)
{
    if (f.kind == "climate") return {{"climate", f.climate}};
    return {{"value", f.value}};
}

} // namespace

ScenarioConfig parse_scenario(const std::string& json_text, const std::string& base_dir)
{
    const json j = parse_json(json_text, "scenario");
    Reader r("scenario");
    ScenarioConfig c;
    c.base_dir = base_dir;
    if (!r.object(j, "", {"materials", "mesh", "fine_mesh", "cells", "regions", "initial", "boundaries",
                          "climates", "time", "solver", "fe2", "rve", "compare", "output"})) {
        r.finish();
    }
    r.string(j, "", "materials", c.materials);
    if (j.contains("mesh")) read_mesh_spec(r, j["mesh"], "mesh", c.mesh);
    if (j.contains("fine_mesh")) {
        MeshSpec f;
        read_mesh_spec(r, j["fine_mesh"], "fine_mesh", f);
        c.fine_mesh = f;
    }
    if (j.contains("cells")) {
        if (!j["cells"].is_object()) {
            r.error("cells", "expected an object");
        } else {
            for (const auto& [name, v] : j["cells"].items()) {
                MeshSpec s;
                s.kind = "masonry_cell";
                read_mesh_spec(r, v, "cells." + name, s);
                c.cells[name] = s;
            }
        }
    }
    if (j.contains("regions")) {
        if (!j["regions"].is_object()) {
            r.error("regions", "expected an object");
        } else {
            for (const auto& [name, v] : j["regions"].items()) {
                if (!v.is_string()) {
                    r.error("regions." + name, "expected a cell name");
                } else {
                    c.regions[name] = v.get<std::string>();
                }
            }
        }
    }
    if (j.contains("initial") && r.object(j["initial"], "initial", {"theta", "phi"})) {
        r.number(j["initial"], "initial", "theta", c.initial_theta);
        r.number(j["initial"], "initial", "phi", c.initial_phi);
    }
    if (j.contains("climates")) {
        if (!j["climates"].is_object()) {
            r.error("climates", "expected an object");
        } else {
            for (const auto& [name, v] : j["climates"].items()) {
                const std::string path = "climates." + name;
                ClimateSpec s;
                if (!r.object(v, path, {"file", "extension", "synthetic"})) continue;
                r.string(v, path, "file", s.file);
                r.string(v, path, "extension", s.extension);
                if (s.extension != "periodic" && s.extension != "clamp") {
                    r.error(path + ".extension", "expected periodic or clamp");
                }
                if (v.contains("synthetic")) {
                    const json& y = v["synthetic"];
                    const std::string sp = path + ".synthetic";
                    auto& g = s.synthetic;
                    if (r.object(y, sp, {"days", "step_h", "mean_temperature", "annual_temperature_amplitude",
                                         "daily_temperature_amplitude", "mean_humidity",
                                         "annual_humidity_amplitude", "daily_humidity_amplitude",
                                         "temperature_noise", "humidity_noise", "seed"})) {
                        r.number(y, sp, "days", g.days);
                        r.number(y, sp, "step_h", g.step_h);
                        r.number(y, sp, "mean_temperature", g.mean_temperature);
                        r.number(y, sp, "annual_temperature_amplitude", g.annual_temperature_amplitude);
                        r.number(y, sp, "daily_temperature_amplitude", g.daily_temperature_amplitude);
                        r.number(y, sp, "mean_humidity", g.mean_humidity);
                        r.number(y, sp, "annual_humidity_amplitude", g.annual_humidity_amplitude);
                        r.number(y, sp, "daily_humidity_amplitude", g.daily_humidity_amplitude);
                        r.number(y, sp, "temperature_noise", g.temperature_noise);
                        r.number(y, sp, "humidity_noise", g.humidity_noise);
                        r.uint64(y, sp, "seed", g.seed);
                    }
                }
                c.climates[name] = s;
            }
        }
    }
    if (j.contains("boundaries")) {
        if (!j["boundaries"].is_array()) {
            r.error("boundaries", "expected an array");
        } else {
            for (std::size_t i = 0; i < j["boundaries"].size(); ++i) {
                const json& b = j["boundaries"][i];
                const std::string path = "boundaries[" + std::to_string(i) + "]";
                BoundarySpec s;
                if (!r.object(b, path, {"set", "theta", "phi"})) continue;
                r.string(b, path, "set", s.set, true);
                if (b.contains("theta")) read_field_boundary(r, b["theta"], path + ".theta", s.theta);
                if (b.contains("phi")) read_field_boundary(r, b["phi"], path + ".phi", s.phi);
                for (const auto* f : {&s.theta, &s.phi}) {
                    if (*f && (*f)->kind == "climate" && !c.climates.count((*f)->climate) &&
                        !(j.contains("climates") && j["climates"].is_object() &&
                          j["climates"].contains((*f)->climate))) {
                        r.error(path, "unknown climate '" + (*f)->climate + "'");
                    }
                }
                c.boundaries.push_back(s);
            }
        }
    }
    if (j.contains("time") && r.object(j["time"], "time", {"dt_hours", "t_end_hours"})) {
        r.number(j["time"], "time", "dt_hours", c.dt_hours);
        r.number(j["time"], "time", "t_end_hours", c.t_end_hours);
    }
    if (j.contains("solver") &&
        r.object(j["solver"], "solver", {"newton_tol", "newton_floor", "newton_max_iter", "jacobian", "moisture_weight"})) {
        const json& s = j["solver"];
        r.number(s, "solver", "newton_tol", c.newton_tol);
        r.number(s, "solver", "newton_floor", c.newton_floor);
        r.integer(s, "solver", "newton_max_iter", c.newton_max_iter);
        r.string(s, "solver", "jacobian", c.jacobian);
        r.number(s, "solver", "moisture_weight", c.moisture_weight);
    }
    if (j.contains("fe2") && r.object(j["fe2"], "fe2", {"workers", "policy", "cprime"})) {
        r.integer(j["fe2"], "fe2", "workers", c.workers);
        r.string(j["fe2"], "fe2", "policy", c.policy);
        r.boolean(j["fe2"], "fe2", "cprime", c.cprime);
    }
    if (j.contains("rve") && r.object(j["rve"], "rve", {"cell", "theta", "phi", "grad_theta", "grad_phi", "steps"})) {
        const json& v = j["rve"];
        RveSpec s;
        r.string(v, "rve", "cell", s.cell, true);
        r.number(v, "rve", "theta", s.loading.Theta);
        r.number(v, "rve", "phi", s.loading.Phi);
        r.pair(v, "rve", "grad_theta", s.loading.grad_Theta.x(), s.loading.grad_Theta.y());
        r.pair(v, "rve", "grad_phi", s.loading.grad_Phi.x(), s.loading.grad_Phi.y());
        r.integer(v, "rve", "steps", s.steps);
        if (s.steps < 1) r.error("rve.steps", "must be at least 1");
        c.rve = s;
    }
    if (j.contains("compare") &&
        r.object(j["compare"], "compare", {"reference", "other", "origin", "cell", "cells"})) {
        const json& v = j["compare"];
        CompareSpec s;
        r.string(v, "compare", "reference", s.reference_dir, true);
        r.string(v, "compare", "other", s.other_dir, true);
        r.pair(v, "compare", "origin", s.origin.x, s.origin.y);
        r.pair(v, "compare", "cell", s.cell_w, s.cell_h);
        double nx = s.nx, ny = s.ny;
        r.pair(v, "compare", "cells", nx, ny);
        s.nx = static_cast<int>(nx);
        s.ny = static_cast<int>(ny);
        if (s.nx < 1 || s.ny < 1 || nx != s.nx || ny != s.ny) r.error("compare.cells", "expected two positive integers");
        c.compare = s;
    }
    if (j.contains("output") && r.object(j["output"], "output", {"dir", "format"})) {
        r.string(j["output"], "output", "dir", c.output_dir);
        r.string(j["output"], "output", "format", c.format);
    }

    if (!(c.dt_hours > 0.0)) r.error("time.dt_hours", "must be positive");
    if (!(c.t_end_hours >= 0.0)) r.error("time.t_end_hours", "must be non-negative");
    if (c.dt_hours > 0.0 && c.t_end_hours >= 0.0) {
        try {
            step_count(c.t_end_hours, c.dt_hours);
        } catch (const InputError&) {
            r.error("time.t_end_hours", "must be a multiple of dt_hours");
        }
    }
    if (!(c.newton_tol > 0.0)) r.error("solver.newton_tol", "must be positive");
    if (!(c.newton_floor > 0.0)) r.error("solver.newton_floor", "must be positive");
    if (c.newton_max_iter < 1) r.error("solver.newton_max_iter", "must be at least 1");
    if (c.jacobian != "picard" && c.jacobian != "consistent") r.error("solver.jacobian", "expected picard or consistent");
    if (!(c.moisture_weight > 0.0)) r.error("solver.moisture_weight", "must be positive");
    if (c.workers < 1) r.error("fe2.workers", "must be at least 1");
    if (c.policy != "contiguous" && c.policy != "region-aware") r.error("fe2.policy", "expected contiguous or region-aware");
    if (c.format != "csv" && c.format != "vtk") r.error("output.format", "expected csv or vtk");
    if (c.initial_phi < 0.0 || c.initial_phi > 1.0) r.error("initial.phi", "must lie in [0, 1]");
    for (const auto& [region, cell] : c.regions) {
        if (!c.cells.count(cell)) r.error("regions." + region, "unknown cell '" + cell + "'");
    }
    if (c.rve && !c.rve->cell.empty() && !c.cells.count(c.rve->cell)) {
        r.error("rve.cell", "unknown cell '" + c.rve->cell + "'");
    }
    r.finish();
    return c;
}

std::string serialize_scenario(const ScenarioConfig& c)
{
    json j;
    j["materials"] = c.materials;
    j["mesh"] = mesh_spec_json(c.mesh);
    if (c.fine_mesh) j["fine_mesh"] = mesh_spec_json(*c.fine_mesh);
    json cells = json::object();
    for (const auto& [name, s] : c.cells) cells[name] = mesh_spec_json(s);
    j["cells"] = cells;
    json regions = json::object();
    for (const auto& [name, s] : c.regions) regions[name] = s;
    j["regions"] = regions;
    j["initial"] = {{"theta", c.initial_theta}, {"phi", c.initial_phi}};
    json climates = json::object();
    for (const auto& [name, s] : c.climates) {
        const auto& g = s.synthetic;
        climates[name] = {{"file", s.file},
                          {"extension", s.extension},
                          {"synthetic",
                           {{"days", g.days},
                            {"step_h", g.step_h},
                            {"mean_temperature", g.mean_temperature},
                            {"annual_temperature_amplitude", g.annual_temperature_amplitude},
                            {"daily_temperature_amplitude", g.daily_temperature_amplitude},
                            {"mean_humidity", g.mean_humidity},
                            {"annual_humidity_amplitude", g.annual_humidity_amplitude},
                            {"daily_humidity_amplitude", g.daily_humidity_amplitude},
                            {"temperature_noise", g.temperature_noise},
                            {"humidity_noise", g.humidity_noise},
                            {"seed", g.seed}}}};
    }
    j["climates"] = climates;
    json bounds = json::array();
    for (const auto& b : c.boundaries) {
        json e = {{"set", b.set}};
        if (b.theta) e["theta"] = field_boundary_json(*b.theta);
        if (b.phi) e["phi"] = field_boundary_json(*b.phi);
        bounds.push_back(e);
    }
    j["boundaries"] = bounds;
    j["time"] = {{"dt_hours", c.dt_hours}, {"t_end_hours", c.t_end_hours}};
    j["solver"] = {{"newton_tol", c.newton_tol},
                   {"newton_floor", c.newton_floor},
                   {"newton_max_iter", c.newton_max_iter},
                   {"jacobian", c.jacobian},
                   {"moisture_weight", c.moisture_weight}};
    j["fe2"] = {{"workers", c.workers}, {"policy", c.policy}, {"cprime", c.cprime}};
    if (c.rve) {
        const auto& l = c.rve->loading;
        j["rve"] = {{"cell", c.rve->cell},
                    {"theta", l.Theta},
                    {"phi", l.Phi},
                    {"grad_theta", {l.grad_Theta.x(), l.grad_Theta.y()}},
                    {"grad_phi", {l.grad_Phi.x(), l.grad_Phi.y()}},
                    {"steps", c.rve->steps}};
    }
    if (c.compare) {
        const auto& s = *c.compare;
        j["compare"] = {{"reference", s.reference_dir},
                        {"other", s.other_dir},
                        {"origin", {s.origin.x, s.origin.y}},
                        {"cell", {s.cell_w, s.cell_h}},
                        {"cells", {s.nx, s.ny}}};
    }
    j["output"] = {{"dir", c.output_dir}, {"format", c.format}};
    return j.dump(2) + "\n";
}

ScenarioConfig load_scenario(const std::string& path)
{
    const std::string base = fs::path(path).parent_path().string();
    try {
        return parse_scenario(read_file(path), base.empty() ? "." : base);
    } catch (const InputError& e) {
        throw InputError(path + ": " + e.what());
    }
}

ScenarioOverrides overrides_from_env()
{
    ScenarioOverrides o;
    auto get = [](const char* name) -> std::optional<std::string> {
        const std::string full = std::string(kEnvPrefix) + name;
        const char* v = std::getenv(full.c_str());
        if (!v || !*v) return std::nullopt;
        return std::string(v);
    };
    auto bad = [](const char* name, const std::string& v) {
        return InputError(std::string(kEnvPrefix) + name + ": invalid value '" + v + "'");
    };
    try {
        if (auto v = get("WORKERS")) o.workers = std::stoi(*v);
        if (auto v = get("DT_HOURS")) o.dt_hours = std::stod(*v);
        if (auto v = get("T_END_HOURS")) o.t_end_hours = std::stod(*v);
        if (auto v = get("SEED")) o.seed = std::stoull(*v);
    } catch (const std::exception&) {
        throw InputError(std::string("invalid numeric ") + kEnvPrefix + " environment override");
    }
    if (auto v = get("OUTPUT_DIR")) o.output_dir = *v;
    if (auto v = get("CPRIME")) {
        if (*v == "on") {
            o.cprime = true;
        } else if (*v == "off") {
            o.cprime = false;
        } else {
            throw bad("CPRIME", *v);
        }
    }
    return o;
}

ScenarioOverrides merge(const ScenarioOverrides& a, const ScenarioOverrides& b)
{
    ScenarioOverrides o = a;
    if (b.workers) o.workers = b.workers;
    if (b.dt_hours) o.dt_hours = b.dt_hours;
    if (b.t_end_hours) o.t_end_hours = b.t_end_hours;
    if (b.output_dir) o.output_dir = b.output_dir;
    if (b.cprime) o.cprime = b.cprime;
    if (b.seed) o.seed = b.seed;
    return o;
}

void apply_overrides(ScenarioConfig& c, const ScenarioOverrides& o)
{
    if (o.workers) c.workers = *o.workers;
    if (o.dt_hours) c.dt_hours = *o.dt_hours;
    if (o.t_end_hours) c.t_end_hours = *o.t_end_hours;
    if (o.output_dir) c.output_dir = *o.output_dir;
    if (o.cprime) c.cprime = *o.cprime;
    if (o.seed) {
        for (auto& [name, s] : c.climates) s.synthetic.seed = *o.seed;
    }
    // Re-validate through a serialization round trip.
    c = parse_scenario(serialize_scenario(c), c.base_dir);
}

SolverConfig solver_config(const ScenarioConfig& c)
{
    SolverConfig s;
    s.newton.tol = c.newton_tol;
    s.newton.floor = c.newton_floor;
    s.newton.max_iter = c.newton_max_iter;
    s.dt = c.dt_hours * 3600.0;
    s.jacobian = jacobian_mode_from_string(c.jacobian);
    s.moisture_weight = c.moisture_weight;
    s.validate();
    return s;
}

BoundaryProvider make_boundary_provider(const ScenarioConfig& c, const Mesh& mesh)
{
    auto series = std::make_shared<std::map<std::string, ClimateSeries>>();
    for (const auto& [name, s] : c.climates) {
        const auto ext = climate_extension_from_string(s.extension);
        if (s.file.empty()) {
            auto cs = synthetic_climate(s.synthetic);
            cs.extension = ext;
            (*series)[name] = std::move(cs);
        } else {
            (*series)[name] = load_climate_series(resolve(c.base_dir, s.file), ext);
        }
    }
    struct Entry {
        std::vector<int> nodes;
        std::optional<FieldBoundary> theta, phi;
    };
    auto entries = std::make_shared<std::vector<Entry>>();
    std::vector<std::string> missing;
    for (const auto& b : c.boundaries) {
        if (!mesh.has_boundary(b.set)) {
            missing.push_back(b.set);
            continue;
        }
        entries->push_back({mesh.boundary_nodes(b.set), b.theta, b.phi});
    }
    if (!missing.empty()) {
        std::string msg = "mesh lacks boundary set";
        for (const auto& m : missing) msg += " '" + m + "'";
        throw InputError(msg);
    }
    return [series, entries](double t) {
        StepBoundary out;
        // Later entries win at shared corner nodes.
        std::map<std::pair<int, int>, double> values;
        auto value_of = [&](const FieldBoundary& f, int field) {
            if (f.kind == "value") return f.value;
            const auto v = sample_climate(series->at(f.climate), t / 3600.0);
            return field == kTheta ? v.temperature : v.humidity;
        };
        for (const auto& e : *entries) {
            for (int field : {static_cast<int>(kTheta), static_cast<int>(kPhi)}) {
                const auto& f = field == kTheta ? e.theta : e.phi;
                if (!f) continue;
                const double v = value_of(*f, field);
                for (int node : e.nodes) values[{field, node}] = v;
            }
        }
        for (const auto& [key, v] : values) out.dirichlet.push_back({key.second, key.first, v});
        return out;
    };
}

namespace {

MaterialLibrary materials_of(const ScenarioConfig& c)
{
    return c.materials.empty() ? MaterialLibrary::masonry() : load_materials(resolve(c.base_dir, c.materials));
}

void write_text(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

Mesh primary_fine_mesh(const ScenarioConfig& c)
{
    return build_mesh(c.fine_mesh ? *c.fine_mesh : c.mesh, c.base_dir);
}

CellLibrary cell_library(const ScenarioConfig& c, const Mesh& macro, const MaterialLibrary& mats)
{
    CellLibrary lib;
    std::map<std::string, int> ids;
    for (const auto& [name, spec] : c.cells) {
        Mesh m = build_mesh(spec, c.base_dir);
        auto model = mats.model_for(m);
        ids[name] = static_cast<int>(lib.cells.size());
        lib.cells.push_back(std::make_shared<CellModel>(std::move(m), model));
    }
    for (const auto& name : macro.phase_names) {
        auto it = c.regions.find(name);
        if (it == c.regions.end()) {
            throw InputError("macro region '" + name + "' has no cell in regions");
        }
        lib.region_cell.push_back(ids.at(it->second));
    }
    return lib;
}

int solve_fine(const ScenarioConfig& c, std::ostream& out)
{
    const Mesh mesh = primary_fine_mesh(c);
    const auto model = materials_of(c).model_for(mesh);
    const SolverConfig cfg = solver_config(c);
    const auto boundary = make_boundary_provider(c, mesh);
    const auto init = FieldState::uniform(mesh.nodes.size(), c.initial_theta, c.initial_phi);
    const auto t0 = std::chrono::steady_clock::now();
    const History h = fine_scale_reference_solve(mesh, *model, boundary, init, cfg, c.t_end_hours * 3600.0);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto paths = write_results(h, mesh, result_format_from_string(c.format), c.output_dir);
    out << "solve-fine: " << mesh.nodes.size() << " nodes, " << h.size() - 1 << " steps in " << secs
        << " s; wrote " << paths.size() << " files to " << c.output_dir << "\n";
    return 0;
}

int solve_fe2(const ScenarioConfig& c, std::ostream& out)
{
    const Mesh macro = build_mesh(c.mesh, c.base_dir);
    const auto mats = materials_of(c);
    const CellLibrary lib = cell_library(c, macro, mats);
    Fe2Config cfg;
    cfg.solver = solver_config(c);
    cfg.cprime = c.cprime;
    cfg.workers = c.workers;
    cfg.policy = partition_policy_from_string(c.policy);
    const auto boundary = make_boundary_provider(c, macro);
    const auto init = FieldState::uniform(macro.nodes.size(), c.initial_theta, c.initial_phi);
    const Fe2Result r = fe2_solve(macro, lib, boundary, init, cfg, c.t_end_hours * 3600.0);
    for (const auto& w : r.partition.warnings) out << "warning: " << w << "\n";
    const auto paths = write_results(r.history, macro, result_format_from_string(c.format), c.output_dir);

    std::ostringstream steps;
    steps << "step,time_h,wall_seconds,newton_iterations,rounds,halved\n";
    for (const auto& s : r.steps) {
        steps << s.step << ',' << fmt(s.time / 3600.0) << ',' << s.wall_seconds << ','
              << s.newton_iterations << ',' << s.rounds << ',' << (s.halved ? 1 : 0) << '\n';
    }
    write_text((fs::path(c.output_dir) / "steps.csv").string(), steps.str());
    std::ostringstream rounds;
    write_round_log(rounds, r.rounds);
    write_text((fs::path(c.output_dir) / "rounds.csv").string(), rounds.str());
    double wall = 0.0;
    for (const auto& s : r.steps) wall += s.wall_seconds;
    out << "solve-fe2: " << macro.triangles.size() << " macro points, " << r.steps.size()
        << " steps in " << wall << " s with " << c.workers << " worker(s), balance "
        << r.partition.balance << "; wrote " << paths.size() + 2 << " files to " << c.output_dir << "\n";
    return 0;
}

int solve_rve(const ScenarioConfig& c, std::ostream& out)
{
    if (!c.rve) throw InputError("solve-rve needs an rve section");
    const auto mats = materials_of(c);
    Mesh m = build_mesh(c.cells.at(c.rve->cell), c.base_dir);
    auto model = mats.model_for(m);
    auto cell = std::make_shared<CellModel>(std::move(m), model);
    MacroLoading start = c.rve->loading;
    start.grad_Theta.setZero();
    start.grad_Phi.setZero();
    start.dt = c.dt_hours * 3600.0;
    MacroLoading load = c.rve->loading;
    load.dt = start.dt;
    MesoState state = MesoState::initial(cell, start);

    std::ostringstream table;
    table << "step,time_h,q_x,q_y,g_x,g_y,s_t,s_f,m_tx,m_ty,m_fx,m_fy,"
             "K_tt_xx,K_tt_xy,K_tt_yx,K_tt_yy,K_ff_xx,K_ff_xy,K_ff_yx,K_ff_yy,c_tt,c_ff\n";
    for (int k = 1; k <= c.rve->steps; ++k) {
        auto r = solve_rve_increment(state, load);
        state = r.state;
        const auto& a = r.response.avg;
        const auto& e = r.response;
        table << k << ',' << fmt(k * c.dt_hours);
        for (double v : {a.q_bar.x(), a.q_bar.y(), a.g_bar.x(), a.g_bar.y(), a.s_t, a.s_f, a.m_t.x(),
                         a.m_t.y(), a.m_f.x(), a.m_f.y(), e.K_tt(0, 0), e.K_tt(0, 1), e.K_tt(1, 0),
                         e.K_tt(1, 1), e.K_ff(0, 0), e.K_ff(0, 1), e.K_ff(1, 0), e.K_ff(1, 1), e.c_tt,
                         e.c_ff}) {
            table << ',' << fmt(v);
        }
        table << '\n';
    }
    fs::create_directories(c.output_dir);
    const std::string path = (fs::path(c.output_dir) / "rve_response.csv").string();
    write_text(path, table.str());
    out << "solve-rve: " << c.rve->steps << " increments on cell '" << c.rve->cell << "'; wrote " << path << "\n";
    return 0;
}

int gen_mesh(const ScenarioConfig& c, std::ostream& out)
{
    fs::create_directories(c.output_dir);
    std::vector<std::pair<std::string, Mesh>> meshes;
    meshes.emplace_back("mesh", build_mesh(c.mesh, c.base_dir));
    if (c.fine_mesh) meshes.emplace_back("fine_mesh", build_mesh(*c.fine_mesh, c.base_dir));
    for (const auto& [name, s] : c.cells) meshes.emplace_back("cell_" + name, build_mesh(s, c.base_dir));
    for (const auto& [name, m] : meshes) {
        const std::string path = (fs::path(c.output_dir) / (name + ".mesh")).string();
        write_mesh_file(path, m);
        out << "gen-mesh: " << path << " (" << m.nodes.size() << " nodes, " << m.triangles.size()
            << " triangles)\n";
    }
    return 0;
}

int compare(const ScenarioConfig& c, std::ostream& out)
{
    if (!c.compare) throw InputError("compare needs a compare section");
    const auto& s = *c.compare;
    const Mesh ref_mesh = primary_fine_mesh(c);
    const Mesh other_mesh = build_mesh(c.mesh, c.base_dir);
    History ref = read_results_csv(resolve(c.base_dir, s.reference_dir));
    const History other = read_results_csv(resolve(c.base_dir, s.other_dir));
    if (ref.size() != other.size()) {
        std::vector<double> times;
        for (const auto& f : other) times.push_back(f.time);
        ref = subsample(ref, times);
    }
    const CellMap map = CellMap::grid(ref_mesh, other_mesh, s.origin, s.cell_w, s.cell_h, s.nx, s.ny);
    const ComparisonReport rep = compare_fields(ref, ref_mesh, other, other_mesh, map);
    std::ostringstream text;
    text << "field,relative_percent,absolute,max_absolute,worst_cell,worst_frame\n";
    text << "theta," << fmt(rep.theta.relative_percent) << ',' << fmt(rep.theta.absolute) << ','
         << fmt(rep.theta.max_absolute) << ',' << rep.theta.worst_cell << ',' << rep.theta.worst_step << '\n';
    text << "phi," << fmt(rep.phi.relative_percent) << ',' << fmt(rep.phi.absolute) << ','
         << fmt(rep.phi.max_absolute) << ',' << rep.phi.worst_cell << ',' << rep.phi.worst_step << '\n';
    fs::create_directories(c.output_dir);
    const std::string path = (fs::path(c.output_dir) / "comparison.csv").string();
    write_text(path, text.str());
    out << "compare (" << rep.descriptor << "): theta " << rep.theta.relative_percent << " % / "
        << rep.theta.absolute << " K, phi " << rep.phi.relative_percent << " % / " << rep.phi.absolute
        << "; wrote " << path << "\n";
    return 0;
}

} // namespace

int run_scenario(const ScenarioConfig& cfg, const std::string& subcommand, std::ostream& out,
                 std::ostream& err)
{
    static const std::map<std::string, std::function<int(const ScenarioConfig&, std::ostream&)>> commands{
        {"solve-fine", solve_fine}, {"solve-fe2", solve_fe2}, {"solve-rve", solve_rve},
        {"gen-mesh", gen_mesh},     {"compare", compare}};
    const auto it = commands.find(subcommand);
    if (it == commands.end()) {
        err << "unknown subcommand '" << subcommand << "'\n";
        return 2;
    }
    try {
        return it->second(cfg, out);
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace mfe2
