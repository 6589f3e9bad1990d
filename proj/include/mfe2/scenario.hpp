#pragma once

// Material and scenario files (JSON), boundary scheduling and the
// subcommand drivers behind the command-line tool.

#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mfe2/climate.hpp"
#include "mfe2/constitutive.hpp"
#include "mfe2/fe2.hpp"
#include "mfe2/homogenization.hpp"
#include "mfe2/mesh.hpp"
#include "mfe2/solver.hpp"

namespace mfe2 {

// Named material phases, either all Kuenzel or all constant-coefficient.
struct MaterialLibrary {
    enum class Kind { kunzel, constant };
    Kind kind = Kind::kunzel;
    PhysicalConstants constants;
    std::map<std::string, MaterialParams> kunzel;
    std::map<std::string, CoefficientSet> constant;

    bool has(const std::string& name) const;
    // Model whose phase ids follow mesh.phase_names.
    std::shared_ptr<const MaterialModel> model_for(const Mesh& mesh) const;
    // Brick and mortar of the masonry examples.
    static MaterialLibrary masonry();
};

MaterialLibrary parse_materials(const std::string& json_text, const std::string& source = "materials");
std::string serialize_materials(const MaterialLibrary& lib);
MaterialLibrary load_materials(const std::string& path);

struct MeshSpec {
    std::string kind = "rectangle"; // rectangle | masonry_cell | masonry_wall | file
    std::string file;
    double lx = 1.0;
    double ly = 1.0;
    int nx = 1;
    int ny = 1;
    std::string phase = "material";
    MasonryCellSpec cell;
    int cells_x = 1;
    int cells_y = 1;
    double scale = 1.0;
};

// Relative file paths are resolved against base_dir.
Mesh build_mesh(const MeshSpec& spec, const std::string& base_dir = ".");

struct FieldBoundary {
    std::string kind = "value"; // value | climate
    double value = 0.0;
    std::string climate;
};

struct BoundarySpec {
    std::string set;
    std::optional<FieldBoundary> theta;
    std::optional<FieldBoundary> phi;
};

struct ClimateSpec {
    std::string file;           // empty selects the synthetic generator
    std::string extension = "periodic";
    SyntheticClimateSpec synthetic;
};

struct RveSpec {
    std::string cell;
    MacroLoading loading;
    int steps = 1;
};

struct CompareSpec {
    std::string reference_dir;
    std::string other_dir;
    Point origin;
    double cell_w = 1.0;
    double cell_h = 1.0;
    int nx = 1;
    int ny = 1;
};

struct ScenarioConfig {
    std::string materials; // path; empty selects the built-in masonry library
    MeshSpec mesh;          // macro mesh, or the single-scale mesh
    std::optional<MeshSpec> fine_mesh;
    std::map<std::string, MeshSpec> cells;
    std::map<std::string, std::string> regions; // macro phase name -> cell name
    double initial_theta = 20.0;
    double initial_phi = 0.5;
    std::vector<BoundarySpec> boundaries;
    std::map<std::string, ClimateSpec> climates;
    double dt_hours = 1.0;
    double t_end_hours = 24.0;
    double newton_tol = 1e-8;
    double newton_floor = 1e-3;
    int newton_max_iter = 25;
    std::string jacobian = "consistent";
    double moisture_weight = 2.5e6;
    int workers = 1;
    std::string policy = "contiguous";
    bool cprime = true;
    std::optional<RveSpec> rve;
    std::optional<CompareSpec> compare;
    std::string output_dir = "output";
    std::string format = "csv";

    std::string base_dir = "."; // not serialized
};

// Throws InputError listing every offending key.
ScenarioConfig parse_scenario(const std::string& json_text, const std::string& base_dir = ".");
std::string serialize_scenario(const ScenarioConfig& cfg);
ScenarioConfig load_scenario(const std::string& path);

struct ScenarioOverrides {
    std::optional<int> workers;
    std::optional<double> dt_hours;
    std::optional<double> t_end_hours;
    std::optional<std::string> output_dir;
    std::optional<bool> cprime;
    std::optional<std::uint64_t> seed;
};

inline constexpr const char* kEnvPrefix = "MFE2_";

// MFE2_WORKERS, MFE2_DT_HOURS, MFE2_T_END_HOURS, MFE2_OUTPUT_DIR, MFE2_CPRIME, MFE2_SEED.
ScenarioOverrides overrides_from_env();
// Fields set in b replace those in a.
ScenarioOverrides merge(const ScenarioOverrides& a, const ScenarioOverrides& b);
void apply_overrides(ScenarioConfig& cfg, const ScenarioOverrides& o);

SolverConfig solver_config(const ScenarioConfig& cfg);

// Dirichlet schedule on the mesh's boundary sets. Throws when a set is missing.
BoundaryProvider make_boundary_provider(const ScenarioConfig& cfg, const Mesh& mesh);

// Runs one subcommand (solve-fine, solve-rve, solve-fe2, gen-mesh, compare).
// Returns 0 on success; solver aborts are reported on err and return 1.
int run_scenario(const ScenarioConfig& cfg, const std::string& subcommand, std::ostream& out,
                 std::ostream& err);

} // namespace mfe2
