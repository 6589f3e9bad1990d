#pragma once

// Nested macro/meso driver, fully resolved reference solver and the
// cell-averaged comparison of two histories.

#include <memory>
#include <string>
#include <vector>

#include "mfe2/homogenization.hpp"
#include "mfe2/scheduler.hpp"
#include "mfe2/solver.hpp"

namespace mfe2 {

// Cells available to the macro problem and the macro region (phase id) each
// one represents.
struct CellLibrary {
    std::vector<std::shared_ptr<const CellModel>> cells;
    std::vector<int> region_cell; // macro phase id -> index into cells

    std::shared_ptr<const CellModel> for_region(int region) const;
};

// One meso problem per macro element (single integration point at the centroid).
class MacroPointRegistry {
public:
    struct Entry {
        int cell_id = 0;
        MesoState state;
        CellAverages response; // averages at the last accepted time
    };

    MacroPointRegistry() = default;
    MacroPointRegistry(const Mesh& macro, const CellLibrary& library, const FieldState& initial,
                       double dt);

    std::size_t size() const { return entries_.size(); }
    const Entry& entry(std::size_t point) const { return entries_.at(point); }
    std::vector<MesoState> states() const;
    // Accepts the trial results of a converged macro step.
    void commit(const std::vector<PointResult>& results);
    // Throws unless the registry matches the mesh and library.
    void check(const Mesh& macro, const CellLibrary& library) const;

private:
    std::vector<Entry> entries_;
};

// Element loading from the macro field: centroid values and gradients.
MacroLoading element_loading(const Mesh& macro, std::size_t element, const Vector& u, double dt);

struct Fe2Config {
    SolverConfig solver;
    RveOptions rve;
    bool cprime = true;
    int workers = 1;
    PartitionPolicy policy = PartitionPolicy::contiguous;
};

struct Fe2StepResult {
    FieldState state;
    NewtonResult newton;
    int rounds = 0;
};

// One Crank-Nicolson step of the macro problem. The registry is updated only
// when the step converges.
Fe2StepResult fe2_step(const Mesh& macro, const FieldState& state, MacroPointRegistry& registry,
                       const StepBoundary& bc_old, const StepBoundary& bc_new, double dt,
                       const Fe2Config& cfg, Scheduler& scheduler);

struct Fe2StepLog {
    int step = 0;
    double time = 0.0;         // [s]
    double wall_seconds = 0.0;
    int newton_iterations = 0;
    int rounds = 0;
    bool halved = false;
};

struct Fe2Result {
    History history;
    std::vector<Fe2StepLog> steps;
    std::vector<RoundLog> rounds;
    Partition partition;
};

using Fe2Observer = std::function<void(const FieldState&, const Fe2StepLog&)>;

Fe2Result fe2_solve(const Mesh& macro, const CellLibrary& library, const BoundaryProvider& boundary,
                    const FieldState& initial, const Fe2Config& cfg, double t_end,
                    const Fe2Observer& observer = {});

// Transient solve on a mesh that resolves every brick and joint.
History fine_scale_reference_solve(const Mesh& mesh, const MaterialModel& model,
                                   const BoundaryProvider& boundary, const FieldState& initial,
                                   const SolverConfig& cfg, double t_end,
                                   const StepObserver& observer = {});

// Assignment of fine and macro elements to comparison cells.
struct CellMap {
    int cells = 0;
    std::vector<int> fine_cell;  // per fine element, -1 when outside every cell
    std::vector<int> macro_cell; // per macro element
    std::string descriptor;

    // Rectangular cells nx x ny covering [origin, origin + (nx w, ny h)];
    // elements are assigned by centroid.
    static CellMap grid(const Mesh& fine, const Mesh& macro, Point origin, double w, double h,
                        int nx, int ny);
};

// Area-weighted average of a nodal field over the elements of each cell.
std::vector<double> cell_averages(const Mesh& mesh, const std::vector<int>& element_cell, int cells,
                                  const Vector& nodal);

struct FieldError {
    double relative_percent = 0.0; // mean |d| / |ref| * 100
    double absolute = 0.0;         // mean |d|
    double max_absolute = 0.0;
    int worst_cell = -1;
    int worst_step = -1;
};

struct ComparisonReport {
    FieldError theta;
    FieldError phi;
    int cells = 0;
    int steps = 0;
    std::string descriptor;
    std::vector<double> cell_theta_error; // mean |d| per cell over all steps
    std::vector<double> cell_phi_error;
    std::vector<double> step_theta_error; // mean |d| per step over all cells
    std::vector<double> step_phi_error;
};

// Compares cell averages of two histories on the same time grid. The first
// history is the reference.
ComparisonReport compare_fields(const History& reference, const Mesh& reference_mesh,
                                const History& other, const Mesh& other_mesh, const CellMap& map);

// Frames of h at the given times (matched within 1e-6 s).
History subsample(const History& h, const std::vector<double>& times);

} // namespace mfe2
