#pragma once

// First-order transient homogenization on periodic unit cells.
//
// The cell field is split as u = U + grad(U) . (x - X0) + u*, with u* periodic
// and of zero (lumped) mean. Each increment solves one Crank-Nicolson step of
// the cell problem for the total field and returns volume averages of the
// fluxes, storage rates and first moments of the storage rates, together with
// finite-difference sensitivities with respect to the macro inputs.

#include <memory>
#include <optional>

#include <Eigen/Dense>

#include "mfe2/constitutive.hpp"
#include "mfe2/fem.hpp"
#include "mfe2/mesh.hpp"
#include "mfe2/solver.hpp"

namespace mfe2 {

using Vector2 = Eigen::Vector2d;

// Macro values and gradients handed down to a cell at the end of a step.
struct MacroLoading {
    double Theta = 20.0;      // [C]
    double Phi = 0.5;         // [-]
    Vector2 grad_Theta = Vector2::Zero(); // [K/m]
    Vector2 grad_Phi = Vector2::Zero();   // [1/m]
    double dt = 3600.0;       // [s]

    void validate() const;
};

// Inputs of the sensitivity matrix, in this order.
enum MacroInput : int { kInTheta, kInPhi, kInGradThetaX, kInGradThetaY, kInGradPhiX, kInGradPhiY };
// Outputs of the sensitivity matrix, in this order.
enum MacroOutput : int { kOutQx, kOutQy, kOutGx, kOutGy, kOutSt, kOutSf, kOutMtx, kOutMty, kOutMfx, kOutMfy };

inline constexpr int kMacroInputs = 6;
inline constexpr int kMacroOutputs = 10;

using InputVector = Eigen::Matrix<double, kMacroInputs, 1>;
using OutputVector = Eigen::Matrix<double, kMacroOutputs, 1>;
using Sensitivity = Eigen::Matrix<double, kMacroOutputs, kMacroInputs>;

InputVector to_inputs(const MacroLoading& l);
MacroLoading from_inputs(const InputVector& x, double dt);

// A periodic unit cell with its material model and cached discretization data.
class CellModel {
public:
    CellModel(Mesh mesh, std::shared_ptr<const MaterialModel> model);

    const Mesh& mesh() const { return mesh_; }
    const MaterialModel& model() const { return *model_; }
    std::shared_ptr<const MaterialModel> model_ptr() const { return model_; }
    const PeriodicPairing& pairing() const { return pairing_; }
    const SystemPattern& pattern() const { return pattern_; }
    Point x0() const { return x0_; }
    double volume() const { return volume_; }
    // Lumped nodal weights (area/3 summed over the adjacent elements).
    const Vector& node_weights() const { return weights_; }
    int node_count() const { return static_cast<int>(mesh_.nodes.size()); }

    // Affine macro field U + grad . (x - X0) for both fields, packed.
    Vector affine_field(const MacroLoading& l) const;

private:
    Mesh mesh_;
    std::shared_ptr<const MaterialModel> model_;
    PeriodicPairing pairing_;
    SystemPattern pattern_;
    Point x0_;
    double volume_ = 0.0;
    Vector weights_;
};

// Fluctuation fields of one cell and the loading they belong to.
struct MesoState {
    std::shared_ptr<const CellModel> cell;
    FieldState fluctuation;
    MacroLoading loading;

    // Zero fluctuations under the given loading.
    static MesoState initial(std::shared_ptr<const CellModel> cell, const MacroLoading& loading);
    // Total packed field U + grad . (x - X0) + u*.
    Vector total_field() const;
};

struct CellAverages {
    Vector2 q_bar = Vector2::Zero(); // heat flux -(k_tt grad theta + k_tf grad phi) [W/m2]
    Vector2 g_bar = Vector2::Zero(); // moisture flux [kg/(m2 s)]
    double s_t = 0.0;                // heat storage rate [W/m3]
    double s_f = 0.0;                // moisture storage rate [kg/(m3 s)]
    Vector2 m_t = Vector2::Zero();   // first moment of the heat storage rate [W/m2]
    Vector2 m_f = Vector2::Zero();
    double cap_t = 0.0;              // mean heat storage capacity at the new state [J/(m3 K)]
    double cap_f = 0.0;              // mean moisture storage capacity [kg/m3]

    // The ten averages in MacroOutput order (capacities excluded).
    OutputVector to_vector() const;
};

struct EffectiveResponse {
    CellAverages avg;
    // Conductivity blocks -d(flux)/d(gradient) of the averaged fluxes.
    Eigen::Matrix2d K_tt = Eigen::Matrix2d::Zero();
    Eigen::Matrix2d K_tf = Eigen::Matrix2d::Zero();
    Eigen::Matrix2d K_ft = Eigen::Matrix2d::Zero();
    Eigen::Matrix2d K_ff = Eigen::Matrix2d::Zero();
    // Storage tangents d(s)/d(rate of the macro value), i.e. dt d(s)/d(U_{n+1}).
    double c_tt = 0.0;
    double c_ff = 0.0;
    Sensitivity sensitivity = Sensitivity::Zero(); // d(outputs)/d(inputs)
    bool has_tangent = false;
    int newton_iterations = 0;
};

// Volume averages with one-point element quadrature. Storage rates use the
// backward difference (u_new - u_old)/dt.
CellAverages average_fields(const CellModel& cell, const Vector& u_new, const Vector& u_old, double dt);

// Fluxes only, at a single state (storage terms zero).
CellAverages average_fluxes(const CellModel& cell, const Vector& u);

struct RveOptions {
    // Tighter than the macro tolerance so cell round-off does not limit macro convergence.
    NewtonConfig newton{1e-10, 1e-3, 25, 0, true};
    JacobianMode jacobian = JacobianMode::consistent;
    double theta_cn = 0.5;
    double moisture_weight = 2.5e6;
    bool compute_tangent = true;
    // Relative perturbation of the characteristic scales 1 K, 1 (humidity), 1 K/m, 1 1/m.
    double fd_step = 1e-6;
};

// Meso failure tagged with the macro point it belongs to (-1 if none).
class MesoFailure : public ConvergenceError {
public:
    MesoFailure(const std::string& what, std::vector<double> trace, int point)
        : ConvergenceError(what, std::move(trace)), point_(point) {}
    int point() const noexcept { return point_; }

private:
    int point_;
};

struct RveResult {
    EffectiveResponse response;
    MesoState state;
};

RveResult solve_rve_increment(const MesoState& meso, const MacroLoading& loading,
                              const RveOptions& opt = {}, int point = -1);

// Sensitivities only (re-solves the base increment).
EffectiveResponse effective_tangent(const MesoState& meso, const MacroLoading& loading,
                                    const RveOptions& opt = {});

// Averaged response of a converged state without advancing it, used for the
// flux at the initial time.
CellAverages state_fluxes(const MesoState& meso);

// Effective conductivity of a cell with state-independent coefficients
// (evaluated at the reference state). Rows (q_x, q_y, g_x, g_y) are
// -flux for a unit gradient in columns (Theta_x, Theta_y, Phi_x, Phi_y).
struct EffectiveConductivity {
    Eigen::Matrix4d K = Eigen::Matrix4d::Zero();

    Eigen::Matrix2d tt() const { return K.block<2, 2>(0, 0); }
    Eigen::Matrix2d tf() const { return K.block<2, 2>(0, 2); }
    Eigen::Matrix2d ft() const { return K.block<2, 2>(2, 0); }
    Eigen::Matrix2d ff() const { return K.block<2, 2>(2, 2); }
};

EffectiveConductivity steady_linear_homogenize(const Mesh& mesh, const MaterialModel& model,
                                               double theta_ref = 20.0, double phi_ref = 0.5);

// Largest |u*(slave) - u*(master)| over the periodic pairs, both fields.
double periodicity_defect(const CellModel& cell, const FieldState& fluctuation);

// Volume average of the fluctuation gradient, (theta_x, theta_y, phi_x, phi_y).
Eigen::Vector4d mean_fluctuation_gradient(const CellModel& cell, const FieldState& fluctuation);

} // namespace mfe2
