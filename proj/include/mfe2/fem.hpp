#pragma once

// P1 triangle discretization of the coupled heat/moisture weak forms.
//
// Global unknowns are ordered field-major: [theta_0 .. theta_{n-1}, phi_0 .. phi_{n-1}].
// Element unknowns follow the same convention: [theta_a, theta_b, theta_c, phi_a, phi_b, phi_c].

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "mfe2/constitutive.hpp"
#include "mfe2/mesh.hpp"

namespace mfe2 {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Matrix6 = Eigen::Matrix<double, 6, 6>;
using Vector6 = Eigen::Matrix<double, 6, 1>;

enum Field : int { kTheta = 0, kPhi = 1 };

inline int dof_index(int field, int node, int n_nodes) { return field * n_nodes + node; }

// Nodal temperature [C] and relative humidity [-] at time [s].
struct FieldState {
    Vector theta;
    Vector phi;
    double time = 0.0;

    std::size_t size() const { return static_cast<std::size_t>(theta.size()); }
    static FieldState uniform(std::size_t n_nodes, double theta, double phi, double time = 0.0);
};

Vector pack(const FieldState& s);
FieldState unpack(const Vector& u, double time);

struct ElementGeometry {
    double area = 0.0;
    Eigen::Matrix<double, 2, 3> grad; // shape function gradients, one column per vertex
};

// Throws InputError on zero or negative area.
ElementGeometry element_geometry(const std::array<Point, 3>& v);
ElementGeometry element_geometry(const Mesh& mesh, std::size_t element);

struct ElementMatrices {
    Matrix6 k = Matrix6::Zero(); // conductivity, one-point integration
    Matrix6 c = Matrix6::Zero(); // lumped storage, area/3 per node and field
};

ElementMatrices element_matrices(const ElementGeometry& g, const CoefficientSet& k);
ElementMatrices element_matrices(const std::array<Point, 3>& v, const CoefficientSet& k);

// Element centroid state (mean of the nodal values).
struct CentroidState {
    double theta = 0.0;
    double phi = 0.0;
};

CentroidState centroid_state(const Mesh& mesh, std::size_t element, const Vector& u);

// Coefficients at the element centroid; constitutive errors are rethrown with
// the element id attached.
CoefficientSet element_coefficients(const Mesh& mesh, const MaterialModel& model,
                                    std::size_t element, const CentroidState& s);

// Prescribed normal inflow through a boundary set: heat [W/m2] and moisture [kg/(m2 s)].
struct NeumannLoad {
    std::string boundary;
    double heat_inflow = 0.0;
    double moisture_inflow = 0.0;
};

Vector neumann_vector(const Mesh& mesh, const std::vector<NeumannLoad>& loads);

// Cached 2n x 2n sparsity pattern with element-to-slot scatter maps, so
// repeated assemblies reuse storage and sum in a fixed element order.
class SystemPattern {
public:
    explicit SystemPattern(const Mesh& mesh);

    int dofs() const { return n_dofs_; }
    SparseMatrix zero_matrix() const { return zero_; }
    void scatter(SparseMatrix& m, std::size_t element, const Matrix6& ke) const;
    const std::array<int, 6>& element_dofs(std::size_t element) const { return dofs_[element]; }

private:
    int n_dofs_ = 0;
    SparseMatrix zero_;
    std::vector<std::array<int, 6>> dofs_;
    std::vector<std::array<int, 36>> slots_;
};

struct CoupledSystem {
    SparseMatrix K_tt, K_tf, K_ft, K_ff;
    Vector C_tt, C_ff; // lumped diagonals
    Vector q_ext, g_ext;
    Vector residual;   // K u - f_ext at the assembly state

    SparseMatrix K() const;
    Vector C() const;
    Vector f_ext() const;
};

CoupledSystem assemble_system(const Mesh& mesh, const FieldState& state, const MaterialModel& model,
                              const std::vector<NeumannLoad>& loads = {});

enum class JacobianMode {
    picard,     // frozen coefficients
    consistent, // adds the coefficient sensitivity through the centroid state
};

JacobianMode jacobian_mode_from_string(const std::string& s);

// One-step theta-method residual
//   r(u) = C(u) (u - u_prev)/dt + theta_cn K(u) u + history
// where history = (1 - theta_cn) K(u_prev) u_prev - f_mix is supplied by the caller.
// Fills the Jacobian when jac is non-null.
void assemble_transient(const Mesh& mesh, const MaterialModel& model, const SystemPattern& pattern,
                        const Vector& u, const Vector& u_prev, const Vector& history, double dt,
                        double theta_cn, JacobianMode mode, Vector& residual, SparseMatrix* jac);

// K(u) u, the internal conductive force at state u.
Vector internal_force(const Mesh& mesh, const MaterialModel& model, const Vector& u);

} // namespace mfe2
