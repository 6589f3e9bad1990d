#pragma once

// Affine elimination of Dirichlet and periodic constraints.
//
// Every constrained DOF is expressed through at most one free DOF with unit
// coefficient, u = T v + g, so reductions are index remaps. Mean-value
// constraints (sum_i w_i u_i = target) are kept as extra rows and solved with
// Lagrange multipliers by the caller.

#include <utility>
#include <vector>

#include "mfe2/fem.hpp"
#include "mfe2/mesh.hpp"

namespace mfe2 {

struct MeanConstraint {
    std::vector<std::pair<int, double>> weights; // (dof, weight)
    double target = 0.0;
};

struct ReducedSystem {
    SparseMatrix A;
    Vector b;
};

class AffineConstraints {
public:
    explicit AffineConstraints(int n_dofs);

    // u[dof] = value. Repeating a constraint with a different value is rejected.
    void fix(int dof, double value);
    // u[slave] = u[master] + offset.
    void link(int slave, int master, double offset);
    void add_mean(MeanConstraint c);

    // Resolves chains of links and numbers the free DOFs. Must be called
    // before any of the mapping functions below.
    void close();

    int dofs() const { return n_dofs_; }
    int free_dofs() const { return n_free_; }
    bool closed() const { return closed_; }
    // Free index of a DOF, or -1 when it is prescribed.
    int free_index(int dof) const { return map_[static_cast<std::size_t>(dof)]; }
    double shift(int dof) const { return shift_[static_cast<std::size_t>(dof)]; }
    const std::vector<MeanConstraint>& means() const { return means_; }

    Vector expand(const Vector& v) const;          // T v + g
    Vector restrict_free(const Vector& u) const;   // free components of u
    Vector reduce_vector(const Vector& r) const;   // T^T r
    SparseMatrix reduce_matrix(const SparseMatrix& j) const; // T^T J T
    // Reduced linear system of K u = f.
    ReducedSystem reduce_linear(const SparseMatrix& K, const Vector& f) const;
    // Mean constraint in reduced coordinates: (weights over free dofs, rhs).
    std::pair<Vector, double> reduced_mean(std::size_t k) const;

private:
    struct Link {
        int master;
        double offset;
    };
    int n_dofs_;
    int n_free_ = 0;
    bool closed_ = false;
    std::vector<int> fixed_set_;
    std::vector<double> fixed_value_;
    std::vector<Link> link_;
    std::vector<MeanConstraint> means_;
    std::vector<int> map_;
    std::vector<double> shift_;
};

// Dirichlet values for individual nodes of one field.
struct NodalValue {
    int node = 0;
    int field = kTheta;
    double value = 0.0;
};

void apply_dirichlet(AffineConstraints& c, const std::vector<NodalValue>& values, int n_nodes);

// Slave = master + grad . offset for each field, using the given macro
// gradients for theta and phi.
void apply_periodic(AffineConstraints& c, const PeriodicPairing& pairing, int n_nodes,
                    const Point& grad_theta, const Point& grad_phi);

} // namespace mfe2
