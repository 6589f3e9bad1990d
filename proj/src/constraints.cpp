#include "mfe2/constraints.hpp"

#include <cmath>

#include "mfe2/error.hpp"

namespace mfe2 {

AffineConstraints::AffineConstraints(int n_dofs)
    : n_dofs_(n_dofs),
      fixed_set_(static_cast<std::size_t>(n_dofs), 0),
      fixed_value_(static_cast<std::size_t>(n_dofs), 0.0),
      link_(static_cast<std::size_t>(n_dofs), Link{-1, 0.0})
{
}

void AffineConstraints::fix(int dof, double value)
{
    if (dof < 0 || dof >= n_dofs_) {
        throw InputError("constraint references missing dof " + std::to_string(dof));
    }
    const auto i = static_cast<std::size_t>(dof);
    if (fixed_set_[i] && fixed_value_[i] != value) {
        throw InputError("conflicting prescribed values for dof " + std::to_string(dof));
    }
    if (link_[i].master >= 0) {
        throw InputError("dof " + std::to_string(dof) + " is both prescribed and periodic slave");
    }
    fixed_set_[i] = 1;
    fixed_value_[i] = value;
    closed_ = false;
}

void AffineConstraints::link(int slave, int master, double offset)
{
    if (slave < 0 || slave >= n_dofs_ || master < 0 || master >= n_dofs_) {
        throw InputError("periodic constraint references missing dof");
    }
    if (slave == master) {
        throw InputError("dof linked to itself");
    }
    const auto i = static_cast<std::size_t>(slave);
    if (link_[i].master >= 0 || fixed_set_[i]) {
        throw InputError("dof " + std::to_string(slave) + " is constrained twice");
    }
    link_[i] = {master, offset};
    closed_ = false;
}

void AffineConstraints::add_mean(MeanConstraint c)
{
    for (const auto& [dof, w] : c.weights) {
        if (dof < 0 || dof >= n_dofs_) {
            throw InputError("mean constraint references missing dof");
        }
        (void)w;
    }
    means_.push_back(std::move(c));
    closed_ = false;
}

void AffineConstraints::close()
{
    const auto n = static_cast<std::size_t>(n_dofs_);
    map_.assign(n, -1);
    shift_.assign(n, 0.0);
    n_free_ = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!fixed_set_[i] && link_[i].master < 0) {
            map_[i] = n_free_++;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (fixed_set_[i]) {
            shift_[i] = fixed_value_[i];
            continue;
        }
        if (link_[i].master < 0) continue;
        double offset = 0.0;
        std::size_t cur = i;
        std::size_t steps = 0;
        while (link_[cur].master >= 0) {
            offset += link_[cur].offset;
            cur = static_cast<std::size_t>(link_[cur].master);
            if (++steps > n) {
                throw InputError("cyclic periodic constraints");
            }
        }
        if (fixed_set_[cur]) {
            map_[i] = -1;
            shift_[i] = fixed_value_[cur] + offset;
        } else {
            map_[i] = map_[cur];
            shift_[i] = offset;
        }
    }
    closed_ = true;
}

Vector AffineConstraints::expand(const Vector& v) const
{
    Vector u(n_dofs_);
    for (int i = 0; i < n_dofs_; ++i) {
        const int j = map_[static_cast<std::size_t>(i)];
        u[i] = shift_[static_cast<std::size_t>(i)] + (j >= 0 ? v[j] : 0.0);
    }
    return u;
}

Vector AffineConstraints::restrict_free(const Vector& u) const
{
    Vector v(n_free_);
    for (int i = 0; i < n_dofs_; ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (map_[k] >= 0 && !(link_[k].master >= 0)) {
            v[map_[k]] = u[i];
        }
    }
    return v;
}

Vector AffineConstraints::reduce_vector(const Vector& r) const
{
    Vector out = Vector::Zero(n_free_);
    for (int i = 0; i < n_dofs_; ++i) {
        const int j = map_[static_cast<std::size_t>(i)];
        if (j >= 0) out[j] += r[i];
    }
    return out;
}

SparseMatrix AffineConstraints::reduce_matrix(const SparseMatrix& m) const
{
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(m.nonZeros()));
    for (Eigen::Index k = 0; k < m.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
            const int r = map_[static_cast<std::size_t>(it.row())];
            const int c = map_[static_cast<std::size_t>(it.col())];
            if (r >= 0 && c >= 0) trip.emplace_back(r, c, it.value());
        }
    }
    SparseMatrix out(n_free_, n_free_);
    out.setFromTriplets(trip.begin(), trip.end());
    out.makeCompressed();
    return out;
}

ReducedSystem AffineConstraints::reduce_linear(const SparseMatrix& K, const Vector& f) const
{
    // Free DOFs carry a zero shift, slaves their offset, prescribed DOFs their value.
    const Vector g = Eigen::Map<const Vector>(shift_.data(), n_dofs_);
    return {reduce_matrix(K), reduce_vector(f - K * g)};
}

std::pair<Vector, double> AffineConstraints::reduced_mean(std::size_t k) const
{
    const auto& c = means_.at(k);
    Vector w = Vector::Zero(n_free_);
    double rhs = c.target;
    for (const auto& [dof, weight] : c.weights) {
        const auto i = static_cast<std::size_t>(dof);
        rhs -= weight * shift_[i];
        if (map_[i] >= 0) w[map_[i]] += weight;
    }
    return {w, rhs};
}

void apply_dirichlet(AffineConstraints& c, const std::vector<NodalValue>& values, int n_nodes)
{
    for (const auto& v : values) {
        if (v.node < 0 || v.node >= n_nodes) {
            throw InputError("Dirichlet constraint on missing node " + std::to_string(v.node));
        }
        c.fix(dof_index(v.field, v.node, n_nodes), v.value);
    }
}

void apply_periodic(AffineConstraints& c, const PeriodicPairing& pairing, int n_nodes,
                    const Point& grad_theta, const Point& grad_phi)
{
    for (const auto& p : pairing.pairs) {
        if (p.master < 0 || p.master >= n_nodes || p.slave < 0 || p.slave >= n_nodes) {
            throw InputError("periodic pairing references missing node");
        }
        c.link(dof_index(kTheta, p.slave, n_nodes), dof_index(kTheta, p.master, n_nodes),
               grad_theta.x * p.offset.x + grad_theta.y * p.offset.y);
        c.link(dof_index(kPhi, p.slave, n_nodes), dof_index(kPhi, p.master, n_nodes),
               grad_phi.x * p.offset.x + grad_phi.y * p.offset.y);
    }
}

} // namespace mfe2
