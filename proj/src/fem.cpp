#include "mfe2/fem.hpp"

#include <algorithm>
#include <cmath>

#include "mfe2/error.hpp"

namespace mfe2 {

FieldState FieldState::uniform(std::size_t n, double theta, double phi, double time)
{
    const auto sz = static_cast<Eigen::Index>(n);
    return {Vector::Constant(sz, theta), Vector::Constant(sz, phi), time};
}

Vector pack(const FieldState& s)
{
    Vector u(s.theta.size() + s.phi.size());
    u << s.theta, s.phi;
    return u;
}

FieldState unpack(const Vector& u, double time)
{
    const auto n = u.size() / 2;
    return {u.head(n), u.tail(n), time};
}

ElementGeometry element_geometry(const std::array<Point, 3>& v)
{
    const double x1 = v[1].x - v[0].x, y1 = v[1].y - v[0].y;
    const double x2 = v[2].x - v[0].x, y2 = v[2].y - v[0].y;
    const double det = x1 * y2 - x2 * y1;
    const double scale = std::max({std::abs(x1), std::abs(y1), std::abs(x2), std::abs(y2)});
    if (!(det > 1e-14 * scale * scale)) {
        throw InputError("degenerate or negatively oriented triangle");
    }
    ElementGeometry g;
    g.area = 0.5 * det;
    // grad N_1 = (y2, -x2)/det, grad N_2 = (-y1, x1)/det, grad N_0 = -(sum)
    g.grad(0, 1) = y2 / det;
    g.grad(1, 1) = -x2 / det;
    g.grad(0, 2) = -y1 / det;
    g.grad(1, 2) = x1 / det;
    g.grad(0, 0) = -g.grad(0, 1) - g.grad(0, 2);
    g.grad(1, 0) = -g.grad(1, 1) - g.grad(1, 2);
    return g;
}

ElementGeometry element_geometry(const Mesh& mesh, std::size_t e)
{
    const auto& t = mesh.triangles[e].nodes;
    try {
        return element_geometry({mesh.nodes[static_cast<std::size_t>(t[0])],
                                 mesh.nodes[static_cast<std::size_t>(t[1])],
                                 mesh.nodes[static_cast<std::size_t>(t[2])]});
    } catch (const InputError& err) {
        throw InputError("element " + std::to_string(e) + ": " + err.what());
    }
}

ElementMatrices element_matrices(const ElementGeometry& g, const CoefficientSet& k)
{
    const Eigen::Matrix3d base = g.area * g.grad.transpose() * g.grad;
    ElementMatrices m;
    m.k.topLeftCorner<3, 3>() = k.k_tt * base;
    m.k.topRightCorner<3, 3>() = k.k_tf * base;
    m.k.bottomLeftCorner<3, 3>() = k.k_ft * base;
    m.k.bottomRightCorner<3, 3>() = k.k_ff * base;
    const double lump = g.area / 3.0;
    for (int i = 0; i < 3; ++i) {
        m.c(i, i) = lump * k.c_tt;
        m.c(i + 3, i + 3) = lump * k.c_ff;
    }
    return m;
}

ElementMatrices element_matrices(const std::array<Point, 3>& v, const CoefficientSet& k)
{
    return element_matrices(element_geometry(v), k);
}

CentroidState centroid_state(const Mesh& mesh, std::size_t e, const Vector& u)
{
    const auto n = static_cast<Eigen::Index>(mesh.nodes.size());
    CentroidState s;
    for (int v : mesh.triangles[e].nodes) {
        s.theta += u[v];
        s.phi += u[n + v];
    }
    s.theta /= 3.0;
    s.phi /= 3.0;
    return s;
}

CoefficientSet element_coefficients(const Mesh& mesh, const MaterialModel& model, std::size_t e,
                                    const CentroidState& s)
{
    try {
        return model.coefficients(mesh.triangles[e].phase, s.theta, s.phi);
    } catch (const InputError& err) {
        throw InputError("element " + std::to_string(e) + ": " + err.what());
    }
}

Vector neumann_vector(const Mesh& mesh, const std::vector<NeumannLoad>& loads)
{
    const auto n = static_cast<Eigen::Index>(mesh.nodes.size());
    Vector f = Vector::Zero(2 * n);
    for (const auto& load : loads) {
        for (const auto& e : mesh.boundary(load.boundary).edges) {
            const Point& a = mesh.nodes[static_cast<std::size_t>(e[0])];
            const Point& b = mesh.nodes[static_cast<std::size_t>(e[1])];
            const double half = 0.5 * std::hypot(b.x - a.x, b.y - a.y);
            for (int v : e) {
                f[v] += half * load.heat_inflow;
                f[n + v] += half * load.moisture_inflow;
            }
        }
    }
    return f;
}

SystemPattern::SystemPattern(const Mesh& mesh)
{
    const int n = static_cast<int>(mesh.nodes.size());
    n_dofs_ = 2 * n;
    dofs_.resize(mesh.triangles.size());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(36 * mesh.triangles.size());
    for (std::size_t e = 0; e < mesh.triangles.size(); ++e) {
        const auto& t = mesh.triangles[e].nodes;
        for (int f = 0; f < 2; ++f) {
            for (int a = 0; a < 3; ++a) {
                dofs_[e][static_cast<std::size_t>(3 * f + a)] = dof_index(f, t[static_cast<std::size_t>(a)], n);
            }
        }
        for (int i : dofs_[e]) {
            for (int j : dofs_[e]) {
                trip.emplace_back(i, j, 0.0);
            }
        }
    }
    zero_.resize(n_dofs_, n_dofs_);
    zero_.setFromTriplets(trip.begin(), trip.end());
    zero_.makeCompressed();

    slots_.resize(mesh.triangles.size());
    const auto* outer = zero_.outerIndexPtr();
    const auto* inner = zero_.innerIndexPtr();
    for (std::size_t e = 0; e < mesh.triangles.size(); ++e) {
        for (int i = 0; i < 6; ++i) {
            for (int j = 0; j < 6; ++j) {
                const int row = dofs_[e][static_cast<std::size_t>(i)];
                const int col = dofs_[e][static_cast<std::size_t>(j)];
                const auto* begin = inner + outer[col];
                const auto* end = inner + outer[col + 1];
                const auto* it = std::lower_bound(begin, end, row);
                slots_[e][static_cast<std::size_t>(6 * i + j)] = static_cast<int>(it - inner);
            }
        }
    }
}

void SystemPattern::scatter(SparseMatrix& m, std::size_t e, const Matrix6& ke) const
{
    double* values = m.valuePtr();
    const auto& s = slots_[e];
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) {
            values[s[static_cast<std::size_t>(6 * i + j)]] += ke(i, j);
        }
    }
}

SparseMatrix CoupledSystem::K() const
{
    const auto n = K_tt.rows();
    std::vector<Eigen::Triplet<double>> trip;
    auto add = [&](const SparseMatrix& b, Eigen::Index r0, Eigen::Index c0) {
        for (Eigen::Index k = 0; k < b.outerSize(); ++k) {
            for (SparseMatrix::InnerIterator it(b, k); it; ++it) {
                trip.emplace_back(r0 + it.row(), c0 + it.col(), it.value());
            }
        }
    };
    add(K_tt, 0, 0);
    add(K_tf, 0, n);
    add(K_ft, n, 0);
    add(K_ff, n, n);
    SparseMatrix out(2 * n, 2 * n);
    out.setFromTriplets(trip.begin(), trip.end());
    return out;
}

Vector CoupledSystem::C() const
{
    Vector c(C_tt.size() + C_ff.size());
    c << C_tt, C_ff;
    return c;
}

Vector CoupledSystem::f_ext() const
{
    Vector f(q_ext.size() + g_ext.size());
    f << q_ext, g_ext;
    return f;
}

CoupledSystem assemble_system(const Mesh& mesh, const FieldState& state, const MaterialModel& model,
                              const std::vector<NeumannLoad>& loads)
{
    const auto n = static_cast<Eigen::Index>(mesh.nodes.size());
    if (state.theta.size() != n || state.phi.size() != n) {
        throw InputError("field state size does not match the mesh");
    }
    const Vector u = pack(state);

    // Element contributions are computed first and scattered in element
    // order so the sums do not depend on evaluation order.
    std::vector<ElementMatrices> local(mesh.triangles.size());
    for (std::size_t e = 0; e < mesh.triangles.size(); ++e) {
        const auto coeffs = element_coefficients(mesh, model, e, centroid_state(mesh, e, u));
        local[e] = element_matrices(element_geometry(mesh, e), coeffs);
    }

    std::vector<Eigen::Triplet<double>> tt, tf, ft, ff;
    CoupledSystem sys;
    sys.C_tt = Vector::Zero(n);
    sys.C_ff = Vector::Zero(n);
    for (std::size_t e = 0; e < mesh.triangles.size(); ++e) {
        const auto& t = mesh.triangles[e].nodes;
        const auto& m = local[e];
        for (int a = 0; a < 3; ++a) {
            const int ra = t[static_cast<std::size_t>(a)];
            sys.C_tt[ra] += m.c(a, a);
            sys.C_ff[ra] += m.c(a + 3, a + 3);
            for (int b = 0; b < 3; ++b) {
                const int cb = t[static_cast<std::size_t>(b)];
                tt.emplace_back(ra, cb, m.k(a, b));
                tf.emplace_back(ra, cb, m.k(a, b + 3));
                ft.emplace_back(ra, cb, m.k(a + 3, b));
                ff.emplace_back(ra, cb, m.k(a + 3, b + 3));
            }
        }
    }
    auto build = [n](SparseMatrix& m, const std::vector<Eigen::Triplet<double>>& trip) {
        m.resize(n, n);
        m.setFromTriplets(trip.begin(), trip.end());
    };
    build(sys.K_tt, tt);
    build(sys.K_tf, tf);
    build(sys.K_ft, ft);
    build(sys.K_ff, ff);

    const Vector f = neumann_vector(mesh, loads);
    sys.q_ext = f.head(n);
    sys.g_ext = f.tail(n);
    sys.residual = sys.K() * u - f;
    return sys;
}

JacobianMode jacobian_mode_from_string(const std::string& s)
{
    if (s == "picard") return JacobianMode::picard;
    if (s == "consistent") return JacobianMode::consistent;
    throw InputError("unknown jacobian mode '" + s + "' (expected picard or consistent)");
}

namespace {

Vector6 gather(const std::array<int, 6>& dofs, const Vector& u)
{
    Vector6 out;
    for (int i = 0; i < 6; ++i) out[i] = u[dofs[static_cast<std::size_t>(i)]];
    return out;
}

// Conductivity matrices annihilate constants, so subtracting one nodal value
// per field keeps the product free of cancellation at large absolute levels.
Vector6 relative(const Vector6& ue)
{
    Vector6 out = ue;
    out.head<3>().array() -= ue[0];
    out.tail<3>().array() -= ue[3];
    return out;
}

} // namespace

void assemble_transient(const Mesh& mesh, const MaterialModel& model, const SystemPattern& pattern,
                        const Vector& u, const Vector& u_prev, const Vector& history, double dt,
                        double theta_cn, JacobianMode mode, Vector& residual, SparseMatrix* jac)
{
    residual = history;
    if (jac) {
        *jac = pattern.zero_matrix();
    }
    const bool sensitivities = jac && mode == JacobianMode::consistent && !model.is_linear();

    for (std::size_t e = 0; e < mesh.triangles.size(); ++e) {
        const auto& dofs = pattern.element_dofs(e);
        const Vector6 raw = gather(dofs, u);
        const Vector6 ue = relative(raw);
        const Vector6 rate = (raw - gather(dofs, u_prev)) / dt;
        const auto geom = element_geometry(mesh, e);
        const auto cs = centroid_state(mesh, e, u);
        const auto em = element_matrices(geom, element_coefficients(mesh, model, e, cs));

        const Vector6 re = em.c * rate + theta_cn * em.k * ue;
        for (int i = 0; i < 6; ++i) residual[dofs[static_cast<std::size_t>(i)]] += re[i];

        if (!jac) continue;
        Matrix6 je = em.c / dt + theta_cn * em.k;
        if (sensitivities) {
            // Coefficients depend on the nodal values only through the
            // centroid state, so the tangent correction has rank two.
            for (int f = 0; f < 2; ++f) {
                const double value = f == kTheta ? cs.theta : cs.phi;
                double h = f == kTheta ? 1e-6 * std::max(1.0, std::abs(value)) : 1e-7;
                CentroidState lo = cs, hi = cs;
                double span = 2.0 * h;
                auto& lo_v = f == kTheta ? lo.theta : lo.phi;
                auto& hi_v = f == kTheta ? hi.theta : hi.phi;
                lo_v -= h;
                hi_v += h;
                if (f == kPhi && lo_v < 0.0) {
                    lo_v = value;
                    span = h;
                } else if (f == kPhi && hi_v > 1.0) {
                    hi_v = value;
                    span = h;
                }
                const auto m_lo = element_matrices(geom, element_coefficients(mesh, model, e, lo));
                const auto m_hi = element_matrices(geom, element_coefficients(mesh, model, e, hi));
                const Vector6 dr = ((m_hi.c - m_lo.c) * rate + theta_cn * (m_hi.k - m_lo.k) * ue) / span;
                for (int a = 0; a < 3; ++a) {
                    je.col(3 * f + a) += dr / 3.0;
                }
            }
        }
        pattern.scatter(*jac, e, je);
    }
}

Vector internal_force(const Mesh& mesh, const MaterialModel& model, const Vector& u)
{
    const auto n = static_cast<int>(mesh.nodes.size());
    Vector f = Vector::Zero(u.size());
    for (std::size_t e = 0; e < mesh.triangles.size(); ++e) {
        const auto& t = mesh.triangles[e].nodes;
        std::array<int, 6> dofs{};
        for (int a = 0; a < 3; ++a) {
            dofs[static_cast<std::size_t>(a)] = t[static_cast<std::size_t>(a)];
            dofs[static_cast<std::size_t>(a + 3)] = n + t[static_cast<std::size_t>(a)];
        }
        const auto em = element_matrices(
            element_geometry(mesh, e), element_coefficients(mesh, model, e, centroid_state(mesh, e, u)));
        const Vector6 fe = em.k * relative(gather(dofs, u));
        for (int i = 0; i < 6; ++i) f[dofs[static_cast<std::size_t>(i)]] += fe[i];
    }
    return f;
}

} // namespace mfe2
