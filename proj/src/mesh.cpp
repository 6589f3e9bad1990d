#include "mfe2/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "mfe2/error.hpp"

namespace mfe2 {

const char* to_string(Side s)
{
    switch (s) {
    case Side::left: return "left";
    case Side::right: return "right";
    case Side::bottom: return "bottom";
    case Side::top: return "top";
    }
    return "?";
}

Side side_from_string(const std::string& s)
{
    if (s == "left") return Side::left;
    if (s == "right") return Side::right;
    if (s == "bottom") return Side::bottom;
    if (s == "top") return Side::top;
    throw InputError("unknown boundary side '" + s + "'");
}

Bond bond_from_string(const std::string& s)
{
    if (s == "stack") return Bond::stack;
    if (s == "running") return Bond::running;
    throw InputError("unknown bond '" + s + "' (expected stack or running)");
}

double Mesh::signed_area(std::size_t e) const
{
    const auto& t = triangles[e].nodes;
    const Point& a = nodes[static_cast<std::size_t>(t[0])];
    const Point& b = nodes[static_cast<std::size_t>(t[1])];
    const Point& c = nodes[static_cast<std::size_t>(t[2])];
    return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
}

Point Mesh::centroid(std::size_t e) const
{
    const auto& t = triangles[e].nodes;
    Point p;
    for (int n : t) {
        p.x += nodes[static_cast<std::size_t>(n)].x;
        p.y += nodes[static_cast<std::size_t>(n)].y;
    }
    return {p.x / 3.0, p.y / 3.0};
}

const BoundarySet& Mesh::boundary(const std::string& name) const
{
    for (const auto& b : boundaries) {
        if (b.name == name) return b;
    }
    throw InputError("mesh has no boundary set '" + name + "'");
}

bool Mesh::has_boundary(const std::string& name) const
{
    return std::any_of(boundaries.begin(), boundaries.end(),
                       [&](const BoundarySet& b) { return b.name == name; });
}

std::vector<int> Mesh::boundary_nodes(const std::string& name) const
{
    std::vector<int> out;
    for (const auto& e : boundary(name).edges) {
        out.push_back(e[0]);
        out.push_back(e[1]);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

int Mesh::phase_id(const std::string& name) const
{
    for (std::size_t i = 0; i < phase_names.size(); ++i) {
        if (phase_names[i] == name) return static_cast<int>(i);
    }
    throw InputError("mesh has no phase '" + name + "'");
}

void validate_mesh(const Mesh& mesh, std::size_t known_phases)
{
    const std::size_t n = mesh.nodes.size();
    if (n == 0 || mesh.triangles.empty()) {
        throw InputError("mesh is empty");
    }
    const double diag = std::hypot(mesh.lx, mesh.ly);
    if (!(diag > 0.0)) {
        throw InputError("mesh bounding box is degenerate");
    }

    for (std::size_t e = 0; e < mesh.triangles.size(); ++e) {
        const auto& t = mesh.triangles[e];
        for (int v : t.nodes) {
            if (v < 0 || static_cast<std::size_t>(v) >= n) {
                throw InputError("triangle " + std::to_string(e) + " references missing node");
            }
        }
        if (!(mesh.signed_area(e) > 0.0)) {
            throw InputError("triangle " + std::to_string(e) + " is not positively oriented");
        }
        if (t.phase < 0 || (known_phases > 0 && static_cast<std::size_t>(t.phase) >= known_phases)) {
            throw InputError("triangle " + std::to_string(e) + " has unknown phase label " +
                             std::to_string(t.phase));
        }
    }

    // Duplicate nodes: sweep in x order.
    const double tol = 1e-12 * diag;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return mesh.nodes[a].x < mesh.nodes[b].x; });
    for (std::size_t i = 0; i < n; ++i) {
        const Point& p = mesh.nodes[order[i]];
        for (std::size_t j = i + 1; j < n && mesh.nodes[order[j]].x - p.x <= tol; ++j) {
            const Point& q = mesh.nodes[order[j]];
            if (std::hypot(p.x - q.x, p.y - q.y) <= tol) {
                throw InputError("duplicate nodes " + std::to_string(order[i]) + " and " +
                                 std::to_string(order[j]));
            }
        }
    }

    // Undirected edge -> number of incident triangles.
    std::map<std::pair<int, int>, int> incidence;
    for (const auto& t : mesh.triangles) {
        for (int k = 0; k < 3; ++k) {
            int a = t.nodes[static_cast<std::size_t>(k)];
            int b = t.nodes[static_cast<std::size_t>((k + 1) % 3)];
            ++incidence[{std::min(a, b), std::max(a, b)}];
        }
    }
    for (const auto& set : mesh.boundaries) {
        for (const auto& e : set.edges) {
            auto it = incidence.find({std::min(e[0], e[1]), std::max(e[0], e[1])});
            if (it == incidence.end() || it->second != 1) {
                throw InputError("boundary edge (" + std::to_string(e[0]) + ", " +
                                 std::to_string(e[1]) + ") in set '" + set.name +
                                 "' does not belong to exactly one triangle");
            }
        }
    }
}

Mesh generate_tensor_mesh(const std::vector<Segment>& xs, const std::vector<Segment>& ys,
                          const PhaseFunction& phase_of, std::vector<std::string> phase_names)
{
    auto breaks = [](const std::vector<Segment>& segs, const char* axis) {
        if (segs.empty()) {
            throw InputError(std::string("no segments along ") + axis);
        }
        std::vector<double> out{0.0};
        for (const auto& s : segs) {
            if (!(s.length > 0.0) || s.divisions < 1) {
                throw InputError(std::string("segment along ") + axis +
                                 " needs positive length and divisions");
            }
            const double start = out.back();
            for (int k = 1; k <= s.divisions; ++k) {
                out.push_back(start + s.length * k / s.divisions);
            }
        }
        return out;
    };
    const auto gx = breaks(xs, "x");
    const auto gy = breaks(ys, "y");
    const int nx = static_cast<int>(gx.size()) - 1;
    const int ny = static_cast<int>(gy.size()) - 1;

    Mesh m;
    m.phase_names = std::move(phase_names);
    m.lx = gx.back();
    m.ly = gy.back();
    m.nodes.reserve(static_cast<std::size_t>((nx + 1) * (ny + 1)));
    for (int j = 0; j <= ny; ++j) {
        for (int i = 0; i <= nx; ++i) {
            m.nodes.push_back({gx[static_cast<std::size_t>(i)], gy[static_cast<std::size_t>(j)]});
        }
    }
    auto id = [nx](int i, int j) { return j * (nx + 1) + i; };

    m.triangles.reserve(static_cast<std::size_t>(2 * nx * ny));
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const int n00 = id(i, j), n10 = id(i + 1, j), n01 = id(i, j + 1), n11 = id(i + 1, j + 1);
            for (const std::array<int, 3> t : {std::array<int, 3>{n00, n10, n11},
                                               std::array<int, 3>{n00, n11, n01}}) {
                Point c;
                for (int v : t) {
                    c.x += m.nodes[static_cast<std::size_t>(v)].x / 3.0;
                    c.y += m.nodes[static_cast<std::size_t>(v)].y / 3.0;
                }
                m.triangles.push_back({t, phase_of(c)});
            }
        }
    }

    BoundarySet bottom{"bottom", Side::bottom, {}}, right{"right", Side::right, {}},
        top{"top", Side::top, {}}, left{"left", Side::left, {}};
    for (int i = 0; i < nx; ++i) {
        bottom.edges.push_back({id(i, 0), id(i + 1, 0)});
        top.edges.push_back({id(i + 1, ny), id(i, ny)});
    }
    for (int j = 0; j < ny; ++j) {
        right.edges.push_back({id(nx, j), id(nx, j + 1)});
        left.edges.push_back({id(0, j + 1), id(0, j)});
    }
    m.boundaries = {std::move(left), std::move(right), std::move(bottom), std::move(top)};
    return m;
}

Mesh generate_rectangle_mesh(double lx, double ly, int nx, int ny, int phase,
                             const std::string& phase_name)
{
    if (!(lx > 0.0 && ly > 0.0) || nx < 1 || ny < 1) {
        throw InputError("rectangle mesh needs positive dimensions and at least one division");
    }
    if (phase < 0) {
        throw InputError("negative phase label");
    }
    std::vector<std::string> names(static_cast<std::size_t>(phase) + 1, "");
    names[static_cast<std::size_t>(phase)] = phase_name;
    return generate_tensor_mesh({{lx, nx}}, {{ly, ny}}, [phase](const Point&) { return phase; },
                                std::move(names));
}

namespace {

struct CellLayout {
    std::vector<Segment> xs, ys;
    double w = 0.0, h = 0.0;
    PhaseFunction phase; // in cell coordinates
};

CellLayout masonry_layout(const MasonryCellSpec& s)
{
    const double j = s.joint;
    if (!(s.brick_w > 0.0 && s.brick_h > 0.0 && j > 0.0)) {
        throw InputError("masonry cell dimensions must be positive");
    }
    if (!(j < std::min(s.brick_w, s.brick_h))) {
        throw InputError("joint thickness must be smaller than the brick dimensions");
    }
    if (s.joint_divisions < 2) {
        throw InputError("at least two elements are required across a joint");
    }
    const double h_joint = j / s.joint_divisions;
    auto auto_div = [h_joint](double len, int requested) {
        if (requested > 0) return requested;
        return std::clamp(static_cast<int>(std::ceil(len / h_joint)), 2, 8);
    };
    const int half_j = (s.joint_divisions + 1) / 2;
    const int bdx = auto_div(s.brick_w, s.brick_divisions_x);
    const int bdy = auto_div(s.brick_h, s.brick_divisions_y);

    CellLayout l;
    if (s.bond == Bond::stack) {
        const double x0 = 0.5 * j, x1 = 0.5 * j + s.brick_w;
        const double y0 = 0.5 * j, y1 = 0.5 * j + s.brick_h;
        l.xs = {{0.5 * j, half_j}, {s.brick_w, bdx}, {0.5 * j, half_j}};
        l.ys = {{0.5 * j, half_j}, {s.brick_h, bdy}, {0.5 * j, half_j}};
        l.w = s.brick_w + j;
        l.h = s.brick_h + j;
        l.phase = [=](const Point& c) {
            const bool in = c.x > x0 && c.x < x1 && c.y > y0 && c.y < y1;
            return in ? kBrickPhase : kMortarPhase;
        };
        return l;
    }

    // Running bond: lower course brick centred, upper course split by a head
    // joint at mid-width.
    const double w = s.brick_w + j;
    const double part = 0.5 * (s.brick_w - j);
    const int part_div = std::max(1, (bdx + 1) / 2);
    const double c1_lo = 0.5 * j, c1_hi = 0.5 * j + s.brick_h;
    const double c2_lo = 1.5 * j + s.brick_h, c2_hi = 1.5 * j + 2.0 * s.brick_h;
    l.xs = {{0.5 * j, half_j}, {part, part_div}, {j, s.joint_divisions}, {part, part_div},
            {0.5 * j, half_j}};
    l.ys = {{0.5 * j, half_j}, {s.brick_h, bdy}, {j, s.joint_divisions}, {s.brick_h, bdy},
            {0.5 * j, half_j}};
    l.w = w;
    l.h = 2.0 * (s.brick_h + j);
    l.phase = [=](const Point& c) {
        if (c.y > c1_lo && c.y < c1_hi) {
            return (c.x > 0.5 * j && c.x < w - 0.5 * j) ? kBrickPhase : kMortarPhase;
        }
        if (c.y > c2_lo && c.y < c2_hi) {
            return (c.x < 0.5 * (w - j) || c.x > 0.5 * (w + j)) ? kBrickPhase : kMortarPhase;
        }
        return kMortarPhase;
    };
    return l;
}

} // namespace

Mesh generate_masonry_cell(const MasonryCellSpec& s)
{
    const CellLayout l = masonry_layout(s);
    return generate_tensor_mesh(l.xs, l.ys, l.phase, {"brick", "mortar"});
}

Mesh generate_masonry_wall(const MasonryCellSpec& s, int cells_x, int cells_y)
{
    if (cells_x < 1 || cells_y < 1) {
        throw InputError("a wall needs at least one cell in each direction");
    }
    const CellLayout l = masonry_layout(s);
    std::vector<Segment> xs, ys;
    for (int i = 0; i < cells_x; ++i) xs.insert(xs.end(), l.xs.begin(), l.xs.end());
    for (int i = 0; i < cells_y; ++i) ys.insert(ys.end(), l.ys.begin(), l.ys.end());
    const double w = l.w, h = l.h;
    const PhaseFunction cell_phase = l.phase;
    return generate_tensor_mesh(
        xs, ys,
        [=](const Point& c) {
            return cell_phase({c.x - w * std::floor(c.x / w), c.y - h * std::floor(c.y / h)});
        },
        {"brick", "mortar"});
}

PeriodicPairing detect_periodic_pairs(const Mesh& mesh)
{
    const double tol = 1e-9 * std::max(mesh.lx, mesh.ly);
    const double x0 = mesh.origin.x, x1 = mesh.origin.x + mesh.lx;
    const double y0 = mesh.origin.y, y1 = mesh.origin.y + mesh.ly;

    std::vector<int> left, right, bottom, top;
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
        const Point& p = mesh.nodes[i];
        const int id = static_cast<int>(i);
        if (std::abs(p.x - x0) <= tol) left.push_back(id);
        if (std::abs(p.x - x1) <= tol) right.push_back(id);
        if (std::abs(p.y - y0) <= tol) bottom.push_back(id);
        if (std::abs(p.y - y1) <= tol) top.push_back(id);
    }
    auto by_y = [&](int a, int b) { return mesh.nodes[static_cast<std::size_t>(a)].y < mesh.nodes[static_cast<std::size_t>(b)].y; };
    auto by_x = [&](int a, int b) { return mesh.nodes[static_cast<std::size_t>(a)].x < mesh.nodes[static_cast<std::size_t>(b)].x; };
    std::sort(left.begin(), left.end(), by_y);
    std::sort(right.begin(), right.end(), by_y);
    std::sort(bottom.begin(), bottom.end(), by_x);
    std::sort(top.begin(), top.end(), by_x);

    auto check_traces = [&](const std::vector<int>& a, const std::vector<int>& b, bool compare_y,
                            const char* what) {
        if (a.size() != b.size() || a.size() < 2) {
            throw InputError(std::string("non-periodic discretization: ") + what +
                             " boundary node counts differ");
        }
        for (std::size_t k = 0; k < a.size(); ++k) {
            const Point& p = mesh.nodes[static_cast<std::size_t>(a[k])];
            const Point& q = mesh.nodes[static_cast<std::size_t>(b[k])];
            const double d = compare_y ? p.y - q.y : p.x - q.x;
            if (std::abs(d) > tol) {
                throw InputError(std::string("non-periodic discretization: ") + what +
                                 " traces do not match");
            }
        }
    };
    check_traces(left, right, true, "left/right");
    check_traces(bottom, top, false, "bottom/top");

    // Corner nodes are the first/last entries of the sorted traces.
    const int c00 = left.front(), c01 = left.back(), c10 = right.front(), c11 = right.back();
    if (bottom.front() != c00 || bottom.back() != c10 || top.front() != c01 || top.back() != c11) {
        throw InputError("non-periodic discretization: corner nodes missing");
    }

    PeriodicPairing out;
    for (std::size_t k = 1; k + 1 < left.size(); ++k) {
        out.pairs.push_back({left[k], right[k], {mesh.lx, 0.0}});
    }
    for (std::size_t k = 1; k + 1 < bottom.size(); ++k) {
        out.pairs.push_back({bottom[k], top[k], {0.0, mesh.ly}});
    }
    out.pairs.push_back({c00, c10, {mesh.lx, 0.0}});
    out.pairs.push_back({c00, c01, {0.0, mesh.ly}});
    out.pairs.push_back({c00, c11, {mesh.lx, mesh.ly}});
    return out;
}

Mesh scale_mesh(const Mesh& mesh, double factor)
{
    if (!(factor > 0.0)) {
        throw InputError("scale factor must be positive");
    }
    Mesh out = mesh;
    for (auto& p : out.nodes) {
        p.x *= factor;
        p.y *= factor;
    }
    out.origin.x *= factor;
    out.origin.y *= factor;
    out.lx *= factor;
    out.ly *= factor;
    return out;
}

} // namespace mfe2
