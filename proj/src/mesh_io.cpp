#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "mfe2/error.hpp"
#include "mfe2/mesh.hpp"

namespace mfe2 {

namespace {

constexpr const char* kMagic = "mfe2-mesh";

std::string fmt_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <typename T>
T expect(std::istream& is, const char* what)
{
    T v{};
    if (!(is >> v)) {
        throw InputError(std::string("mesh file: expected ") + what);
    }
    return v;
}

void expect_keyword(std::istream& is, const std::string& kw)
{
    const auto got = expect<std::string>(is, kw.c_str());
    if (got != kw) {
        throw InputError("mesh file: expected '" + kw + "', found '" + got + "'");
    }
}

} // namespace

void write_mesh(std::ostream& os, const Mesh& mesh)
{
    os << kMagic << " 1\n";
    os << "nodes " << mesh.nodes.size() << '\n';
    for (const auto& p : mesh.nodes) {
        os << fmt_double(p.x) << ' ' << fmt_double(p.y) << '\n';
    }
    os << "triangles " << mesh.triangles.size() << '\n';
    for (const auto& t : mesh.triangles) {
        os << t.nodes[0] << ' ' << t.nodes[1] << ' ' << t.nodes[2] << ' ' << t.phase << '\n';
    }
    os << "phases " << mesh.phase_names.size() << '\n';
    for (std::size_t i = 0; i < mesh.phase_names.size(); ++i) {
        os << i << ' ' << (mesh.phase_names[i].empty() ? "-" : mesh.phase_names[i]) << '\n';
    }
    for (const auto& b : mesh.boundaries) {
        os << "boundary " << b.name << ' ' << to_string(b.side) << ' ' << b.edges.size() << '\n';
        for (const auto& e : b.edges) {
            os << e[0] << ' ' << e[1] << '\n';
        }
    }
    os << "end\n";
}

Mesh read_mesh(std::istream& is)
{
    expect_keyword(is, kMagic);
    if (expect<int>(is, "format version") != 1) {
        throw InputError("mesh file: unsupported format version");
    }
    Mesh m;
    expect_keyword(is, "nodes");
    const auto n = expect<std::size_t>(is, "node count");
    m.nodes.resize(n);
    double xmin = std::numeric_limits<double>::infinity(), ymin = xmin;
    double xmax = -xmin, ymax = -xmin;
    for (auto& p : m.nodes) {
        p.x = expect<double>(is, "node x");
        p.y = expect<double>(is, "node y");
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    }
    m.origin = {xmin, ymin};
    m.lx = xmax - xmin;
    m.ly = ymax - ymin;

    expect_keyword(is, "triangles");
    m.triangles.resize(expect<std::size_t>(is, "triangle count"));
    for (auto& t : m.triangles) {
        for (auto& v : t.nodes) v = expect<int>(is, "triangle node");
        t.phase = expect<int>(is, "triangle phase");
    }

    expect_keyword(is, "phases");
    m.phase_names.resize(expect<std::size_t>(is, "phase count"));
    for (std::size_t i = 0; i < m.phase_names.size(); ++i) {
        const auto id = expect<std::size_t>(is, "phase id");
        auto name = expect<std::string>(is, "phase name");
        if (id >= m.phase_names.size()) {
            throw InputError("mesh file: phase id out of range");
        }
        m.phase_names[id] = name == "-" ? "" : name;
    }

    for (;;) {
        const auto kw = expect<std::string>(is, "'boundary' or 'end'");
        if (kw == "end") break;
        if (kw != "boundary") {
            throw InputError("mesh file: unexpected section '" + kw + "'");
        }
        BoundarySet b;
        b.name = expect<std::string>(is, "boundary name");
        b.side = side_from_string(expect<std::string>(is, "boundary side"));
        b.edges.resize(expect<std::size_t>(is, "edge count"));
        for (auto& e : b.edges) {
            e[0] = expect<int>(is, "edge node");
            e[1] = expect<int>(is, "edge node");
        }
        m.boundaries.push_back(std::move(b));
    }
    validate_mesh(m);
    return m;
}

void write_mesh_file(const std::string& path, const Mesh& mesh)
{
    std::ofstream os(path);
    if (!os) {
        throw InputError("cannot open '" + path + "' for writing");
    }
    write_mesh(os, mesh);
    if (!os) {
        throw InputError("failed writing '" + path + "'");
    }
}

Mesh read_mesh_file(const std::string& path)
{
    std::ifstream is(path);
    if (!is) {
        throw InputError("cannot open mesh file '" + path + "'");
    }
    return read_mesh(is);
}

} // namespace mfe2
