#include "mfe2/results_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mfe2/error.hpp"

namespace mfe2 {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void require_history(const History& h)
{
    if (h.empty()) {
        throw InputError("cannot write an empty history");
    }
    for (const auto& f : h) {
        if (f.theta.size() != h.front().theta.size() || f.phi.size() != f.theta.size()) {
            throw InputError("history frames have inconsistent sizes");
        }
    }
}

std::ofstream open_output(const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    return out;
}

void ensure_dir(const std::string& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw std::runtime_error("cannot create output directory " + dir);
    }
}

} // namespace

ResultFormat result_format_from_string(const std::string& s)
{
    if (s == "csv") return ResultFormat::csv;
    if (s == "vtk") return ResultFormat::vtk;
    throw InputError("unknown result format '" + s + "' (expected csv or vtk)");
}

void write_field_csv(std::ostream& os, const History& history, Field field)
{
    require_history(history);
    os << "node";
    for (const auto& f : history) os << ',' << fmt(f.time / 3600.0);
    os << '\n';
    const auto n = history.front().theta.size();
    for (Eigen::Index i = 0; i < n; ++i) {
        os << i;
        for (const auto& f : history) os << ',' << fmt(field == kTheta ? f.theta[i] : f.phi[i]);
        os << '\n';
    }
}

FieldTable read_field_csv(std::istream& is)
{
    FieldTable t;
    std::string line;
    int line_no = 0;
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string f;
        while (std::getline(ss, f, ',')) out.push_back(f);
        return out;
    };
    auto number = [&](const std::string& s) {
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw InputError("result table line " + std::to_string(line_no) + ": bad number '" + s + "'");
        }
    };
    if (!std::getline(is, line)) {
        throw InputError("result table is empty");
    }
    ++line_no;
    auto head = split(line);
    if (head.empty() || head[0] != "node") {
        throw InputError("result table lacks the node header");
    }
    for (std::size_t k = 1; k < head.size(); ++k) t.times_h.push_back(number(head[k]));
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto f = split(line);
        if (f.size() != head.size()) {
            throw InputError("result table line " + std::to_string(line_no) + ": wrong column count");
        }
        std::vector<double> row;
        for (std::size_t k = 1; k < f.size(); ++k) row.push_back(number(f[k]));
        t.values.push_back(std::move(row));
    }
    return t;
}

std::vector<std::string> write_results_csv(const History& history, const std::string& dir)
{
    require_history(history);
    ensure_dir(dir);
    std::vector<std::string> paths;
    for (Field f : {kTheta, kPhi}) {
        const std::string path = (fs::path(dir) / (f == kTheta ? "theta.csv" : "phi.csv")).string();
        auto out = open_output(path);
        write_field_csv(out, history, f);
        if (!out) throw std::runtime_error("failed writing " + path);
        paths.push_back(path);
    }
    return paths;
}

History read_results_csv(const std::string& dir)
{
    FieldTable tables[2];
    for (int f = 0; f < 2; ++f) {
        const std::string path = (fs::path(dir) / (f == 0 ? "theta.csv" : "phi.csv")).string();
        std::ifstream in(path);
        if (!in) throw InputError("cannot open " + path);
        tables[f] = read_field_csv(in);
    }
    if (tables[0].times_h != tables[1].times_h || tables[0].values.size() != tables[1].values.size()) {
        throw InputError("theta and phi tables do not match");
    }
    History h;
    const auto n = static_cast<Eigen::Index>(tables[0].values.size());
    for (std::size_t k = 0; k < tables[0].times_h.size(); ++k) {
        FieldState s;
        s.time = tables[0].times_h[k] * 3600.0;
        s.theta.resize(n);
        s.phi.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            s.theta[i] = tables[0].values[static_cast<std::size_t>(i)][k];
            s.phi[i] = tables[1].values[static_cast<std::size_t>(i)][k];
        }
        h.push_back(std::move(s));
    }
    return h;
}

void write_vtk_frame(std::ostream& os, const Mesh& mesh, const FieldState& frame)
{
    if (frame.size() != mesh.nodes.size()) {
        throw InputError("frame does not match the mesh");
    }
    os << "# vtk DataFile Version 3.0\n";
    os << "heat and moisture fields, t = " << fmt(frame.time / 3600.0) << " h\n";
    os << "ASCII\nDATASET UNSTRUCTURED_GRID\n";
    os << "POINTS " << mesh.nodes.size() << " double\n";
    for (const auto& p : mesh.nodes) os << fmt(p.x) << ' ' << fmt(p.y) << " 0\n";
    os << "CELLS " << mesh.triangles.size() << ' ' << 4 * mesh.triangles.size() << '\n';
    for (const auto& t : mesh.triangles) {
        os << "3 " << t.nodes[0] << ' ' << t.nodes[1] << ' ' << t.nodes[2] << '\n';
    }
    os << "CELL_TYPES " << mesh.triangles.size() << '\n';
    for (std::size_t e = 0; e < mesh.triangles.size(); ++e) os << "5\n";
    os << "CELL_DATA " << mesh.triangles.size() << "\nSCALARS phase int 1\nLOOKUP_TABLE default\n";
    for (const auto& t : mesh.triangles) os << t.phase << '\n';
    os << "POINT_DATA " << mesh.nodes.size() << '\n';
    os << "SCALARS theta double 1\nLOOKUP_TABLE default\n";
    for (Eigen::Index i = 0; i < frame.theta.size(); ++i) os << fmt(frame.theta[i]) << '\n';
    os << "SCALARS phi double 1\nLOOKUP_TABLE default\n";
    for (Eigen::Index i = 0; i < frame.phi.size(); ++i) os << fmt(frame.phi[i]) << '\n';
}

std::vector<std::string> write_results_vtk(const History& history, const Mesh& mesh,
                                           const std::string& dir)
{
    require_history(history);
    ensure_dir(dir);
    std::vector<std::string> paths;
    for (std::size_t k = 0; k < history.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%04zu.vtk", k);
        const std::string path = (fs::path(dir) / name).string();
        auto out = open_output(path);
        write_vtk_frame(out, mesh, history[k]);
        if (!out) throw std::runtime_error("failed writing " + path);
        paths.push_back(path);
    }
    return paths;
}

std::vector<std::string> write_results(const History& history, const Mesh& mesh,
                                       ResultFormat format, const std::string& dir)
{
    if (format == ResultFormat::csv) {
        if (!history.empty() && history.front().size() != mesh.nodes.size()) {
            throw InputError("history does not match the mesh");
        }
        return write_results_csv(history, dir);
    }
    return write_results_vtk(history, mesh, dir);
}

} // namespace mfe2
