#pragma once

// History export: per-field CSV tables and legacy VTK frames.

#include <iosfwd>
#include <string>
#include <vector>

#include "mfe2/fem.hpp"
#include "mfe2/mesh.hpp"
#include "mfe2/solver.hpp"

namespace mfe2 {

enum class ResultFormat { csv, vtk };

ResultFormat result_format_from_string(const std::string& s);

// Header "node,<t_0 in h>,<t_1 in h>,...", then one row per node.
void write_field_csv(std::ostream& os, const History& history, Field field);
// Reads back the table; returns (times [h], node-major values).
struct FieldTable {
    std::vector<double> times_h;
    std::vector<std::vector<double>> values; // values[node][frame]
};
FieldTable read_field_csv(std::istream& is);

// theta.csv and phi.csv in dir.
std::vector<std::string> write_results_csv(const History& history, const std::string& dir);
History read_results_csv(const std::string& dir);

// One legacy ASCII unstructured grid per frame, frame_0000.vtk, ...
void write_vtk_frame(std::ostream& os, const Mesh& mesh, const FieldState& frame);
std::vector<std::string> write_results_vtk(const History& history, const Mesh& mesh,
                                           const std::string& dir);

// Dispatches on the format; returns the written paths.
std::vector<std::string> write_results(const History& history, const Mesh& mesh,
                                       ResultFormat format, const std::string& dir);

} // namespace mfe2
