#pragma once

// Structured 2D triangulations for macro domains and periodic unit cells.

#include <array>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace mfe2 {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

enum class Side { left, right, bottom, top };

const char* to_string(Side s);
Side side_from_string(const std::string& s);

struct Triangle {
    std::array<int, 3> nodes{};
    int phase = 0;
};

// Edges are stored in the counter-clockwise orientation of their triangle.
struct BoundarySet {
    std::string name;
    Side side = Side::left;
    std::vector<std::array<int, 2>> edges;
};

struct Mesh {
    std::vector<Point> nodes;
    std::vector<Triangle> triangles;
    std::vector<std::string> phase_names;
    std::vector<BoundarySet> boundaries;
    Point origin;
    double lx = 0.0;
    double ly = 0.0;

    std::size_t node_count() const { return nodes.size(); }
    std::size_t element_count() const { return triangles.size(); }

    double signed_area(std::size_t element) const;
    Point centroid(std::size_t element) const;
    Point bbox_center() const { return {origin.x + 0.5 * lx, origin.y + 0.5 * ly}; }

    const BoundarySet& boundary(const std::string& name) const;
    bool has_boundary(const std::string& name) const;
    // Distinct nodes of a boundary set in ascending order.
    std::vector<int> boundary_nodes(const std::string& name) const;
    int phase_id(const std::string& name) const;
};

// Throws InputError describing the first violated invariant. known_phases = 0
// skips the material label check.
void validate_mesh(const Mesh& mesh, std::size_t known_phases = 0);

// One axis interval of a tensor-product grid.
struct Segment {
    double length = 0.0;
    int divisions = 1;
};

using PhaseFunction = std::function<int(const Point& centroid)>;

// Tensor-product grid anchored at the origin; each cell split into two
// right triangles along the (i,j)-(i+1,j+1) diagonal. Boundary sets are
// named left/right/bottom/top.
Mesh generate_tensor_mesh(const std::vector<Segment>& xs, const std::vector<Segment>& ys,
                          const PhaseFunction& phase_of, std::vector<std::string> phase_names);

Mesh generate_rectangle_mesh(double lx, double ly, int nx, int ny, int phase = 0,
                             const std::string& phase_name = "material");

enum class Bond { stack, running };

Bond bond_from_string(const std::string& s);

// Brick/mortar unit cell. Stack bond: one brick of brick_w x brick_h framed by
// half joints, cell (brick_w + joint) x (brick_h + joint). Running bond: two
// courses shifted by half a brick, cell (brick_w + joint) x 2 (brick_h + joint).
// Phase 0 is brick, phase 1 is mortar.
struct MasonryCellSpec {
    double brick_w = 0.0;
    double brick_h = 0.0;
    double joint = 0.0;
    Bond bond = Bond::stack;
    int joint_divisions = 2;    // elements across one full joint
    int brick_divisions_x = 0;  // 0 selects a default
    int brick_divisions_y = 0;
};

inline constexpr int kBrickPhase = 0;
inline constexpr int kMortarPhase = 1;

Mesh generate_masonry_cell(const MasonryCellSpec& spec);

// cells_x x cells_y copies of the cell, fully resolved, with the wall's
// left/right/bottom/top boundary sets.
Mesh generate_masonry_wall(const MasonryCellSpec& spec, int cells_x, int cells_y);

enum class CornerPolicy { single_master };

struct PeriodicPair {
    int master = 0;
    int slave = 0;
    Point offset; // x_slave - x_master
};

struct PeriodicPairing {
    std::vector<PeriodicPair> pairs;
    CornerPolicy policy = CornerPolicy::single_master;
};

// Pairs left->right and bottom->top boundary nodes. The three corners other
// than the bottom-left one are all slaved to it.
PeriodicPairing detect_periodic_pairs(const Mesh& mesh);

Mesh scale_mesh(const Mesh& mesh, double factor);

// Text format, see README for the layout.
void write_mesh(std::ostream& os, const Mesh& mesh);
Mesh read_mesh(std::istream& is);
void write_mesh_file(const std::string& path, const Mesh& mesh);
Mesh read_mesh_file(const std::string& path);

} // namespace mfe2
