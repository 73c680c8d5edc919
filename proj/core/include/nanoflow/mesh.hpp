#pragma once

/// @file mesh.hpp
/// @brief Conforming triangulations of rectangles with tagged boundary edges.
///
/// The domain is always a rectangle, so boundary edges are straight and the
/// triangulation represents the geometry exactly; no curved boundary elements
/// are needed. Boundary conditions are attached to edge tags rather than to
/// geometric callbacks.

#include "nanoflow/types.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace nanoflow {

enum class BoundaryTag : std::uint8_t { left, right, top, bottom };

inline constexpr std::array<BoundaryTag, 4> kAllBoundaryTags{
    BoundaryTag::left, BoundaryTag::right, BoundaryTag::top, BoundaryTag::bottom};

std::string_view to_string(BoundaryTag tag);
std::optional<BoundaryTag> parse_boundary_tag(std::string_view name);

struct BoundaryEdge {
    std::array<int, 2> v;
    BoundaryTag tag;
};

struct Edge {
    std::array<int, 2> v;          // sorted: v[0] < v[1]
    std::array<int, 2> tri{-1, -1};  // tri[1] == -1 on the boundary
    std::optional<BoundaryTag> tag;

    [[nodiscard]] bool is_boundary() const { return tri[1] < 0; }
};

/// Immutable triangulation. Local edge e of a triangle joins local vertices
/// e and (e+1)%3, i.e. the edges are (0,1), (1,2), (2,0).
class Mesh {
public:
    Mesh(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> triangles,
         std::vector<BoundaryEdge> boundary, int level = 0, std::vector<int> parents = {});

    [[nodiscard]] int num_vertices() const { return static_cast<int>(vertices_.size()); }
    [[nodiscard]] int num_triangles() const { return static_cast<int>(triangles_.size()); }
    [[nodiscard]] int num_edges() const { return static_cast<int>(edges_.size()); }

    [[nodiscard]] const Vec2& vertex(int i) const { return vertices_[static_cast<std::size_t>(i)]; }
    [[nodiscard]] std::span<const Vec2> vertices() const { return vertices_; }
    [[nodiscard]] const std::array<int, 3>& triangle(int t) const {
        return triangles_[static_cast<std::size_t>(t)];
    }
    [[nodiscard]] std::span<const std::array<int, 3>> triangles() const { return triangles_; }
    [[nodiscard]] const Edge& edge(int e) const { return edges_[static_cast<std::size_t>(e)]; }
    [[nodiscard]] std::span<const Edge> edges() const { return edges_; }
    [[nodiscard]] const std::array<int, 3>& triangle_edges(int t) const {
        return tri_edges_[static_cast<std::size_t>(t)];
    }

    /// Refinement generation; 0 for a mesh built directly.
    [[nodiscard]] int level() const { return level_; }
    /// Parent triangle in the previous generation, empty at level 0.
    [[nodiscard]] std::span<const int> parents() const { return parents_; }

    [[nodiscard]] double signed_area(int t) const;
    [[nodiscard]] double area(int t) const { return signed_area(t); }
    [[nodiscard]] double diameter(int t) const;
    [[nodiscard]] Vec2 centroid(int t) const;
    /// Circumradius over inradius; equals 2 for an equilateral triangle.
    [[nodiscard]] double shape_ratio(int t) const;

    [[nodiscard]] std::vector<BoundaryEdge> boundary_edges() const;
    [[nodiscard]] std::pair<Vec2, Vec2> bounding_box() const;
    [[nodiscard]] double total_area() const;

private:
    void build_edges(const std::vector<BoundaryEdge>& boundary);

    std::vector<Vec2> vertices_;
    std::vector<std::array<int, 3>> triangles_;
    std::vector<Edge> edges_;
    std::vector<std::array<int, 3>> tri_edges_;
    std::vector<int> parents_;
    int level_ = 0;
};

/// Structured diagonal-split triangulation of [0,width]x[0,height] with
/// 2*nx*ny triangles and (nx+1)*(ny+1) vertices.
Mesh build_rectangle(double width, double height, int nx, int ny);

/// Red refinement: every triangle is split into four congruent children.
/// The new vertex on edge e receives index num_vertices() + e, so a P2 nodal
/// vector on the parent is a P1 nodal vector on the child mesh.
Mesh refine_uniform(const Mesh& mesh);

/// Maximum triangle diameter.
double mesh_size(const Mesh& mesh);
double min_diameter(const Mesh& mesh);

/// Plain-text dump: `ntri nvert`, vertex lines, triangle lines, then
/// boundary edge lines `v0 v1 tag`.
void write_mesh(std::ostream& os, const Mesh& mesh);
Mesh read_mesh(std::istream& is);

/// Bucket-grid point location.
class PointLocator {
public:
    explicit PointLocator(const Mesh& mesh);

    struct Hit {
        int triangle;
        Vec3 bary;
    };
    /// Returns the containing triangle, or nothing when the point is outside
    /// the mesh by more than a rounding tolerance. The barycentric coordinates
    /// are clamped to be nonnegative and renormalized.
    [[nodiscard]] std::optional<Hit> locate(const Vec2& x) const;

private:
    const Mesh* mesh_;
    Vec2 lo_;
    Vec2 cell_;
    int nbx_ = 1;
    int nby_ = 1;
    std::vector<int> offsets_;
    std::vector<int> items_;
};

Vec3 barycentric(const Mesh& mesh, int t, const Vec2& x);

}  // namespace nanoflow
