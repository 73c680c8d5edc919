#include "nanoflow/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace nanoflow {

std::string_view to_string(BoundaryTag tag) {
    switch (tag) {
        case BoundaryTag::left: return "left";
        case BoundaryTag::right: return "right";
        case BoundaryTag::top: return "top";
        case BoundaryTag::bottom: return "bottom";
    }
    return "unknown";
}

std::optional<BoundaryTag> parse_boundary_tag(std::string_view name) {
    for (auto tag : kAllBoundaryTags) {
        if (to_string(tag) == name) return tag;
    }
    return std::nullopt;
}

namespace {

std::array<int, 2> sorted_pair(int a, int b) { return a < b ? std::array{a, b} : std::array{b, a}; }

}  // namespace

Mesh::Mesh(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> triangles,
           std::vector<BoundaryEdge> boundary, int level, std::vector<int> parents)
    : vertices_(std::move(vertices)),
      triangles_(std::move(triangles)),
      parents_(std::move(parents)),
      level_(level) {
    if (triangles_.empty()) throw std::invalid_argument("Mesh: no triangles");
    const int nv = num_vertices();
    for (const auto& tri : triangles_) {
        for (int v : tri) {
            if (v < 0 || v >= nv) throw std::invalid_argument("Mesh: vertex index out of range");
        }
    }
    for (int t = 0; t < num_triangles(); ++t) {
        if (!(signed_area(t) > 0.0)) {
            throw std::invalid_argument("Mesh: triangle " + std::to_string(t) +
                                        " has nonpositive signed area");
        }
    }
    if (!parents_.empty() && parents_.size() != triangles_.size()) {
        throw std::invalid_argument("Mesh: parent list size mismatch");
    }
    build_edges(boundary);
}

void Mesh::build_edges(const std::vector<BoundaryEdge>& boundary) {
    struct Half {
        std::array<int, 2> key;
        int tri;
        int local;
    };
    std::vector<Half> halves;
    halves.reserve(3 * triangles_.size());
    for (int t = 0; t < num_triangles(); ++t) {
        const auto& tri = triangles_[static_cast<std::size_t>(t)];
        for (int e = 0; e < 3; ++e) {
            halves.push_back({sorted_pair(tri[e], tri[(e + 1) % 3]), t, e});
        }
    }
    std::sort(halves.begin(), halves.end(), [](const Half& a, const Half& b) {
        return a.key != b.key ? a.key < b.key : a.tri < b.tri;
    });

    tri_edges_.assign(triangles_.size(), {-1, -1, -1});
    edges_.clear();
    for (std::size_t i = 0; i < halves.size();) {
        std::size_t j = i;
        while (j < halves.size() && halves[j].key == halves[i].key) ++j;
        if (j - i > 2) throw std::invalid_argument("Mesh: edge shared by more than two triangles");
        Edge edge;
        edge.v = halves[i].key;
        const int id = static_cast<int>(edges_.size());
        for (std::size_t k = i; k < j; ++k) {
            edge.tri[k - i] = halves[k].tri;
            tri_edges_[static_cast<std::size_t>(halves[k].tri)][static_cast<std::size_t>(halves[k].local)] = id;
        }
        edges_.push_back(edge);
        i = j;
    }

    for (const auto& b : boundary) {
        const auto key = sorted_pair(b.v[0], b.v[1]);
        auto it = std::lower_bound(edges_.begin(), edges_.end(), key,
                                   [](const Edge& e, const std::array<int, 2>& k) { return e.v < k; });
        if (it == edges_.end() || it->v != key) {
            throw std::invalid_argument("Mesh: tagged edge is not an edge of the triangulation");
        }
        if (!it->is_boundary()) throw std::invalid_argument("Mesh: tagged edge is interior");
        it->tag = b.tag;
    }
}

double Mesh::signed_area(int t) const {
    const auto& tri = triangle(t);
    const Vec2 a = vertex(tri[1]) - vertex(tri[0]);
    const Vec2 b = vertex(tri[2]) - vertex(tri[0]);
    return 0.5 * (a.x() * b.y() - a.y() * b.x());
}

double Mesh::diameter(int t) const {
    const auto& tri = triangle(t);
    double d = 0.0;
    for (int e = 0; e < 3; ++e) d = std::max(d, (vertex(tri[e]) - vertex(tri[(e + 1) % 3])).norm());
    return d;
}

Vec2 Mesh::centroid(int t) const {
    const auto& tri = triangle(t);
    return (vertex(tri[0]) + vertex(tri[1]) + vertex(tri[2])) / 3.0;
}

double Mesh::shape_ratio(int t) const {
    const auto& tri = triangle(t);
    const double a = (vertex(tri[1]) - vertex(tri[2])).norm();
    const double b = (vertex(tri[2]) - vertex(tri[0])).norm();
    const double c = (vertex(tri[0]) - vertex(tri[1])).norm();
    const double area = signed_area(t);
    const double circum = a * b * c / (4.0 * area);
    const double in = 2.0 * area / (a + b + c);
    return circum / in;
}

std::vector<BoundaryEdge> Mesh::boundary_edges() const {
    std::vector<BoundaryEdge> out;
    for (const auto& e : edges_) {
        if (e.tag) out.push_back({e.v, *e.tag});
    }
    return out;
}

std::pair<Vec2, Vec2> Mesh::bounding_box() const {
    Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
    Vec2 hi = -lo;
    for (const auto& v : vertices_) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    return {lo, hi};
}

double Mesh::total_area() const {
    double sum = 0.0;
    for (int t = 0; t < num_triangles(); ++t) sum += signed_area(t);
    return sum;
}

Mesh build_rectangle(double width, double height, int nx, int ny) {
    if (!(width > 0.0) || !(height > 0.0)) {
        throw std::invalid_argument("build_rectangle: width and height must be positive");
    }
    if (nx < 1 || ny < 1) throw std::invalid_argument("build_rectangle: nx, ny must be >= 1");

    auto id = [nx](int i, int j) { return j * (nx + 1) + i; };
    std::vector<Vec2> vertices;
    vertices.reserve(static_cast<std::size_t>((nx + 1) * (ny + 1)));
    for (int j = 0; j <= ny; ++j) {
        for (int i = 0; i <= nx; ++i) {
            vertices.emplace_back(width * i / nx, height * j / ny);
        }
    }
    std::vector<std::array<int, 3>> triangles;
    triangles.reserve(static_cast<std::size_t>(2 * nx * ny));
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    }
    std::vector<BoundaryEdge> boundary;
    for (int i = 0; i < nx; ++i) {
        boundary.push_back({{id(i, 0), id(i + 1, 0)}, BoundaryTag::bottom});
        boundary.push_back({{id(i, ny), id(i + 1, ny)}, BoundaryTag::top});
    }
    for (int j = 0; j < ny; ++j) {
        boundary.push_back({{id(0, j), id(0, j + 1)}, BoundaryTag::left});
        boundary.push_back({{id(nx, j), id(nx, j + 1)}, BoundaryTag::right});
    }
    return Mesh(std::move(vertices), std::move(triangles), std::move(boundary));
}

Mesh refine_uniform(const Mesh& mesh) {
    const int nv = mesh.num_vertices();
    std::vector<Vec2> vertices(mesh.vertices().begin(), mesh.vertices().end());
    vertices.reserve(static_cast<std::size_t>(nv + mesh.num_edges()));
    for (const auto& e : mesh.edges()) {
        vertices.push_back(0.5 * (mesh.vertex(e.v[0]) + mesh.vertex(e.v[1])));
    }

    std::vector<std::array<int, 3>> triangles;
    std::vector<int> parents;
    triangles.reserve(static_cast<std::size_t>(4 * mesh.num_triangles()));
    parents.reserve(triangles.capacity());
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto& v = mesh.triangle(t);
        const auto& e = mesh.triangle_edges(t);
        const int m01 = nv + e[0];
        const int m12 = nv + e[1];
        const int m20 = nv + e[2];
        triangles.push_back({v[0], m01, m20});
        triangles.push_back({m01, v[1], m12});
        triangles.push_back({m20, m12, v[2]});
        triangles.push_back({m01, m12, m20});
        for (int k = 0; k < 4; ++k) parents.push_back(t);
    }

    std::vector<BoundaryEdge> boundary;
    for (int i = 0; i < mesh.num_edges(); ++i) {
        const auto& e = mesh.edge(i);
        if (!e.tag) continue;
        boundary.push_back({{e.v[0], nv + i}, *e.tag});
        boundary.push_back({{nv + i, e.v[1]}, *e.tag});
    }
    return Mesh(std::move(vertices), std::move(triangles), std::move(boundary), mesh.level() + 1,
                std::move(parents));
}

double mesh_size(const Mesh& mesh) {
    double h = 0.0;
    for (int t = 0; t < mesh.num_triangles(); ++t) h = std::max(h, mesh.diameter(t));
    return h;
}

double min_diameter(const Mesh& mesh) {
    double h = std::numeric_limits<double>::infinity();
    for (int t = 0; t < mesh.num_triangles(); ++t) h = std::min(h, mesh.diameter(t));
    return h;
}

void write_mesh(std::ostream& os, const Mesh& mesh) {
    const auto boundary = mesh.boundary_edges();
    os << mesh.num_triangles() << ' ' << mesh.num_vertices() << '\n';
    os << std::setprecision(17);
    for (const auto& v : mesh.vertices()) os << v.x() << ' ' << v.y() << '\n';
    for (const auto& t : mesh.triangles()) os << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    for (const auto& b : boundary) os << b.v[0] << ' ' << b.v[1] << ' ' << to_string(b.tag) << '\n';
}

Mesh read_mesh(std::istream& is) {
    int ntri = 0;
    int nvert = 0;
    if (!(is >> ntri >> nvert) || ntri <= 0 || nvert <= 0) {
        throw std::runtime_error("read_mesh: bad header");
    }
    std::vector<Vec2> vertices(static_cast<std::size_t>(nvert));
    for (auto& v : vertices) {
        if (!(is >> v.x() >> v.y())) throw std::runtime_error("read_mesh: truncated vertex list");
    }
    std::vector<std::array<int, 3>> triangles(static_cast<std::size_t>(ntri));
    for (auto& t : triangles) {
        if (!(is >> t[0] >> t[1] >> t[2])) throw std::runtime_error("read_mesh: truncated triangle list");
    }
    std::vector<BoundaryEdge> boundary;
    int a = 0;
    int b = 0;
    std::string name;
    while (is >> a >> b >> name) {
        auto tag = parse_boundary_tag(name);
        if (!tag) throw std::runtime_error("read_mesh: unknown boundary tag '" + name + "'");
        boundary.push_back({{a, b}, *tag});
    }
    return Mesh(std::move(vertices), std::move(triangles), std::move(boundary));
}

Vec3 barycentric(const Mesh& mesh, int t, const Vec2& x) {
    const auto& tri = mesh.triangle(t);
    const Vec2& a = mesh.vertex(tri[0]);
    const Vec2 b = mesh.vertex(tri[1]) - a;
    const Vec2 c = mesh.vertex(tri[2]) - a;
    const Vec2 d = x - a;
    const double det = b.x() * c.y() - b.y() * c.x();
    const double l1 = (d.x() * c.y() - d.y() * c.x()) / det;
    const double l2 = (b.x() * d.y() - b.y() * d.x()) / det;
    return {1.0 - l1 - l2, l1, l2};
}

PointLocator::PointLocator(const Mesh& mesh) : mesh_(&mesh) {
    auto [lo, hi] = mesh.bounding_box();
    const Vec2 ext = hi - lo;
    const double n = std::sqrt(static_cast<double>(mesh.num_triangles()) / 2.0);
    const double aspect = ext.x() / ext.y();
    nbx_ = std::max(1, static_cast<int>(std::ceil(n * std::sqrt(aspect))));
    nby_ = std::max(1, static_cast<int>(std::ceil(n / std::sqrt(aspect))));
    lo_ = lo;
    cell_ = Vec2(ext.x() / nbx_, ext.y() / nby_);

    auto range = [&](const Vec2& pmin, const Vec2& pmax) {
        const double eps = 1e-10;
        const int i0 = std::clamp(static_cast<int>(std::floor((pmin.x() - lo_.x()) / cell_.x() - eps)), 0, nbx_ - 1);
        const int i1 = std::clamp(static_cast<int>(std::floor((pmax.x() - lo_.x()) / cell_.x() + eps)), 0, nbx_ - 1);
        const int j0 = std::clamp(static_cast<int>(std::floor((pmin.y() - lo_.y()) / cell_.y() - eps)), 0, nby_ - 1);
        const int j1 = std::clamp(static_cast<int>(std::floor((pmax.y() - lo_.y()) / cell_.y() + eps)), 0, nby_ - 1);
        return std::array{i0, i1, j0, j1};
    };

    std::vector<int> counts(static_cast<std::size_t>(nbx_ * nby_) + 1, 0);
    auto for_each_bucket = [&](int t, auto&& fn) {
        const auto& tri = mesh.triangle(t);
        Vec2 pmin = mesh.vertex(tri[0]);
        Vec2 pmax = pmin;
        for (int k = 1; k < 3; ++k) {
            pmin = pmin.cwiseMin(mesh.vertex(tri[k]));
            pmax = pmax.cwiseMax(mesh.vertex(tri[k]));
        }
        const auto r = range(pmin, pmax);
        for (int j = r[2]; j <= r[3]; ++j) {
            for (int i = r[0]; i <= r[1]; ++i) fn(j * nbx_ + i);
        }
    };
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        for_each_bucket(t, [&](int b) { ++counts[static_cast<std::size_t>(b) + 1]; });
    }
    for (std::size_t i = 1; i < counts.size(); ++i) counts[i] += counts[i - 1];
    offsets_ = std::move(counts);
    items_.resize(static_cast<std::size_t>(offsets_.back()));
    std::vector<int> fill(offsets_.begin(), offsets_.end() - 1);
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        for_each_bucket(t, [&](int b) { items_[static_cast<std::size_t>(fill[static_cast<std::size_t>(b)]++)] = t; });
    }
}

std::optional<PointLocator::Hit> PointLocator::locate(const Vec2& x) const {
    const int i = std::clamp(static_cast<int>(std::floor((x.x() - lo_.x()) / cell_.x())), 0, nbx_ - 1);
    const int j = std::clamp(static_cast<int>(std::floor((x.y() - lo_.y()) / cell_.y())), 0, nby_ - 1);
    const int b = j * nbx_ + i;
    std::optional<Hit> best;
    double best_min = -std::numeric_limits<double>::infinity();
    for (int k = offsets_[static_cast<std::size_t>(b)]; k < offsets_[static_cast<std::size_t>(b) + 1]; ++k) {
        const int t = items_[static_cast<std::size_t>(k)];
        const Vec3 bary = barycentric(*mesh_, t, x);
        const double m = bary.minCoeff();
        if (m > best_min) {
            best_min = m;
            best = Hit{t, bary};
        }
        if (m >= 0.0) break;
    }
    if (!best || best_min < -1e-10) return std::nullopt;
    best->bary = best->bary.cwiseMax(0.0);
    best->bary /= best->bary.sum();
    return best;
}

}  // namespace nanoflow
