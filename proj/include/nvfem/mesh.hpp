#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nvfem/errors.hpp"

namespace nvfem {

using Vec2 = Eigen::Vector2d;

struct BoundaryEdge {
    std::array<int, 2> verts; // endpoints, ordered as traversed by the parent cell
    Vec2 normal;              // unit outward normal of the parent cell
    int cell;                 // parent cell index
};

/// Conforming triangulation of a polygonal domain. Immutable once finalized:
/// the factory functions below are the only producers.
class Mesh {
public:
    std::vector<Vec2> vertices;
    std::vector<std::array<int, 3>> cells; // CCW vertex triples
    std::vector<std::array<int, 2>> edges; // unique, endpoints sorted ascending
    std::vector<BoundaryEdge> boundary_edges;

    int num_vertices() const { return static_cast<int>(vertices.size()); }
    int num_cells() const { return static_cast<int>(cells.size()); }
    int num_edges() const { return static_cast<int>(edges.size()); }

    /// Edge index of the (unordered) vertex pair, or -1.
    int edge_index(int a, int b) const {
        auto it = edge_lookup_.find(edge_key(a, b));
        return it == edge_lookup_.end() ? -1 : it->second;
    }

    double signed_area(int cell) const {
        const Vec2& p0 = vertices[cells[cell][0]];
        const Vec2& p1 = vertices[cells[cell][1]];
        const Vec2& p2 = vertices[cells[cell][2]];
        return 0.5 * ((p1.x() - p0.x()) * (p2.y() - p0.y()) -
                      (p2.x() - p0.x()) * (p1.y() - p0.y()));
    }

    double total_area() const {
        double a = 0.0;
        for (int c = 0; c < num_cells(); ++c) a += signed_area(c);
        return a;
    }

    /// Longest edge of a cell.
    double cell_diameter(int cell) const {
        double d = 0.0;
        for (int e = 0; e < 3; ++e) {
            const Vec2& a = vertices[cells[cell][e]];
            const Vec2& b = vertices[cells[cell][(e + 1) % 3]];
            d = std::max(d, (a - b).norm());
        }
        return d;
    }

    /// Circumradius / inradius of a cell.
    double aspect_ratio(int cell) const {
        const Vec2& p0 = vertices[cells[cell][0]];
        const Vec2& p1 = vertices[cells[cell][1]];
        const Vec2& p2 = vertices[cells[cell][2]];
        const double a = (p1 - p2).norm();
        const double b = (p2 - p0).norm();
        const double c = (p0 - p1).norm();
        const double area = signed_area(cell);
        const double s = 0.5 * (a + b + c);
        return (a * b * c * s) / (4.0 * area * area);
    }

    /// Builds edge/boundary tables and checks conformity. Called by factories.
    void finalize() {
        edges.clear();
        boundary_edges.clear();
        edge_lookup_.clear();

        for (int c = 0; c < num_cells(); ++c) {
            if (signed_area(c) <= 0.0)
                throw invariant_violation("cell " + std::to_string(c) +
                                          " has nonpositive signed area");
        }

        // Directed edges must be unique: catches duplicated cells and
        // orientation mismatches between neighbours.
        std::map<std::pair<int, int>, int> directed; // (a,b) -> cell
        struct EdgeInfo {
            int count = 0;
            int cell = -1;      // a cell owning it
            int local = -1;     // local edge index in that cell
        };
        std::map<std::pair<int, int>, EdgeInfo> undirected;

        for (int c = 0; c < num_cells(); ++c) {
            for (int e = 0; e < 3; ++e) {
                const int a = cells[c][e];
                const int b = cells[c][(e + 1) % 3];
                if (a == b)
                    throw invariant_violation("degenerate edge in cell " + std::to_string(c));
                if (!directed.emplace(std::make_pair(a, b), c).second)
                    throw invariant_violation(
                        "directed edge repeated: nonconforming or duplicated cell " +
                        std::to_string(c));
                auto& info = undirected[std::minmax(a, b)];
                info.count += 1;
                info.cell = c;
                info.local = e;
            }
        }

        for (const auto& [key, info] : undirected) {
            if (info.count > 2)
                throw invariant_violation("edge shared by more than two cells");
            const int idx = static_cast<int>(edges.size());
            edges.push_back({key.first, key.second});
            edge_lookup_[edge_key(key.first, key.second)] = idx;
            if (info.count == 1) {
                const int a = cells[info.cell][info.local];
                const int b = cells[info.cell][(info.local + 1) % 3];
                const Vec2 t = vertices[b] - vertices[a];
                // CCW cell: outward normal is the tangent rotated clockwise.
                Vec2 n(t.y(), -t.x());
                n.normalize();
                boundary_edges.push_back({{a, b}, n, info.cell});
            }
        }

        for (int c = 0; c < num_cells(); ++c) {
            if (aspect_ratio(c) > shape_regularity_bound)
                throw invariant_violation("cell " + std::to_string(c) +
                                          " violates shape regularity");
        }
    }

    static constexpr double shape_regularity_bound = 20.0;

private:
    static std::int64_t edge_key(int a, int b) {
        if (a > b) std::swap(a, b);
        return (static_cast<std::int64_t>(a) << 32) | static_cast<std::uint32_t>(b);
    }
    std::map<std::int64_t, int> edge_lookup_;
};

namespace detail {

// Uniform double in [-1,1) from a seeded engine, independent of the
// standard library's distribution implementation.
inline double unit_symmetric(std::mt19937_64& rng) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53; // [0,1)
    return 2.0 * u - 1.0;
}

} // namespace detail

/// Criss-cross triangulation of [xmin,xmax]^2 with n x n squares, each split
/// into 4 triangles about its centroid. Interior grid vertices are displaced
/// by at most perturb * (square width) per coordinate, deterministically.
inline Mesh generate_square_mesh(double xmin, double xmax, int n, double perturb,
                                 std::uint64_t seed = 0) {
    if (!(xmax > xmin)) throw invalid_parameter("generate_square_mesh: xmax must exceed xmin");
    if (n < 1) throw invalid_parameter("generate_square_mesh: n must be >= 1");
    if (!(perturb >= 0.0 && perturb < 0.3))
        throw invalid_parameter("generate_square_mesh: perturb must lie in [0, 0.3)");

    const double w = (xmax - xmin) / n;
    Mesh m;
    m.vertices.reserve(static_cast<std::size_t>((n + 1) * (n + 1) + n * n));

    for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i)
            m.vertices.emplace_back(xmin + i * w, xmin + j * w);

    if (perturb > 0.0) {
        std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
        for (int j = 1; j < n; ++j) {
            for (int i = 1; i < n; ++i) {
                Vec2& v = m.vertices[static_cast<std::size_t>(j) * (n + 1) + i];
                v.x() += perturb * w * detail::unit_symmetric(rng);
                v.y() += perturb * w * detail::unit_symmetric(rng);
            }
        }
    }

    const auto grid = [n](int i, int j) { return j * (n + 1) + i; };
    const int centroid_base = (n + 1) * (n + 1);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const int a = grid(i, j), b = grid(i + 1, j);
            const int c = grid(i + 1, j + 1), d = grid(i, j + 1);
            const Vec2 centroid = 0.25 * (m.vertices[a] + m.vertices[b] +
                                          m.vertices[c] + m.vertices[d]);
            const int mid = centroid_base + j * n + i;
            m.vertices.push_back(centroid);
            m.cells.push_back({a, b, mid});
            m.cells.push_back({b, c, mid});
            m.cells.push_back({c, d, mid});
            m.cells.push_back({d, a, mid});
        }
    }

    m.finalize();

    const double domain_area = (xmax - xmin) * (xmax - xmin);
    if (std::abs(m.total_area() - domain_area) > 1e-12 * domain_area)
        throw invariant_violation("generated mesh does not tile the domain");
    return m;
}

/// Red refinement: each triangle split into 4 congruent children by its edge
/// midpoints.
inline Mesh refine_uniform(const Mesh& m) {
    Mesh out;
    out.vertices = m.vertices;
    out.vertices.reserve(m.vertices.size() + m.edges.size());
    for (const auto& e : m.edges)
        out.vertices.push_back(0.5 * (m.vertices[e[0]] + m.vertices[e[1]]));

    const int nv = m.num_vertices();
    out.cells.reserve(static_cast<std::size_t>(4) * m.cells.size());
    for (const auto& c : m.cells) {
        const int m01 = nv + m.edge_index(c[0], c[1]);
        const int m12 = nv + m.edge_index(c[1], c[2]);
        const int m20 = nv + m.edge_index(c[2], c[0]);
        out.cells.push_back({c[0], m01, m20});
        out.cells.push_back({c[1], m12, m01});
        out.cells.push_back({c[2], m20, m12});
        out.cells.push_back({m01, m12, m20});
    }
    out.finalize();
    return out;
}

/// Global meshsize: max over cells of the cell diameter.
inline double mesh_size(const Mesh& m) {
    double h = 0.0;
    for (int c = 0; c < m.num_cells(); ++c) h = std::max(h, m.cell_diameter(c));
    return h;
}

/// Text format: header `NV NC NB`, NV lines `x y`, NC lines `i j k` (0-based,
/// CCW), NB lines `i j`. Normals are recomputed on load.
inline std::string save_mesh(const Mesh& m) {
    std::string out;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%d %d %d\n", m.num_vertices(), m.num_cells(),
                  static_cast<int>(m.boundary_edges.size()));
    out += buf;
    for (const auto& v : m.vertices) {
        std::snprintf(buf, sizeof buf, "%.17g %.17g\n", v.x(), v.y());
        out += buf;
    }
    for (const auto& c : m.cells) {
        std::snprintf(buf, sizeof buf, "%d %d %d\n", c[0], c[1], c[2]);
        out += buf;
    }
    for (const auto& b : m.boundary_edges) {
        std::snprintf(buf, sizeof buf, "%d %d\n", b.verts[0], b.verts[1]);
        out += buf;
    }
    return out;
}

inline Mesh load_mesh(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    const auto next_line = [&]() -> std::istringstream {
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                return std::istringstream(line);
        }
        throw parse_error("mesh file: unexpected end of input after line " +
                          std::to_string(lineno));
    };

    int nv = 0, nc = 0, nb = 0;
    {
        auto ls = next_line();
        if (!(ls >> nv >> nc >> nb) || nv < 3 || nc < 1 || nb < 3)
            throw parse_error("mesh file line " + std::to_string(lineno) +
                              ": bad header");
    }

    Mesh m;
    m.vertices.resize(nv);
    for (int i = 0; i < nv; ++i) {
        auto ls = next_line();
        if (!(ls >> m.vertices[i].x() >> m.vertices[i].y()))
            throw parse_error("mesh file line " + std::to_string(lineno) +
                              ": bad vertex");
    }
    m.cells.resize(nc);
    for (int i = 0; i < nc; ++i) {
        auto ls = next_line();
        if (!(ls >> m.cells[i][0] >> m.cells[i][1] >> m.cells[i][2]))
            throw parse_error("mesh file line " + std::to_string(lineno) +
                              ": bad cell");
        for (int k = 0; k < 3; ++k)
            if (m.cells[i][k] < 0 || m.cells[i][k] >= nv)
                throw parse_error("mesh file line " + std::to_string(lineno) +
                                  ": cell vertex index out of range");
    }
    std::vector<std::array<int, 2>> declared(nb);
    for (int i = 0; i < nb; ++i) {
        auto ls = next_line();
        if (!(ls >> declared[i][0] >> declared[i][1]))
            throw parse_error("mesh file line " + std::to_string(lineno) +
                              ": bad boundary edge");
    }

    m.finalize();

    if (static_cast<int>(m.boundary_edges.size()) != nb)
        throw invariant_violation("mesh file: declared boundary edge count " +
                                  std::to_string(nb) + " but mesh has " +
                                  std::to_string(m.boundary_edges.size()));
    for (const auto& d : declared) {
        const int e = m.edge_index(d[0], d[1]);
        bool found = false;
        for (const auto& b : m.boundary_edges)
            found = found || (m.edge_index(b.verts[0], b.verts[1]) == e);
        if (e < 0 || !found)
            throw invariant_violation("mesh file: declared boundary edge is not on the boundary");
    }
    return m;
}

} // namespace nvfem
