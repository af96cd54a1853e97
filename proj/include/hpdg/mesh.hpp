#pragma once

#include <algorithm>
#include <numbers>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "hpdg/core.hpp"

namespace hpdg {

enum class FaceKind { Interior, Boundary };

/// A flat axis-aligned mesh face with a fixed orientation.
///
/// The unit normal (nx,ny) is constant over the face and points out of
/// `ext_element`; on interior faces it points into `int_element`. Jumps are
/// signed accordingly: [phi] = phi|ext - phi|int on interior faces and
/// [phi] = phi|ext on boundary faces. Interior faces carry +e1 (vertical) or
/// +e2 (horizontal); boundary faces carry the outward normal of the domain.
struct FaceInfo {
    Point a, b;          // endpoints, b - a is along the tangent
    double nx = 0.0;
    double ny = 0.0;
    int ext_element = -1;
    int int_element = -1; // -1 on boundary faces
    double h_tilde = 0.0; // min of neighbor element diameters
    FaceKind kind = FaceKind::Interior;

    bool interior() const { return kind == FaceKind::Interior; }
    double length() const { return std::hypot(b.x - a.x, b.y - a.y); }
};

/// Uniform n x n Cartesian mesh of the unit square (0,1)^2.
///
/// Elements are indexed e = iy*n + ix with lower-left corner (ix/n, iy/n).
class Mesh {
  public:
    explicit Mesh(int n) : n_(n), h_(1.0 / n) {
        if (n < 1)
            throw std::invalid_argument("Mesh: subdivisions must be >= 1");
        build_faces();
    }

    int subdivisions() const { return n_; }
    double element_size() const { return h_; }
    int num_elements() const { return n_ * n_; }

    int element_index(int ix, int iy) const { return iy * n_ + ix; }
    int element_ix(int e) const { return e % n_; }
    int element_iy(int e) const { return e / n_; }

    ElementGeom element(int e) const {
        return {element_ix(e) * h_, element_iy(e) * h_, h_};
    }

    const std::vector<FaceInfo>& faces() const { return faces_; }

    int num_interior_faces() const { return interior_count_; }
    int num_boundary_faces() const {
        return static_cast<int>(faces_.size()) - interior_count_;
    }

  private:
    void build_faces() {
        faces_.reserve(2 * n_ * (n_ + 1));
        // Vertical faces x = i/n, one per row iy. Interior normals are +e1;
        // boundary normals point out of the domain.
        for (int i = 0; i <= n_; ++i) {
            for (int iy = 0; iy < n_; ++iy) {
                FaceInfo f;
                f.a = {i * h_, iy * h_};
                f.b = {i * h_, (iy + 1) * h_};
                f.h_tilde = h_ * std::numbers::sqrt2;
                if (i == 0) {
                    f.nx = -1.0;
                    f.ext_element = element_index(0, iy);
                    f.kind = FaceKind::Boundary;
                } else if (i == n_) {
                    f.nx = 1.0;
                    f.ext_element = element_index(n_ - 1, iy);
                    f.kind = FaceKind::Boundary;
                } else {
                    f.nx = 1.0;
                    f.ext_element = element_index(i - 1, iy);
                    f.int_element = element_index(i, iy);
                    f.kind = FaceKind::Interior;
                }
                faces_.push_back(f);
            }
        }
        // Horizontal faces y = j/n, one per column ix.
        for (int j = 0; j <= n_; ++j) {
            for (int ix = 0; ix < n_; ++ix) {
                FaceInfo f;
                f.a = {ix * h_, j * h_};
                f.b = {(ix + 1) * h_, j * h_};
                f.h_tilde = h_ * std::numbers::sqrt2;
                if (j == 0) {
                    f.ny = -1.0;
                    f.ext_element = element_index(ix, 0);
                    f.kind = FaceKind::Boundary;
                } else if (j == n_) {
                    f.ny = 1.0;
                    f.ext_element = element_index(ix, n_ - 1);
                    f.kind = FaceKind::Boundary;
                } else {
                    f.ny = 1.0;
                    f.ext_element = element_index(ix, j - 1);
                    f.int_element = element_index(ix, j);
                    f.kind = FaceKind::Interior;
                }
                faces_.push_back(f);
            }
        }
        interior_count_ = 0;
        for (const auto& f : faces_)
            if (f.interior())
                ++interior_count_;
    }

    int n_;
    double h_;
    std::vector<FaceInfo> faces_;
    int interior_count_ = 0;
};

inline Mesh build_uniform_mesh(int n) { return Mesh(n); }

/// Axis-aligned rectangle [x0,x1] x [y0,y1].
struct Rect {
    double x0, y0, x1, y1;
};

/// Requested subdomain decomposition: an sx x sy grid of rectangles
/// (quadrants by default), optionally extended by `delta` across interior
/// partition boundaries to form an overlapping decomposition.
struct SubdomainSpec {
    int sx = 2;
    int sy = 2;
    bool overlapping = false;
    double delta = 0.0;
};

struct SubdomainPartition {
    bool overlapping = false;
    double delta = 0.0;
    std::vector<Rect> regions;
    std::vector<std::vector<bool>> adjacency; // symmetric, zero diagonal

    int count() const { return static_cast<int>(regions.size()); }

    /// N_c: the maximum number of subdomains adjacent to any one subdomain.
    int max_adjacent() const {
        int nc = 0;
        for (const auto& row : adjacency) {
            int s = 0;
            for (bool v : row)
                s += v ? 1 : 0;
            nc = std::max(nc, s);
        }
        return nc;
    }
};

/// Nested fine mesh / coarse mesh / subdomain structure.
///
/// Every fine element lies inside exactly one coarse element (`parent`) and in
/// one or more subdomains (`owners`; a single one when nonoverlapping). The
/// coarse mesh is optional (coarse_n = 0 builds a hierarchy without one).
struct NestedHierarchy {
    Mesh fine;
    int coarse_n = 0; // 0: no coarse mesh
    std::vector<int> parent;
    SubdomainPartition subdomains;
    std::vector<std::vector<int>> owners;             // fine element -> subdomain ids
    std::vector<std::vector<int>> subdomain_elements; // subdomain -> fine elements

    bool has_coarse() const { return coarse_n > 0; }
    Mesh coarse_mesh() const {
        if (!has_coarse())
            throw std::logic_error("NestedHierarchy: no coarse mesh");
        return Mesh(coarse_n);
    }
};

namespace detail {

inline bool is_integer_multiple(double value, int n, double tol = 1e-9) {
    double scaled = value * n;
    return std::abs(scaled - std::round(scaled)) <= tol * n;
}

} // namespace detail

/// Builds the nested hierarchy used by the two-level Schwarz preconditioners.
///
/// Requirements: coarse_n divides fine_n (when a coarse mesh is requested),
/// subdomain boundaries lie on coarse mesh lines, and the overlap width is a
/// nonnegative multiple of the fine mesh size.
inline NestedHierarchy build_hierarchy(int fine_n, int coarse_n,
                                       const SubdomainSpec& spec) {
    if (fine_n < 1)
        throw std::invalid_argument("build_hierarchy: fine_n must be >= 1");
    if (coarse_n < 0)
        throw std::invalid_argument("build_hierarchy: coarse_n must be >= 0");
    if (coarse_n > 0 && fine_n % coarse_n != 0)
        throw std::invalid_argument(
            "build_hierarchy: coarse mesh not nested (coarse_n must divide fine_n)");
    if (spec.sx < 1 || spec.sy < 1)
        throw std::invalid_argument("build_hierarchy: subdomain grid must be >= 1x1");
    if (fine_n % spec.sx != 0 || fine_n % spec.sy != 0)
        throw std::invalid_argument(
            "build_hierarchy: subdomain boundaries must lie on fine mesh lines");
    if (coarse_n > 0 && (coarse_n % spec.sx != 0 || coarse_n % spec.sy != 0))
        throw std::invalid_argument(
            "build_hierarchy: subdomain boundaries cut coarse elements");
    if (spec.overlapping) {
        if (spec.delta <= 0.0)
            throw std::invalid_argument("build_hierarchy: overlap width must be positive");
        if (!detail::is_integer_multiple(spec.delta, fine_n))
            throw std::invalid_argument(
                "build_hierarchy: overlap width must be a multiple of the fine mesh size");
    }

    NestedHierarchy hier{Mesh(fine_n)};
    hier.coarse_n = coarse_n;

    const int ne = hier.fine.num_elements();
    if (coarse_n > 0) {
        hier.parent.resize(ne);
        const int ratio = fine_n / coarse_n;
        for (int e = 0; e < ne; ++e) {
            int cx = hier.fine.element_ix(e) / ratio;
            int cy = hier.fine.element_iy(e) / ratio;
            hier.parent[e] = cy * coarse_n + cx;
        }
    }

    SubdomainPartition& part = hier.subdomains;
    part.overlapping = spec.overlapping;
    part.delta = spec.overlapping ? spec.delta : 0.0;
    const double wx = 1.0 / spec.sx;
    const double wy = 1.0 / spec.sy;
    for (int jy = 0; jy < spec.sy; ++jy) {
        for (int jx = 0; jx < spec.sx; ++jx) {
            Rect r{jx * wx, jy * wy, (jx + 1) * wx, (jy + 1) * wy};
            if (spec.overlapping) {
                // extend across interior partition boundaries only
                if (jx > 0)
                    r.x0 -= spec.delta;
                if (jx + 1 < spec.sx)
                    r.x1 += spec.delta;
                if (jy > 0)
                    r.y0 -= spec.delta;
                if (jy + 1 < spec.sy)
                    r.y1 += spec.delta;
                r.x0 = std::max(r.x0, 0.0);
                r.y0 = std::max(r.y0, 0.0);
                r.x1 = std::min(r.x1, 1.0);
                r.y1 = std::min(r.y1, 1.0);
            }
            part.regions.push_back(r);
        }
    }

    const int ns = part.count();
    part.adjacency.assign(ns, std::vector<bool>(ns, false));
    const double tol = 1e-12;
    for (int i = 0; i < ns; ++i) {
        for (int j = 0; j < ns; ++j) {
            if (i == j)
                continue;
            const Rect& a = part.regions[i];
            const Rect& b = part.regions[j];
            bool touch = a.x0 <= b.x1 + tol && b.x0 <= a.x1 + tol &&
                         a.y0 <= b.y1 + tol && b.y0 <= a.y1 + tol;
            part.adjacency[i][j] = touch;
        }
    }

    // Owner maps. Element index ranges are computed exactly in grid units.
    hier.owners.assign(ne, {});
    hier.subdomain_elements.assign(ns, {});
    for (int s = 0; s < ns; ++s) {
        const Rect& r = part.regions[s];
        int lo_x = static_cast<int>(std::lround(r.x0 * fine_n));
        int hi_x = static_cast<int>(std::lround(r.x1 * fine_n));
        int lo_y = static_cast<int>(std::lround(r.y0 * fine_n));
        int hi_y = static_cast<int>(std::lround(r.y1 * fine_n));
        for (int iy = lo_y; iy < hi_y; ++iy) {
            for (int ix = lo_x; ix < hi_x; ++ix) {
                int e = hier.fine.element_index(ix, iy);
                hier.owners[e].push_back(s);
                hier.subdomain_elements[s].push_back(e);
            }
        }
    }
    for (int e = 0; e < ne; ++e) {
        if (hier.owners[e].empty())
            throw std::logic_error("build_hierarchy: element not covered by any subdomain");
        if (!spec.overlapping && hier.owners[e].size() != 1)
            throw std::logic_error(
                "build_hierarchy: nonoverlapping partition assigned an element twice");
    }

    return hier;
}

} // namespace hpdg
