// Copyright (c) 2026 the ppfit authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PPFIT_GEOMETRY_HPP
#define PPFIT_GEOMETRY_HPP

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "ppfit/errors.hpp"

namespace ppfit {

// Rectangular observation window. Boundary points count as inside
// (closed-window convention, so edge fixations are never dropped).
struct ObservationWindow {
    double x_min = 0.0;
    double x_max = 1.0;
    double y_min = 0.0;
    double y_max = 1.0;

    ObservationWindow() = default;
    ObservationWindow(double x0, double x1, double y0, double y1)
        : x_min(x0), x_max(x1), y_min(y0), y_max(y1) {
        if (!(x_min < x_max) || !(y_min < y_max))
            throw ValidationError("ObservationWindow: require x_min < x_max and y_min < y_max");
    }

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }

    bool contains(double x, double y) const {
        return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
    }

    bool operator==(const ObservationWindow& o) const {
        return x_min == o.x_min && x_max == o.x_max && y_min == o.y_min && y_max == o.y_max;
    }
};

struct Point {
    double x = 0.0;
    double y = 0.0;
};

// A finite set of 2-D points in a window. Order is preserved and duplicates
// are allowed (two fixations may coincide).
struct PointPattern {
    std::vector<Point> points;
    std::string group_id;

    PointPattern() = default;
    explicit PointPattern(std::vector<Point> pts, std::string gid = "")
        : points(std::move(pts)), group_id(std::move(gid)) {}

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }

    void check_in_window(const ObservationWindow& win) const {
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (!win.contains(points[i].x, points[i].y))
                throw OutOfDomainError("point " + std::to_string(i) + " of pattern '" +
                                       group_id + "' lies outside the window");
        }
    }
};

// Raster of real values on a regular nx x ny lattice spanning the window.
// Nodes include the window boundary: x_i = x_min + i*dx with dx = width/(nx-1).
// Evaluation between nodes is bilinear, hence exact at nodes and exact
// everywhere for fields affine in (x, y).
class CovariateField {
public:
    CovariateField() = default;

    CovariateField(const ObservationWindow& win, int nx, int ny, std::vector<double> values)
        : win_(win), nx_(nx), ny_(ny), values_(std::move(values)) {
        if (nx_ < 2 || ny_ < 2)
            throw ValidationError("CovariateField: nx and ny must be >= 2");
        if (values_.size() != static_cast<std::size_t>(nx_) * ny_)
            throw ValidationError("CovariateField: values size does not match nx*ny");
        for (double v : values_)
            if (!std::isfinite(v))
                throw NumericError("CovariateField: non-finite grid value");
    }

    static CovariateField from_function(const ObservationWindow& win, int nx, int ny,
                                        const std::function<double(double, double)>& f) {
        std::vector<double> vals(static_cast<std::size_t>(nx) * ny);
        const double dx = win.width() / (nx - 1);
        const double dy = win.height() / (ny - 1);
        for (int iy = 0; iy < ny; ++iy)
            for (int ix = 0; ix < nx; ++ix)
                vals[static_cast<std::size_t>(iy) * nx + ix] =
                    f(win.x_min + ix * dx, win.y_min + iy * dy);
        return CovariateField(win, nx, ny, std::move(vals));
    }

    static CovariateField constant(const ObservationWindow& win, int nx, int ny, double c) {
        return CovariateField(win, nx, ny,
                              std::vector<double>(static_cast<std::size_t>(nx) * ny, c));
    }

    const ObservationWindow& window() const { return win_; }
    int nx() const { return nx_; }
    int ny() const { return ny_; }
    std::size_t node_count() const { return values_.size(); }
    double dx() const { return win_.width() / (nx_ - 1); }
    double dy() const { return win_.height() / (ny_ - 1); }

    double node_x(int ix) const { return win_.x_min + ix * dx(); }
    double node_y(int iy) const { return win_.y_min + iy * dy(); }

    double at(int ix, int iy) const { return values_[static_cast<std::size_t>(iy) * nx_ + ix]; }
    double& at(int ix, int iy) { return values_[static_cast<std::size_t>(iy) * nx_ + ix]; }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }

    // Bilinear interpolation; throws for points outside the window.
    double operator()(double x, double y) const {
        if (!win_.contains(x, y))
            throw OutOfDomainError("eval_field: point (" + std::to_string(x) + ", " +
                                   std::to_string(y) + ") outside window");
        const double u = (x - win_.x_min) / dx();
        const double v = (y - win_.y_min) / dy();
        int ix0 = std::clamp(static_cast<int>(std::floor(u)), 0, nx_ - 2);
        int iy0 = std::clamp(static_cast<int>(std::floor(v)), 0, ny_ - 2);
        const double fx = u - ix0;
        const double fy = v - iy0;
        const double v00 = at(ix0, iy0), v10 = at(ix0 + 1, iy0);
        const double v01 = at(ix0, iy0 + 1), v11 = at(ix0 + 1, iy0 + 1);
        // nested lerp: exact at nodes and bit-exact for constant fields
        return std::lerp(std::lerp(v00, v10, fx), std::lerp(v01, v11, fx), fy);
    }

    // Interpolation weights a_j of a point onto its four surrounding nodes,
    // as (flat node index, weight) pairs. Weights sum to 1.
    std::array<std::pair<std::size_t, double>, 4> interp_weights(double x, double y) const {
        if (!win_.contains(x, y))
            throw OutOfDomainError("interp_weights: point outside window");
        const double u = (x - win_.x_min) / dx();
        const double v = (y - win_.y_min) / dy();
        int ix0 = std::clamp(static_cast<int>(std::floor(u)), 0, nx_ - 2);
        int iy0 = std::clamp(static_cast<int>(std::floor(v)), 0, ny_ - 2);
        const double fx = u - ix0;
        const double fy = v - iy0;
        auto idx = [&](int ix, int iy) { return static_cast<std::size_t>(iy) * nx_ + ix; };
        return {std::make_pair(idx(ix0, iy0), (1 - fx) * (1 - fy)),
                std::make_pair(idx(ix0 + 1, iy0), fx * (1 - fy)),
                std::make_pair(idx(ix0, iy0 + 1), (1 - fx) * fy),
                std::make_pair(idx(ix0 + 1, iy0 + 1), fx * fy)};
    }

    double min_value() const { return *std::min_element(values_.begin(), values_.end()); }
    double max_value() const { return *std::max_element(values_.begin(), values_.end()); }

private:
    ObservationWindow win_;
    int nx_ = 0;
    int ny_ = 0;
    std::vector<double> values_;
};

// Quadrature/binning structure over the same boundary-inclusive lattice as
// CovariateField. Each node owns the cell of nearest points; interior cells
// have area dx*dy, edge cells half that, corner cells a quarter, so the
// weights sum to the window area exactly and the cells partition the window.
class GridDiscretization {
public:
    GridDiscretization() = default;
    GridDiscretization(const ObservationWindow& win, int nx, int ny)
        : win_(win), nx_(nx), ny_(ny) {
        if (nx_ < 2 || ny_ < 2)
            throw ValidationError("GridDiscretization: nx and ny must be >= 2");
    }

    const ObservationWindow& window() const { return win_; }
    int nx() const { return nx_; }
    int ny() const { return ny_; }
    std::size_t node_count() const { return static_cast<std::size_t>(nx_) * ny_; }
    double dx() const { return win_.width() / (nx_ - 1); }
    double dy() const { return win_.height() / (ny_ - 1); }

    double node_x(std::size_t j) const { return win_.x_min + (j % nx_) * dx(); }
    double node_y(std::size_t j) const { return win_.y_min + (j / nx_) * dy(); }

    double weight(std::size_t j) const {
        const int ix = static_cast<int>(j % nx_);
        const int iy = static_cast<int>(j / nx_);
        const double wx = (ix == 0 || ix == nx_ - 1) ? 0.5 : 1.0;
        const double wy = (iy == 0 || iy == ny_ - 1) ? 0.5 : 1.0;
        return wx * wy * dx() * dy();
    }

    // Flat index of the node whose cell contains (x, y).
    std::size_t bin_index(double x, double y) const {
        if (!win_.contains(x, y))
            throw OutOfDomainError("bin_index: point outside window");
        int ix = std::clamp(static_cast<int>(std::lround((x - win_.x_min) / dx())), 0, nx_ - 1);
        int iy = std::clamp(static_cast<int>(std::lround((y - win_.y_min) / dy())), 0, ny_ - 1);
        return static_cast<std::size_t>(iy) * nx_ + ix;
    }

    bool matches(const CovariateField& f) const {
        return f.window() == win_ && f.nx() == nx_ && f.ny() == ny_;
    }

    bool operator==(const GridDiscretization& o) const {
        return win_ == o.win_ && nx_ == o.nx_ && ny_ == o.ny_;
    }

private:
    ObservationWindow win_;
    int nx_ = 0;
    int ny_ = 0;
};

inline GridDiscretization discretization_of(const CovariateField& f) {
    return GridDiscretization(f.window(), f.nx(), f.ny());
}

inline double eval_field(const CovariateField& field, double x, double y) {
    return field(x, y);
}

// Quadrature of transform(field) over the window: sum_j w_j * t(field(x_j)).
inline double integrate_field(const CovariateField& field,
                              const std::function<double(double)>& transform) {
    const GridDiscretization grid = discretization_of(field);
    double acc = 0.0;
    for (std::size_t j = 0; j < grid.node_count(); ++j) {
        const double t = transform(field.values()[j]);
        if (!std::isfinite(t))
            throw NumericError("integrate_field: non-finite transform output at node " +
                               std::to_string(j));
        acc += grid.weight(j) * t;
    }
    return acc;
}

inline double integrate_field(const CovariateField& field) {
    return integrate_field(field, [](double v) { return v; });
}

inline int count_in_region(const PointPattern& pattern,
                           const std::function<bool(double, double)>& region) {
    int n = 0;
    for (const Point& p : pattern.points)
        if (region(p.x, p.y)) ++n;
    return n;
}

// Euclidean distance to an anchor, divided by the window width so a distance
// of 1 spans the screen horizontally.
inline CovariateField distance_covariate(Point anchor, const ObservationWindow& win,
                                         int nx, int ny) {
    if (!std::isfinite(anchor.x) || !std::isfinite(anchor.y))
        throw ValidationError("distance_covariate: non-finite anchor");
    const double w = win.width();
    return CovariateField::from_function(win, nx, ny, [&](double x, double y) {
        return std::hypot(x - anchor.x, y - anchor.y) / w;
    });
}

// Affine rescaling of a field to the range [0, 1].
inline CovariateField minmax_scale(const CovariateField& field) {
    const double lo = field.min_value();
    const double hi = field.max_value();
    if (!(hi > lo))
        throw DegenerateCovariateError("minmax_scale: constant field");
    std::vector<double> vals(field.values());
    for (double& v : vals) v = (v - lo) / (hi - lo);
    return CovariateField(field.window(), field.nx(), field.ny(), std::move(vals));
}

namespace detail {

// Number of times an exponent had to be clamped to the overflow guard.
inline std::atomic<std::uint64_t>& exp_clamp_count() {
    static std::atomic<std::uint64_t> count{0};
    return count;
}

}  // namespace detail

// exp with the argument clamped at 700 (doubles overflow near 709). Clamping
// is counted, never silent: callers can report detail::exp_clamp_count().
inline double safe_exp(double v) {
    if (v > 700.0) {
        detail::exp_clamp_count().fetch_add(1, std::memory_order_relaxed);
        v = 700.0;
    }
    return std::exp(v);
}

}  // namespace ppfit

#endif  // PPFIT_GEOMETRY_HPP
