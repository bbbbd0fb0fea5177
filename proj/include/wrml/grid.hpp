#ifndef WRML_GRID_HPP
#define WRML_GRID_HPP

#include <cstdint>

#include "wrml/errors.hpp"

namespace wrml {

// Uniform 2D lattice. Node (i,j) sits at (i*hx, j*hy), 0 <= i < nx_plus1,
// 0 <= j < ny_plus1. Flattened index is j*nx_plus1 + i (x fastest).
// The flow solver reuses the same lattice as cell centers of uniform cells,
// so a field on the grid doubles as a cell-centered property array.
struct Grid2D {
    int nx_plus1 = 0;
    int ny_plus1 = 0;
    double hx = 0.0;
    double hy = 0.0;

    Grid2D() = default;
    Grid2D(int nx_plus1, int ny_plus1, double hx, double hy)
        : nx_plus1(nx_plus1), ny_plus1(ny_plus1), hx(hx), hy(hy) {
        if (nx_plus1 < 1 || ny_plus1 < 1)
            throw EmptyGrid("grid must have at least one node per direction");
        if (!(hx > 0.0) || !(hy > 0.0))
            throw ConfigError("grid spacing must be positive");
    }

    int size() const { return nx_plus1 * ny_plus1; }
    int index(int i, int j) const { return j * nx_plus1 + i; }
    double x(int i) const { return i * hx; }
    double y(int j) const { return j * hy; }

    bool operator==(const Grid2D& o) const {
        return nx_plus1 == o.nx_plus1 && ny_plus1 == o.ny_plus1 &&
               hx == o.hx && hy == o.hy;
    }
};

} // namespace wrml

#endif
