#ifndef WRML_FIELD_IO_HPP
#define WRML_FIELD_IO_HPP

#include <Eigen/Dense>
#include <map>
#include <string>

#include "wrml/grid.hpp"

namespace wrml {

// Binary field file: 16-byte header (magic "FLD1", uint32 nx_plus1,
// uint32 ny_plus1, uint32 reserved), then nx_plus1*ny_plus1 little-endian
// float64 values in row-major node order. A text sidecar "<path>.meta"
// carries key=value metadata lines (spacing, kernel parameters, seeds).
void write_field(const std::string& path, const Grid2D& grid,
                 const Eigen::VectorXd& values,
                 const std::map<std::string, std::string>& meta = {});

struct FieldFile {
    int nx_plus1 = 0;
    int ny_plus1 = 0;
    Eigen::VectorXd values;
    std::map<std::string, std::string> meta;
};

FieldFile read_field(const std::string& path);

} // namespace wrml

#endif
