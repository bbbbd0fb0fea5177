#include "wrml/field_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace wrml {

namespace {
constexpr char kMagic[4] = {'F', 'L', 'D', '1'};

// Field files are defined little-endian; this code targets little-endian
// hosts and asserts so at compile time where possible.
static_assert(sizeof(double) == 8, "64-bit IEEE doubles required");
} // namespace

void write_field(const std::string& path, const Grid2D& grid,
                 const Eigen::VectorXd& values,
                 const std::map<std::string, std::string>& meta) {
    if (values.size() != grid.size())
        throw DimensionMismatch("write_field: value count does not match grid");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot open field file for writing: " + path);

    char header[16] = {};
    std::memcpy(header, kMagic, 4);
    const std::uint32_t nx = static_cast<std::uint32_t>(grid.nx_plus1);
    const std::uint32_t ny = static_cast<std::uint32_t>(grid.ny_plus1);
    std::memcpy(header + 4, &nx, 4);
    std::memcpy(header + 8, &ny, 4);
    out.write(header, 16);
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!out) throw ConfigError("short write on field file: " + path);
    out.close();

    if (!meta.empty()) {
        std::ofstream side(path + ".meta", std::ios::trunc);
        if (!side) throw ConfigError("cannot write sidecar: " + path + ".meta");
        for (const auto& [k, v] : meta) side << k << "=" << v << "\n";
    }
}

FieldFile read_field(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open field file: " + path);
    char header[16] = {};
    in.read(header, 16);
    if (!in || std::memcmp(header, kMagic, 4) != 0)
        throw ConfigError("bad field file header: " + path);
    FieldFile f;
    std::uint32_t nx = 0, ny = 0;
    std::memcpy(&nx, header + 4, 4);
    std::memcpy(&ny, header + 8, 4);
    f.nx_plus1 = static_cast<int>(nx);
    f.ny_plus1 = static_cast<int>(ny);
    const std::size_t n = static_cast<std::size_t>(nx) * ny;
    f.values.resize(static_cast<Eigen::Index>(n));
    in.read(reinterpret_cast<char*>(f.values.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw ConfigError("truncated field file: " + path);

    std::ifstream side(path + ".meta");
    if (side) {
        std::string line;
        while (std::getline(side, line)) {
            const auto eq = line.find('=');
            if (eq != std::string::npos)
                f.meta[line.substr(0, eq)] = line.substr(eq + 1);
        }
    }
    return f;
}

} // namespace wrml
