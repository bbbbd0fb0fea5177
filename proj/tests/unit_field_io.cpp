#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "wrml/errors.hpp"
#include "wrml/field_io.hpp"

using namespace wrml;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("field files round-trip bit exactly") {
    Grid2D g(5, 3, 0.25, 0.5);
    Eigen::VectorXd v(g.size());
    std::mt19937_64 rng(31);
    std::normal_distribution<double> gauss;
    for (int i = 0; i < v.size(); ++i) v[i] = gauss(rng);
    v[0] = 0.0;
    v[1] = -0.0;
    v[2] = 1e-308;

    std::string path = temp_path("wrml_field_roundtrip.fld");
    write_field(path, g, v, {{"transform", "monotonic"}, {"note", "round trip"}});
    FieldFile f = read_field(path);
    CHECK(f.nx_plus1 == 5);
    CHECK(f.ny_plus1 == 3);
    REQUIRE(f.values.size() == v.size());
    for (int i = 0; i < v.size(); ++i) CHECK(f.values[i] == v[i]);
    CHECK(f.meta.at("transform") == "monotonic");
    CHECK(f.meta.at("note") == "round trip");
    std::remove(path.c_str());
    std::remove((path + ".meta").c_str());
}

TEST_CASE("missing or corrupt files are rejected") {
    CHECK_THROWS(read_field(temp_path("wrml_not_there.fld")));
    std::string path = temp_path("wrml_bad_magic.fld");
    {
        FILE* fp = std::fopen(path.c_str(), "wb");
        REQUIRE(fp);
        std::fwrite("JUNKJUNKJUNKJUNK", 1, 16, fp);
        std::fclose(fp);
    }
    CHECK_THROWS(read_field(path));
    std::remove(path.c_str());
}

TEST_CASE("size mismatch between grid and values is rejected") {
    Grid2D g(3, 3, 0.1, 0.1);
    Eigen::VectorXd v(5);
    v.setZero();
    CHECK_THROWS_AS(write_field(temp_path("wrml_mismatch.fld"), g, v, {}),
                    DimensionMismatch);
}
