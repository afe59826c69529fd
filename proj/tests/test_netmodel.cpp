#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "appfkit/netmodel.hpp"
#include "support/oracles.hpp"

using namespace appfkit;

namespace {

Eigen::MatrixXcd dense(const SparseComplex& s) { return Eigen::MatrixXcd(s); }

NetworkBuilder two_bus_builder() {
    std::vector<LineRecord> lines{{0, 1, Complex(1.0, -10.0)}};
    NetworkBuilder b;
    b.n_total = 2;
    b.ybus_full = build_ybus(lines, ComplexVector(), 2);
    b.substation_slots = {0};
    b.substation_voltages.resize(1);
    b.substation_voltages(0) = Complex(1.0, 0.0);
    b.bus_base_kv = {7.2, 7.2};
    b.loads.emplace_back(1, -0.1, -0.05);
    return b;
}

} // namespace

TEST_CASE("build_ybus stamps a single edge") {
    std::vector<LineRecord> lines{{0, 1, Complex(1.0, -10.0)}};
    const auto y = build_ybus(lines, ComplexVector(), 2);
    const auto d = dense(y);
    CHECK(d(0, 0) == Complex(1.0, -10.0));
    CHECK(d(1, 1) == Complex(1.0, -10.0));
    CHECK(d(0, 1) == Complex(-1.0, 10.0));
    CHECK(d(1, 0) == Complex(-1.0, 10.0));
}

TEST_CASE("build_ybus with no lines is the shunt diagonal") {
    ComplexVector sh(2);
    sh << Complex(0.0, 0.1), Complex(0.0, 0.2);
    const auto d = dense(build_ybus({}, sh, 2));
    CHECK(d(0, 0) == Complex(0.0, 0.1));
    CHECK(d(1, 1) == Complex(0.0, 0.2));
    CHECK(d(0, 1) == Complex(0.0, 0.0));
}

TEST_CASE("build_ybus 3-node path matches the incidence-matrix product") {
    std::vector<LineRecord> lines{{0, 1, Complex(2.0, -20.0)}, {1, 2, Complex(1.0, -10.0)}};
    const auto d = dense(build_ybus(lines, ComplexVector(), 3));
    CHECK(d(1, 1) == Complex(3.0, -30.0));

    // explicit E^T Y_l E with the signed incidence matrix
    Eigen::MatrixXd e(2, 3);
    e << 1, -1, 0, 0, 1, -1;
    Eigen::MatrixXcd yl = Eigen::MatrixXcd::Zero(2, 2);
    yl(0, 0) = Complex(2.0, -20.0);
    yl(1, 1) = Complex(1.0, -10.0);
    const Eigen::MatrixXcd ref = e.transpose().cast<Complex>() * yl * e.cast<Complex>();
    CHECK((d - ref).cwiseAbs().maxCoeff() <= 1e-15);

    // zero-shunt row sums vanish
    const Eigen::VectorXcd rs = d.rowwise().sum();
    CHECK(rs.cwiseAbs().maxCoeff() < 1e-12 * d.cwiseAbs().maxCoeff());
}

TEST_CASE("build_ybus zero-shunt row sums vanish for random line lists") {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> uni(0.1, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 5 + static_cast<int>(uni(rng) * 20);
        std::vector<LineRecord> lines;
        for (int b = 1; b < n; ++b) {
            const int p = static_cast<int>(uni(rng) * b) % b;
            lines.push_back({p, b, Complex(uni(rng), -10.0 * uni(rng))});
        }
        const auto d = dense(build_ybus(lines, ComplexVector(), n));
        const double scale = d.cwiseAbs().maxCoeff();
        CHECK(d.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-12 * scale);
        CHECK((d - d.transpose()).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("build_ybus rejects bad edges") {
    CHECK_THROWS_AS(build_ybus({{0, 0, Complex(1.0, 0.0)}}, ComplexVector(), 2),
                    ValidationError);
    CHECK_THROWS_AS(build_ybus({{0, 1, Complex(std::nan(""), 0.0)}}, ComplexVector(), 2),
                    ValidationError);
    CHECK_THROWS_AS(build_ybus({{0, 5, Complex(1.0, 0.0)}}, ComplexVector(), 2), IndexError);
}

TEST_CASE("reduce_network deletes the substation row and column") {
    const auto net = reduce_network(two_bus_builder());
    CHECK(net.n() == 1);
    CHECK(dense(net.ybus_reduced())(0, 0) == Complex(1.0, -10.0));
    CHECK(dense(net.sub_coupling())(0, 0) == Complex(-1.0, 10.0));
    CHECK(net.to_full(0) == 1);
    CHECK(net.to_reduced(0) == -1);
}

TEST_CASE("reduce_network keeps the trailing block of a path") {
    std::vector<LineRecord> lines{{0, 1, Complex(2.0, -20.0)}, {1, 2, Complex(1.0, -10.0)}};
    NetworkBuilder b;
    b.n_total = 3;
    b.ybus_full = build_ybus(lines, ComplexVector(), 3);
    b.substation_slots = {0};
    b.substation_voltages.resize(1);
    b.substation_voltages(0) = Complex(1.0, 0.0);
    const auto net = reduce_network(std::move(b));
    CHECK(net.n() == 2);
    const auto full = dense(net.ybus_full());
    const auto red = dense(net.ybus_reduced());
    CHECK((red - full.bottomRightCorner(2, 2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("three-phase substation reduction") {
    const auto net = load_network(oracles::fixture("net6_3ph.json"), NetworkFormat::json);
    CHECK(net.n_total() == 6);
    CHECK(net.n() == 3);
    CHECK(net.n_sub() == 3);
    CHECK(net.sub_coupling().rows() == 3);
    CHECK(net.sub_coupling().cols() == 3);

    // dense submatrix extraction oracle
    const auto full = dense(net.ybus_full());
    CHECK((dense(net.ybus_reduced()) - full.bottomRightCorner(3, 3)).cwiseAbs().maxCoeff() ==
          0.0);
    CHECK((dense(net.sub_coupling()) - full.bottomLeftCorner(3, 3)).cwiseAbs().maxCoeff() ==
          0.0);
    CHECK(net.phase_labels()[3] == "a");
}

TEST_CASE("reduction then re-embedding reproduces the full matrix") {
    std::mt19937_64 rng(7);
    const auto net = oracles::random_network(12, rng, true);
    const auto full = dense(net.ybus_full());
    Eigen::MatrixXcd rebuilt = Eigen::MatrixXcd::Zero(net.n_total(), net.n_total());
    for (int i = 0; i < net.n(); ++i)
        for (int j = 0; j < net.n(); ++j)
            rebuilt(net.to_full(i), net.to_full(j)) = dense(net.ybus_reduced())(i, j);
    for (int i = 0; i < net.n(); ++i)
        for (int k = 0; k < net.n_sub(); ++k) {
            rebuilt(net.to_full(i), net.substation_slots()[k]) =
                dense(net.sub_coupling())(i, k);
            rebuilt(net.substation_slots()[k], net.to_full(i)) =
                dense(net.sub_coupling())(i, k);
        }
    for (int a = 0; a < net.n_sub(); ++a)
        for (int b = 0; b < net.n_sub(); ++b)
            rebuilt(net.substation_slots()[a], net.substation_slots()[b]) =
                full(net.substation_slots()[a], net.substation_slots()[b]);
    CHECK((rebuilt - full).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("reduce_network validation errors") {
    auto b = two_bus_builder();
    b.substation_slots.clear();
    b.substation_voltages.resize(0);
    CHECK_THROWS_AS(reduce_network(std::move(b)), ValidationError);

    auto b2 = two_bus_builder();
    b2.substation_voltages.resize(0);  // slot without a phasor
    CHECK_THROWS_AS(reduce_network(std::move(b2)), ValidationError);

    auto b3 = two_bus_builder();
    b3.loads = {{0, -0.1, 0.0}};  // load on the substation
    CHECK_THROWS_AS(reduce_network(std::move(b3)), ValidationError);

    // isolated bus: zero row after reduction
    NetworkBuilder b4;
    b4.n_total = 3;
    b4.ybus_full = build_ybus({{0, 1, Complex(1.0, -10.0)}}, ComplexVector(), 3);
    b4.substation_slots = {0};
    b4.substation_voltages.resize(1);
    b4.substation_voltages(0) = Complex(1.0, 0.0);
    CHECK_THROWS_AS(reduce_network(std::move(b4)), ValidationError);
}

TEST_CASE("load_network reads the shipped 2-bus fixture") {
    const auto net = load_network(oracles::fixture("2bus.json"), NetworkFormat::json);
    CHECK(net.n() == 1);
    CHECK(net.nominal_loads().p(0) == -0.1);
    CHECK(net.nominal_loads().q(0) == -0.05);
    CHECK(net.base_power_kw() == 100.0);
}

TEST_CASE("csv and json ingestion agree") {
    const auto a = load_network(oracles::fixture("feeder3.json"), NetworkFormat::json);
    const auto b = load_network(oracles::fixture("feeder3_ybus.csv"), NetworkFormat::ybus_csv);
    CHECK((dense(a.ybus_full()) - dense(b.ybus_full())).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.nominal_loads().p - b.nominal_loads().p).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.nominal_loads().q - b.nominal_loads().q).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("csv loader falls back to a plain loads.csv sibling") {
    namespace fs = std::filesystem;
    const fs::path dir = "/tmp/appfkit_csvdir";
    fs::create_directories(dir);
    fs::copy_file(oracles::fixture("feeder3_ybus.csv"), dir / "net.csv",
                  fs::copy_options::overwrite_existing);
    fs::copy_file(oracles::fixture("feeder3_ybus_loads.csv"), dir / "loads.csv",
                  fs::copy_options::overwrite_existing);
    const auto net = load_network((dir / "net.csv").string(), NetworkFormat::ybus_csv);
    CHECK(net.nominal_loads().p(0) == -0.05);
    CHECK(net.nominal_loads().q(1) == -0.01);
}

TEST_CASE("asymmetric Y-bus is rejected with a distinct error") {
    const std::string path = "/tmp/appfkit_asym.json";
    {
        std::ofstream f(path);
        f << R"({
          "n_total": 2, "base_power_kw": 100.0,
          "substation": {"slots": [0], "voltages": [[1.0, 0.0]]},
          "ybus": {"triplets": [[0,0,1.0,-10.0],[0,1,-1.0,10.0],
                                 [1,0,-1.001,10.0],[1,1,1.0,-10.0]]},
          "loads": [], "bus_base_kv": [7.2, 7.2]
        })";
    }
    CHECK_THROWS_AS(load_network(path, NetworkFormat::json), AsymmetryError);
}

TEST_CASE("schema violations are named distinctly from io errors") {
    CHECK_THROWS_AS(load_network("/nonexistent/net.json", NetworkFormat::json), IoError);
    const std::string path = "/tmp/appfkit_badschema.json";
    {
        std::ofstream f(path);
        f << "{\"n_total\": 2}";
    }
    CHECK_THROWS_AS(load_network(path, NetworkFormat::json), SchemaError);
}

TEST_CASE("out-of-range triplet index is an IndexError") {
    const std::string path = "/tmp/appfkit_badindex.json";
    {
        std::ofstream f(path);
        f << R"({
          "n_total": 2, "base_power_kw": 100.0,
          "substation": {"slots": [0], "voltages": [[1.0, 0.0]]},
          "ybus": {"triplets": [[0,7,1.0,-10.0]]},
          "loads": [], "bus_base_kv": [7.2, 7.2]
        })";
    }
    CHECK_THROWS_AS(load_network(path, NetworkFormat::json), IndexError);
}

TEST_CASE("save then load round-trips bitwise") {
    std::mt19937_64 rng(99);
    const auto net = oracles::random_network(15, rng, true);
    const std::string path = "/tmp/appfkit_roundtrip.json";
    save_network(net, path);
    const auto back = load_network(path, NetworkFormat::json);

    REQUIRE(back.n_total() == net.n_total());
    const auto a = dense(net.ybus_full());
    const auto b = dense(back.ybus_full());
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    CHECK((net.nominal_loads().p - back.nominal_loads().p).cwiseAbs().maxCoeff() == 0.0);

    // second generation must be byte-identical
    const std::string path2 = "/tmp/appfkit_roundtrip2.json";
    save_network(back, path2);
    std::ifstream f1(path), f2(path2);
    const std::string s1((std::istreambuf_iterator<char>(f1)),
                         std::istreambuf_iterator<char>());
    const std::string s2((std::istreambuf_iterator<char>(f2)),
                         std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
}

TEST_CASE("phase block stamping couples phases symmetrically") {
    PhaseBlockRecord blk;
    blk.from_slots = {0, 1};
    blk.to_slots = {2, 3};
    blk.block.resize(2, 2);
    blk.block << Complex(4.0, -12.0), Complex(-1.0, 3.0), Complex(-1.0, 3.0),
        Complex(4.0, -12.0);
    const auto d = dense(build_ybus({}, {blk}, ComplexVector(), 4));
    CHECK(d(0, 0) == Complex(4.0, -12.0));
    CHECK(d(0, 2) == Complex(-4.0, 12.0));
    CHECK(d(0, 3) == Complex(1.0, -3.0));
    CHECK((d - d.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(d.rowwise().sum().cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("far-from-unity substation voltage produces a warning") {
    auto b = two_bus_builder();
    b.substation_voltages(0) = Complex(0.5, 0.0);
    const auto net = reduce_network(std::move(b));
    CHECK(!net.warnings().empty());
}
