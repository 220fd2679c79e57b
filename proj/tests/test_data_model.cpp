#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "endiv/dataset.hpp"
#include "endiv/normal.hpp"
#include "endiv/rng.hpp"

using namespace endiv;

namespace {

std::string csv_y_x1_z1_z2(int rows)
{
    std::ostringstream s;
    s << "y,x1,z1,z2\n";
    for (int i = 0; i < rows; ++i)
        s << 0.5 * i << "," << i - 3 << "," << (i % 3) << "," << 1.25 * i << "\n";
    return s.str();
}

Dataset random_dataset(Index n, Index p, Index K, std::uint64_t seed)
{
    Dataset d;
    d.y.resize(n);
    d.X.resize(n, p);
    d.Z.resize(n, K);
    Stream(seed, 0).fill_normal(d.y);
    Stream(seed, 1).fill_normal_rows(d.X);
    Stream(seed, 2).fill_normal_rows(d.Z);
    return d;
}

} // namespace

TEST_SUITE("data_model") {

TEST_CASE("header y,x1,z1,z2 with 10 rows gives n=10, p=1, K=2")
{
    std::istringstream in(csv_y_x1_z1_z2(10));
    const Dataset d = read_dataset(in);
    CHECK(d.n() == 10);
    CHECK(d.p() == 1);
    CHECK(d.K() == 2);
    CHECK(d.y[4] == 2.0);
    CHECK(d.X(4, 0) == 1.0);
    CHECK(d.Z(4, 1) == 5.0);
}

TEST_CASE("columns are found by name, not position")
{
    std::istringstream in("z2,x1,junk,y,z1\n1,2,9,3,4\n5,6,9,7,8\n");
    const Dataset d = read_dataset(in);
    CHECK(d.y[0] == 3.0);
    CHECK(d.X(1, 0) == 6.0);
    CHECK(d.Z(0, 0) == 4.0);
    CHECK(d.Z(0, 1) == 1.0);
}

TEST_CASE("K < p is an identification error")
{
    std::istringstream in("y,x1,x2,z1\n1,2,3,4\n5,6,7,8\n");
    CHECK_THROWS_AS(read_dataset(in), IdentificationError);
}

TEST_CASE("NaN and non-numeric cells are parse errors with row and column")
{
    std::istringstream nan_in("y,x1,z1\n1,2,3\n4,NaN,6\n");
    CHECK_THROWS_AS(read_dataset(nan_in), ParseError);
    std::istringstream text_in("y,x1,z1\n1,2,3\n4,abc,6\n");
    try {
        read_dataset(text_in);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("row 3") != std::string::npos);
        CHECK(msg.find("x1") != std::string::npos);
    }
}

TEST_CASE("missing and non-contiguous columns name the column")
{
    std::istringstream no_y("x1,z1\n1,2\n3,4\n");
    CHECK_THROWS_WITH_AS(read_dataset(no_y), doctest::Contains("'y'"), SchemaError);
    std::istringstream gap("y,x1,x3,z1,z2,z3\n1,2,3,4,5,6\n1,2,3,4,5,6\n");
    CHECK_THROWS_WITH_AS(read_dataset(gap), doctest::Contains("'x2'"), SchemaError);
}

TEST_CASE("UTF-8 byte order mark is ignored")
{
    std::istringstream in("\xEF\xBB\xBFy,x1,z1\n1,2,3\n4,5,6\n");
    CHECK(read_dataset(in).n() == 2);
}

TEST_CASE("validate reports instead of throwing")
{
    Dataset ok = random_dataset(5, 2, 3, 1);
    CHECK(validate(ok).ok());

    Dataset tiny = random_dataset(1, 1, 1, 2);
    const auto r = validate(tiny);
    REQUIRE_FALSE(r.ok());
    CHECK(r.violations.front().find("n >= 2") != std::string::npos);

    Dataset exact = random_dataset(6, 3, 3, 3);
    CHECK(validate(exact).ok());

    Dataset underid = random_dataset(6, 3, 2, 4);
    CHECK_FALSE(validate(underid).ok());
    CHECK_THROWS_AS(require_valid(underid), IdentificationError);

    Dataset bad = random_dataset(6, 2, 2, 5);
    bad.X(2, 1) = std::numeric_limits<double>::infinity();
    CHECK_FALSE(validate(bad).ok());
    CHECK_THROWS_AS(require_valid(bad), DimensionError);

    nlohmann::json j = validate(underid);
    CHECK(j["ok"] == false);
    CHECK(j["violations"].size() == 1);
}

TEST_CASE("write then read is bit-identical")
{
    const Dataset d = random_dataset(40, 3, 5, 11);
    std::stringstream buf;
    write_dataset(buf, d);
    const Dataset e = read_dataset(buf);
    CHECK(e.y == d.y);
    CHECK(e.X == d.X);
    CHECK(e.Z == d.Z);
    std::stringstream again;
    write_dataset(again, e);
    std::stringstream first;
    write_dataset(first, d);
    CHECK(again.str() == first.str());
}

TEST_CASE("penalty config invariants")
{
    PenaltyConfig pen;
    CHECK_NOTHROW(pen.check());
    pen.c = 0.5;
    CHECK_THROWS_AS(pen.check(), ParameterError);
    pen = {};
    pen.tau = 0;
    CHECK_THROWS_AS(pen.check(), ParameterError);
    pen = {};
    pen.alpha = 1.0;
    CHECK_THROWS_AS(pen.check(), ParameterError);
}

TEST_CASE("normal quantile against frozen scipy values")
{
    CHECK(normal_quantile(0.975) == doctest::Approx(1.95996398454005).epsilon(1e-13));
    CHECK(normal_quantile(1 - 0.05 / 60) == doctest::Approx(3.14398028706907).epsilon(1e-13));
    CHECK(normal_cdf(normal_quantile(0.3)) == doctest::Approx(0.3).epsilon(1e-14));
    CHECK_THROWS_AS(normal_quantile(0.0), ParameterError);
    CHECK_THROWS_AS(normal_quantile(1.0), ParameterError);
}

TEST_CASE("streams depend only on (seed, stream)")
{
    Stream a(5, 9), b(5, 9), c(5, 10), d(6, 9);
    const double va = a.normal();
    CHECK(va == b.normal());
    CHECK(va != c.normal());
    CHECK(va != d.normal());
    CHECK(derive_seed(1, 2) != derive_seed(2, 1));
    // Moments of a long stream.
    Stream s(123, 0);
    double m = 0, q = 0;
    const int N = 200000;
    for (int i = 0; i < N; ++i) {
        const double x = s.normal();
        m += x;
        q += x * x;
    }
    CHECK(std::abs(m / N) < 4 / std::sqrt(double(N)));
    CHECK(std::abs(q / N - 1) < 4 * std::sqrt(2.0 / N));
}

} // TEST_SUITE
