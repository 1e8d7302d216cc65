#include "bsdekit/errors.hpp"
#include "bsdekit/report.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <limits>
#include <random>

using namespace bsde;

TEST_CASE("CSV layout with mixed cells") {
    SweepReport r("tau", {"scheme", "tau", "n", "note"});
    r.add_row({std::string("em"), 0.1, std::int64_t{4}, std::string("a,b")});
    r.add_row({std::string("heun"), std::numeric_limits<double>::quiet_NaN(), std::int64_t{-2}, std::string("say \"hi\"")});
    CHECK(r.to_csv() == "scheme,tau,n,note\nem,0.1,4,\"a,b\"\nheun,,-2,\"say \"\"hi\"\"\"\n");
    CHECK(r.variable() == "tau");
}

TEST_CASE("row width must match the header") {
    SweepReport r("x", {"a", "b"});
    CHECK_THROWS_AS(r.add_row({1.0}), PreconditionError);
    CHECK(r.row_count() == 0);
}

TEST_CASE("doubles round-trip through their text form") {
    std::mt19937_64 gen(9);
    std::uniform_real_distribution<double> u(-30.0, 30.0);
    for (int i = 0; i < 2000; ++i) {
        const double v = std::ldexp(u(gen), static_cast<int>(u(gen) * 10.0));
        CHECK(std::strtod(format_double(v).c_str(), nullptr) == v);
    }
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
    CHECK(format_double(std::numeric_limits<double>::quiet_NaN()).empty());
}

TEST_CASE("csv_escape leaves plain fields alone") {
    CHECK(csv_escape("plain") == "plain");
    CHECK(csv_escape("two\nlines") == "\"two\nlines\"");
}

TEST_CASE("metadata keeps insertion order and replaces in place") {
    SweepReport r("x", {"a"});
    r.set_meta("b", "1");
    r.set_meta("a", "2");
    r.set_meta("b", "3");
    REQUIRE(r.metadata().size() == 2);
    CHECK(r.metadata()[0].first == "b");
    CHECK(r.metadata()[0].second == "3");
    CHECK(r.meta("a") == "2");
    CHECK(r.meta("missing").empty());
}

TEST_CASE("numeric column views") {
    SweepReport r("x", {"i", "d", "s"});
    r.add_row({std::int64_t{3}, 0.5, std::string("z")});
    CHECK(r.column_values("i") == std::vector<double>{3.0});
    CHECK(r.column_values("d") == std::vector<double>{0.5});
    CHECK_THROWS_AS(r.column_values("s"), PreconditionError);
    CHECK_THROWS_AS(r.column_index("nope"), PreconditionError);
}
