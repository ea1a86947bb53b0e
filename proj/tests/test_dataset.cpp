#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "smatch/dataset.hpp"
#include "test_util.hpp"

using namespace smatch;

namespace {

std::string write_tmp(const std::string& name, const std::string& content) {
    auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path);
    out << content;
    return path.string();
}

}  // namespace

TEST_CASE("load_csv parses a small two-arm file") {
    auto path = write_tmp("smatch_basic.csv",
                          "id,treat,x1,x2,y\n"
                          "a,A,1.0,2.0,0.5\n"
                          "b,A,1.5,2.5,0.6\n"
                          "c,B,0.5,1.0,0.7\n"
                          "d,B,0.0,0.5,0.8\n");
    CsvSchema schema{"id", "treat", {"x1", "x2"}, "y", {}};
    Dataset d = load_csv(path, schema);
    CHECK(d.k() == 2);
    CHECK(d.p() == 2);
    CHECK(d.n() == 4);
    CHECK(d.arm(0).size() == 2);
    CHECK(d.arm(1).size() == 2);
    CHECK(d.levels()[0].label == "A");  // first-appearance order
    CHECK(d.unit_by_id("c").covariates[0] == doctest::Approx(0.5));
    CHECK(*d.unit_by_id("d").response == doctest::Approx(0.8));
}

TEST_CASE("load_csv rejects a single treatment level") {
    auto path = write_tmp("smatch_onelevel.csv", "treat,x1\nA,1\nA,2\n");
    CsvSchema schema{"", "treat", {"x1"}, "", {}};
    CHECK_THROWS_WITH_AS(load_csv(path, schema), doctest::Contains("fewer than 2"), InputError);
}

TEST_CASE("load_csv reports the row and column of a bad cell") {
    auto path = write_tmp("smatch_badcell.csv", "treat,x1\nA,1\nB,oops\n");
    CsvSchema schema{"", "treat", {"x1"}, "", {}};
    try {
        load_csv(path, schema);
        FAIL("expected InputError");
    } catch (const InputError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("row 3") != std::string::npos);
        CHECK(msg.find("x1") != std::string::npos);
    }
}

TEST_CASE("load_csv: missing file, duplicate id, explicit level order") {
    CsvSchema schema{"id", "treat", {"x1"}, "", {}};
    CHECK_THROWS_AS(load_csv("/nonexistent/file.csv", schema), InputError);

    auto dup = write_tmp("smatch_dup.csv", "id,treat,x1\na,A,1\na,B,2\n");
    CHECK_THROWS_WITH_AS(load_csv(dup, schema), doctest::Contains("duplicate unit id"),
                         InputError);

    auto path = write_tmp("smatch_order.csv", "id,treat,x1\na,B,1\nb,A,2\n");
    CsvSchema ordered{"id", "treat", {"x1"}, "", {"A", "B"}};
    Dataset d = load_csv(path, ordered);
    CHECK(d.levels()[0].label == "A");
    CHECK(d.unit_by_id("a").treatment == 1);
}

TEST_CASE("load_csv rejects an empty arm under explicit ordering") {
    auto path = write_tmp("smatch_emptyarm.csv", "id,treat,x1\na,A,1\nb,A,2\n");
    CsvSchema schema{"id", "treat", {"x1"}, "", {"A", "B"}};
    CHECK_THROWS_WITH_AS(load_csv(path, schema), doctest::Contains("empty treatment arm"),
                         InputError);
}

TEST_CASE("standardize uses the population-sd convention") {
    auto d = test_util::make_dataset({"a", "b", "c", "d"}, {0, 0, 1, 1},
                                     {{1.0}, {2.0}, {3.0}, {2.0}});
    // column (1,2,3) oracle: mean 2, population sd sqrt(2/3)
    auto d3 = test_util::make_dataset({"a", "b", "c"}, {0, 0, 1}, {{1.0}, {2.0}, {3.0}});
    auto [std3, sp3] = standardize(d3);
    CHECK(std3.units()[0].covariates[0] == doctest::Approx(-1.2247448713915890).epsilon(1e-12));
    CHECK(std3.units()[1].covariates[0] == doctest::Approx(0.0));
    CHECK(std3.units()[2].covariates[0] == doctest::Approx(1.2247448713915890).epsilon(1e-12));

    auto [sd, sp] = standardize(d);
    SUBCASE("idempotence") {
        auto [sd2, sp2] = standardize(sd);
        for (std::size_t i = 0; i < sd.n(); ++i)
            CHECK(std::abs(sd2.units()[i].covariates[0] - sd.units()[i].covariates[0]) < 1e-12);
    }
    SUBCASE("round trip within 1e-10") {
        Dataset back = unstandardize(sd, sp);
        for (std::size_t i = 0; i < d.n(); ++i)
            CHECK(std::abs(back.units()[i].covariates[0] - d.units()[i].covariates[0]) < 1e-10);
    }
}

TEST_CASE("standardize rejects a constant covariate naming the column") {
    auto d = test_util::make_dataset({"a", "b"}, {0, 1}, {{5.0, 1.0}, {5.0, 2.0}});
    CHECK_THROWS_WITH_AS(standardize(d), doctest::Contains("x1"), InputError);
}

TEST_CASE("arm partition: arms are a disjoint cover of the unit list") {
    auto rng = make_rng(17);
    Dataset d = test_util::random_dataset(100, 3, 2, rng);
    std::size_t total = 0;
    std::vector<bool> seen(d.n(), false);
    for (int t = 0; t < d.k(); ++t) {
        for (std::size_t i : d.arm(t)) {
            CHECK(!seen[i]);
            seen[i] = true;
            CHECK(d.units()[i].treatment == t);
        }
        total += d.arm(t).size();
    }
    CHECK(total == d.n());
}
