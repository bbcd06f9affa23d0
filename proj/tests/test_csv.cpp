#include <catch2/catch.hpp>

#include <sstream>

#include "dapsm/csv.hpp"
#include "support/oracles.hpp"

using namespace dapsm;

namespace {

Dataset sample_geo_dataset() {
    Dataset ds = testsupport::random_dataset(2711, 25, 2, true);
    ds.covariate_names = {"temp", "urban"};
    return ds;
}

bool datasets_identical(const Dataset& a, const Dataset& b) {
    if (a.ids != b.ids || a.metric != b.metric || a.has_outcome != b.has_outcome) return false;
    if (a.covariate_names != b.covariate_names) return false;
    if (a.z != b.z) return false;
    if (a.covariates != b.covariates) return false;
    if (a.has_outcome && a.y != b.y) return false;
    for (std::size_t i = 0; i < a.locations.size(); ++i) {
        if (a.locations[i].x != b.locations[i].x || a.locations[i].y != b.locations[i].y) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("dataset CSV round trip is exact") {
    SECTION("geodesic layout") {
        const Dataset ds = sample_geo_dataset();
        const std::string text = dataset_to_csv(ds);
        std::istringstream in(text);
        const Dataset back = load_dataset_csv(in);
        REQUIRE(datasets_identical(ds, back));

        const std::string again = dataset_to_csv(back);
        REQUIRE(text == again);
    }
    SECTION("euclidean layout uses the 'outcome' column") {
        const Dataset ds = testsupport::random_dataset(555, 18, 3, false);
        const std::string text = dataset_to_csv(ds);
        REQUIRE(text.find("outcome") != std::string::npos);
        std::istringstream in(text);
        const Dataset back = load_dataset_csv(in);
        REQUIRE(datasets_identical(ds, back));
    }
    SECTION("match-only dataset without outcome") {
        Dataset ds = testsupport::random_dataset(66, 12, 1, false);
        ds.has_outcome = false;
        ds.y.resize(0);
        std::istringstream in(dataset_to_csv(ds));
        const Dataset back = load_dataset_csv(in);
        REQUIRE_FALSE(back.has_outcome);
        REQUIRE(datasets_identical(ds, back));
    }
}

TEST_CASE("schema errors") {
    SECTION("missing z names the column") {
        std::istringstream in("id,lon,lat,x_a\nu1,0,0,1\n");
        try {
            load_dataset_csv(in);
            FAIL("expected InputError");
        } catch (const InputError& e) {
            REQUIRE(std::string(e.what()).find("'z'") != std::string::npos);
        }
    }
    SECTION("non-numeric value reports the file line") {
        std::istringstream in("id,lon,lat,z,x_a\nu1,0,0,1,1.5\nu2,0,1,0,oops\n");
        try {
            load_dataset_csv(in);
            FAIL("expected InputError");
        } catch (const InputError& e) {
            REQUIRE(std::string(e.what()).find("line 3") != std::string::npos);
            REQUIRE(std::string(e.what()).find("x_a") != std::string::npos);
        }
    }
    SECTION("z outside 0/1 reports the file line") {
        std::istringstream in("id,lon,lat,z\nu1,0,0,2\nu2,0,1,0\n");
        try {
            load_dataset_csv(in);
            FAIL("expected InputError");
        } catch (const InputError& e) {
            REQUIRE(std::string(e.what()).find("line 2") != std::string::npos);
        }
    }
    SECTION("unknown unprefixed column rejected") {
        std::istringstream in("id,lon,lat,z,weight\nu1,0,0,1,2\nu2,0,1,0,3\n");
        REQUIRE_THROWS_AS(load_dataset_csv(in), InputError);
    }
    SECTION("both coordinate layouts rejected") {
        std::istringstream in("id,lon,lat,x,y,z\nu1,0,0,0,0,1\nu2,0,1,1,1,0\n");
        REQUIRE_THROWS_AS(load_dataset_csv(in), InputError);
    }
    SECTION("duplicate ids rejected") {
        std::istringstream in("id,x,y,z\nu1,0,0,1\nu1,1,1,0\n");
        REQUIRE_THROWS_AS(load_dataset_csv(in), InputError);
    }
    SECTION("field count mismatch reports the file line") {
        std::istringstream in("id,x,y,z\nu1,0,0,1\nu2,1,1\n");
        try {
            load_dataset_csv(in);
            FAIL("expected InputError");
        } catch (const InputError& e) {
            REQUIRE(std::string(e.what()).find("line 3") != std::string::npos);
        }
    }
}

TEST_CASE("csv niceties") {
    SECTION("comment lines and quoted ids") {
        std::istringstream in(
            "# produced by a test\n"
            "id,x,y,z,x_a\n"
            "\"plant, one\",0,0,1,0.5\n"
            "plant2,1,1,0,-0.5\n");
        const Dataset ds = load_dataset_csv(in);
        REQUIRE(ds.ids[0] == "plant, one");
        REQUIRE(ds.metric == DistanceMetric::euclidean);
    }
    SECTION("provenance block renders every field") {
        OutputProvenance prov;
        prov.command = "dapsm match in.csv";
        prov.input_hash = "abc";
        prov.seeds = "seed=1";
        const std::string block = provenance_block(prov);
        REQUIRE(block.find("# dapsm ") != std::string::npos);
        REQUIRE(block.find("# command: dapsm match in.csv\n") != std::string::npos);
        REQUIRE(block.find("# input-hash: abc\n") != std::string::npos);
        REQUIRE(block.find("# seeds: seed=1\n") != std::string::npos);
    }
    SECTION("fnv hash is stable") {
        REQUIRE(detail::hex64(detail::fnv1a64("")) == "cbf29ce484222325");
    }
}
