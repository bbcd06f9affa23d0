#include <catch2/catch.hpp>

#include "dapsm/estimation.hpp"
#include "dapsm/rng.hpp"
#include "support/oracles.hpp"

using namespace dapsm;

namespace {

// Dataset with n treated followed by n control units; pair i matches
// treated i to control i.
Dataset paired_dataset(const std::vector<double>& y_treated,
                       const std::vector<double>& y_control, std::uint64_t seed = 9000) {
    const int k = static_cast<int>(y_treated.size());
    Dataset ds;
    Rng rng(seed);
    ds.covariates.resize(2 * k, 1);
    ds.covariate_names = {"a"};
    ds.z.resize(2 * k);
    ds.y.resize(2 * k);
    ds.has_outcome = true;
    ds.locations.resize(static_cast<std::size_t>(2 * k));
    for (int i = 0; i < 2 * k; ++i) {
        ds.covariates(i, 0) = rng.normal();
        ds.locations[static_cast<std::size_t>(i)] = {rng.uniform(), rng.uniform()};
        ds.z(i) = i < k ? 1 : 0;
        ds.y(i) = i < k ? y_treated[static_cast<std::size_t>(i)]
                        : y_control[static_cast<std::size_t>(i - k)];
        ds.ids.push_back("p" + std::to_string(i));
    }
    return ds;
}

MatchedSet identity_pairs(int k) {
    MatchedSet ms;
    for (int i = 0; i < k; ++i) ms.pairs.emplace_back(i, i);
    return ms;
}

}  // namespace

TEST_CASE("att_diff_means") {
    SECTION("identical pairs estimate zero") {
        const Dataset ds = paired_dataset({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0});
        const EffectEstimate est = att_diff_means(ds, identity_pairs(3));
        REQUIRE(est.estimate == 0.0);
        REQUIRE(est.n_pairs == 3);
    }
    SECTION("constant shift of 2 gives estimate 2 with degenerate SE") {
        const Dataset ds = paired_dataset({3.0, 4.0, 5.0}, {1.0, 2.0, 3.0});
        const EffectEstimate est = att_diff_means(ds, identity_pairs(3));
        REQUIRE(est.estimate == Approx(2.0).epsilon(1e-15));
        REQUIRE(est.standard_error == 0.0);
        REQUIRE(est.degenerate_se);
        REQUIRE(est.ci_lower == est.estimate);
        REQUIRE(est.ci_upper == est.estimate);
    }
    SECTION("random data agrees with direct arithmetic") {
        Rng rng(31337);
        for (int rep = 0; rep < 20; ++rep) {
            const int k = 2 + static_cast<int>(rng.next_u64() % 20);
            std::vector<double> yt, yc;
            for (int i = 0; i < k; ++i) {
                yt.push_back(rng.normal() * 3.0 + 1.0);
                yc.push_back(rng.normal() * 2.0);
            }
            const Dataset ds = paired_dataset(yt, yc, 1000 + static_cast<std::uint64_t>(rep));
            const EffectEstimate est = att_diff_means(ds, identity_pairs(k));
            double mt = 0.0, mc = 0.0;
            for (double v : yt) mt += v;
            for (double v : yc) mc += v;
            REQUIRE(est.estimate == Approx(mt / k - mc / k).margin(1e-12));
            REQUIRE(est.ci_lower <= est.estimate);
            REQUIRE(est.ci_upper >= est.estimate);
        }
    }
    SECTION("empty matched set is an estimation error") {
        const Dataset ds = paired_dataset({1.0}, {2.0});
        REQUIRE_THROWS_AS(att_diff_means(ds, MatchedSet{}), EstimationError);
    }
    SECTION("pair order does not matter") {
        const Dataset ds = paired_dataset({5.0, 1.0, 3.0, 2.0}, {0.5, 0.25, 2.0, 1.0});
        MatchedSet forward = identity_pairs(4);
        MatchedSet backward;
        for (int i = 3; i >= 0; --i) backward.pairs.emplace_back(i, i);
        const double a = att_diff_means(ds, forward).estimate;
        const double b = att_diff_means(ds, backward).estimate;
        REQUIRE(a == Approx(b).margin(1e-12));
    }
}

TEST_CASE("att_linear_adjusted") {
    SECTION("no covariates reproduces the difference in means") {
        Rng rng(2222);
        for (int rep = 0; rep < 10; ++rep) {
            const int k = 5 + static_cast<int>(rng.next_u64() % 15);
            std::vector<double> yt, yc;
            for (int i = 0; i < k; ++i) {
                yt.push_back(rng.normal() + 1.5);
                yc.push_back(rng.normal());
            }
            const Dataset ds = paired_dataset(yt, yc, 3000 + static_cast<std::uint64_t>(rep));
            const MatchedSet ms = identity_pairs(k);
            const double diff = att_diff_means(ds, ms).estimate;
            const double adj = att_linear_adjusted(ds, ms, {}).estimate;
            REQUIRE(adj == Approx(diff).margin(1e-12));
        }
    }
    SECTION("coefficients match the explicit normal-equations oracle") {
        // 10 units: 5 pairs with one covariate.
        Rng rng(4242);
        std::vector<double> yt, yc;
        for (int i = 0; i < 5; ++i) {
            yt.push_back(rng.normal() * 2 + 1);
            yc.push_back(rng.normal());
        }
        Dataset ds = paired_dataset(yt, yc, 4242);
        const MatchedSet ms = identity_pairs(5);
        const EffectEstimate est = att_linear_adjusted(ds, ms, {"a"});

        // Oracle: beta = (X^T X)^{-1} X^T y with rows ordered treated block
        // then control block, like the estimator builds them.
        Eigen::MatrixXd x(10, 3);
        Eigen::VectorXd y(10);
        const auto treated = ds.treated_indices();
        const auto control = ds.control_indices();
        for (int i = 0; i < 5; ++i) {
            x(i, 0) = 1.0;
            x(i, 1) = 1.0;
            x(i, 2) = ds.covariates(treated[static_cast<std::size_t>(i)], 0);
            y(i) = ds.y(treated[static_cast<std::size_t>(i)]);
            x(5 + i, 0) = 1.0;
            x(5 + i, 1) = 0.0;
            x(5 + i, 2) = ds.covariates(control[static_cast<std::size_t>(i)], 0);
            y(5 + i) = ds.y(control[static_cast<std::size_t>(i)]);
        }
        const Eigen::MatrixXd xtx_inv = (x.transpose() * x).inverse();
        const Eigen::VectorXd beta = xtx_inv * x.transpose() * y;
        REQUIRE(est.estimate == Approx(beta(1)).margin(1e-10));

        const Eigen::VectorXd residuals = y - x * beta;
        const double sigma2 = residuals.squaredNorm() / (10.0 - 3.0);
        REQUIRE(est.standard_error == Approx(std::sqrt(sigma2 * xtx_inv(1, 1))).margin(1e-10));
    }
    SECTION("noiseless linear outcome is recovered exactly") {
        Rng rng(5555);
        const int k = 12;
        Dataset ds = paired_dataset(std::vector<double>(k, 0.0), std::vector<double>(k, 0.0));
        for (int i = 0; i < 2 * k; ++i) {
            ds.y(i) = 1.0 * ds.z(i) + 2.0 * ds.covariates(i, 0);
        }
        const EffectEstimate est = att_linear_adjusted(ds, identity_pairs(k), {"a"});
        REQUIRE(est.estimate == Approx(1.0).margin(1e-10));
    }
    SECTION("a covariate orthogonal to Z and Y leaves the estimate unchanged") {
        Rng rng(6321);
        const int k = 15;
        std::vector<double> yt, yc;
        for (int i = 0; i < k; ++i) {
            yt.push_back(rng.normal() + 1);
            yc.push_back(rng.normal());
        }
        Dataset ds = paired_dataset(yt, yc, 888);
        ds.covariates.conservativeResize(Eigen::NoChange, 2);
        ds.covariate_names.push_back("orth");
        // Build a column, then residualize it against (1, Z, Y) over the
        // matched rows so it is exactly orthogonal.
        Eigen::MatrixXd basis(2 * k, 3);
        Eigen::VectorXd raw(2 * k);
        for (int i = 0; i < 2 * k; ++i) {
            basis(i, 0) = 1.0;
            basis(i, 1) = static_cast<double>(ds.z(i));
            basis(i, 2) = ds.y(i);
            raw(i) = rng.normal();
        }
        const Eigen::VectorXd proj =
            basis * (basis.transpose() * basis).ldlt().solve(basis.transpose() * raw);
        ds.covariates.col(1) = raw - proj;

        const MatchedSet ms = identity_pairs(k);
        const double base = att_linear_adjusted(ds, ms, {}).estimate;
        const double with_orth = att_linear_adjusted(ds, ms, {"orth"}).estimate;
        REQUIRE(with_orth == Approx(base).margin(1e-8));
    }
    SECTION("rank deficiency is an estimation error") {
        const Dataset base = paired_dataset({1.0, 2.0, 3.0}, {0.0, 1.0, 2.0});
        Dataset ds = base;
        ds.covariates.conservativeResize(Eigen::NoChange, 2);
        ds.covariate_names.push_back("dup");
        ds.covariates.col(1) = ds.covariates.col(0);
        REQUIRE_THROWS_AS(att_linear_adjusted(ds, identity_pairs(3), {"a", "dup"}),
                          EstimationError);
    }
    SECTION("unknown covariate name is an input error") {
        const Dataset ds = paired_dataset({1.0, 2.0}, {0.0, 1.0});
        REQUIRE_THROWS_AS(att_linear_adjusted(ds, identity_pairs(2), {"nope"}), InputError);
    }
}
