#include <doctest.h>

#include <random>

#include "../support/oracles.hpp"
#include "fcrn/error.hpp"
#include "fcrn/survival_data.hpp"

using namespace fcrn;

namespace {

Dataset outcomes(const std::vector<std::pair<double, int>>& rows) {
    Dataset ds;
    int k = 0;
    for (const auto& [t, c] : rows) {
        SubjectRecord r;
        r.id = "s" + std::to_string(k++);
        r.time = t;
        r.cause = c;
        ds.subjects.push_back(r);
    }
    return ds;
}

}  // namespace

TEST_CASE("build_time_grid uses the ceiling rule") {
    CHECK(build_time_grid(100, 5).intervals() == 20);
    const auto one = build_time_grid(5, 5);
    CHECK(one.intervals() == 1);
    CHECK(one.cuts() == std::vector<double>{0.0, 5.0});
    CHECK(build_time_grid(101, 5).intervals() == 21);
    CHECK_THROWS_AS(build_time_grid(0, 5), Error);
    CHECK_THROWS_AS(build_time_grid(10, -1), Error);
    const auto g = build_time_grid(100, 5);
    const auto cuts = g.cuts();
    for (std::size_t l = 1; l < cuts.size(); ++l) CHECK(cuts[l] - cuts[l - 1] == doctest::Approx(5.0));
}

TEST_CASE("assign_interval uses half-open intervals") {
    const TimeGrid g(5, 20);
    CHECK(assign_interval(5.0, g) == 1);
    CHECK(assign_interval(5.1, g) == 2);
    CHECK(assign_interval(0.0, g) == 1);
    CHECK(assign_interval(100.0, g) == 20);
    CHECK_THROWS_AS(assign_interval(100.5, g), Error);
    try {
        assign_interval(101, g);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::OutOfRange);
    }
    CHECK(assign_interval_open(100.5, g) == 21);
}

TEST_CASE("augment_cause_specific rows") {
    const TimeGrid g(1, 5);
    SUBCASE("event in interval 3, cause 2") {
        const auto t = augment_cause_specific(outcomes({{2.5, 2}}), g, 2);
        REQUIRE(t.rows.size() == 3);
        CHECK(t.rows[0].interval == 1);
        CHECK(t.rows[0].target == 0);
        CHECK(t.rows[1].target == 0);
        CHECK(t.rows[2].interval == 3);
        CHECK(t.rows[2].target == 2);
    }
    SUBCASE("censored in interval 2") {
        const auto t = augment_cause_specific(outcomes({{1.5, 0}}), g, 2);
        REQUIRE(t.rows.size() == 2);
        CHECK(t.rows[0].target == 0);
        CHECK(t.rows[1].target == 0);
        CHECK(t.rows[1].interval == 2);
    }
    SUBCASE("event in interval 1") {
        const auto t = augment_cause_specific(outcomes({{0.4, 1}}), g, 2);
        REQUIRE(t.rows.size() == 1);
        CHECK(t.rows[0].target == 1);
        CHECK(t.rows[0].weight == 1.0);
    }
    CHECK_THROWS_AS(augment_cause_specific(outcomes({{0.4, 3}}), g, 2), Error);
}

TEST_CASE("cause-specific rows per subject equal the interval index; risk sets round-trip") {
    std::mt19937_64 rng(3);
    const TimeGrid g(2, 6);
    const auto ds = oracle::random_dataset(rng, 40, 1, 0, 2, g);
    const auto t = augment_cause_specific(ds, g, 2);
    std::vector<int> count(ds.size(), 0), nonzero(ds.size(), 0);
    for (const auto& r : t.rows) {
        ++count[r.subject];
        nonzero[r.subject] += r.target != 0;
    }
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(count[i] == oracle::interval_of(ds.subjects[i].time, g));
        CHECK(nonzero[i] == (ds.subjects[i].cause >= 1 ? 1 : 0));
    }
    const auto sizes = t.risk_set_sizes(g.intervals());
    for (int l = 1; l <= g.intervals(); ++l) {
        std::size_t n = 0;
        for (const auto& s : ds.subjects) n += oracle::interval_of(s.time, g) >= l;
        CHECK(sizes[static_cast<std::size_t>(l)] == n);
    }
}

TEST_CASE("censoring_survival Kaplan-Meier") {
    const TimeGrid g(1, 3);
    const auto km = censoring_survival(outcomes({{1, 1}, {2, 0}, {3, 1}}), g);
    CHECK(km.at(0) == 1.0);
    CHECK(km.at(1) == 1.0);
    CHECK(km.at(2) == 0.5);
    CHECK(km.at(3) == 0.5);

    const auto none = censoring_survival(outcomes({{1, 1}, {2, 2}, {3, 1}}), g);
    for (int l = 0; l <= 3; ++l) CHECK(none.at(l) == 1.0);

    const auto all = censoring_survival(outcomes({{0.5, 0}, {0.7, 0}}), g);
    CHECK(all.at(1) == kCensoringFloor);

    std::mt19937_64 rng(11);
    const TimeGrid g2(3, 7);
    const auto ds = oracle::random_dataset(rng, 60, 1, 0, 2, g2);
    const auto ref = oracle::censoring_km(ds, g2);
    const auto got = censoring_survival(ds, g2);
    CHECK(got.at(0) == 1.0);
    for (int l = 0; l <= 7; ++l) {
        CHECK(got.at(l) == doctest::Approx(ref[static_cast<std::size_t>(l)]).epsilon(1e-14));
        if (l > 0) CHECK(got.at(l) <= got.at(l - 1));
    }
}

TEST_CASE("subdistribution weights") {
    CensoringSurvival unit;
    unit.g.assign(6, 1.0);
    CHECK(subdistribution_weight(4, 2, 2, 1, unit) == 1.0);

    CensoringSurvival g;
    g.g = {1.0, 0.9, 0.8, 0.7, 0.6, 0.5};
    CHECK(subdistribution_weight(4, 2, 2, 1, g) == doctest::Approx(0.7 / 0.9).epsilon(1e-15));
    for (int t = 1; t <= 3; ++t) CHECK(subdistribution_weight(t, 3, 0, 1, g) == 1.0);
    CHECK(subdistribution_weight(4, 3, 0, 1, g) == 0.0);  // censored: leaves the risk set
    CHECK(subdistribution_weight(4, 3, 1, 1, g) == 0.0);  // target event: leaves the risk set

    const TimeGrid grid(1, 5);
    CHECK_THROWS_AS(augment_subdistribution(outcomes({{1, 1}}), grid, 0, unit), Error);
}

TEST_CASE("augment_subdistribution agrees with the weight oracle") {
    std::mt19937_64 rng(5);
    const TimeGrid grid(1.5, 8);
    const auto ds = oracle::random_dataset(rng, 30, 1, 0, 2, grid);
    for (int target : {1, 2}) {
        const auto g = censoring_survival(ds, grid);
        const auto table = augment_subdistribution(ds, grid, target, g);
        const auto gref = oracle::censoring_km(ds, grid);
        std::size_t k = 0;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const int li = oracle::interval_of(ds.subjects[i].time, grid);
            for (int t = 1; t <= grid.intervals() - 1; ++t) {
                const double w = oracle::sdm_weight(t, li, ds.subjects[i].cause, target, gref);
                if (w == 0.0) continue;
                REQUIRE(k < table.rows.size());
                const auto& r = table.rows[k++];
                CHECK(r.subject == i);
                CHECK(r.interval == t);
                CHECK(r.weight == doctest::Approx(w).epsilon(1e-14));
                CHECK(r.target == (t == li && ds.subjects[i].cause == target ? 1 : 0));
                if (t <= li) CHECK(r.weight == 1.0);
            }
        }
        CHECK(k == table.rows.size());
    }
}

TEST_CASE("dataset validation") {
    Dataset ds = outcomes({{1, 1}});
    ds.covariate_names = {"a"};
    ds.subjects[0].x = {1.0};
    ds.subjects[0].missing_mask = {false};
    CHECK_NOTHROW(ds.validate(2));
    ds.subjects[0].cause = 3;
    CHECK_THROWS_AS(ds.validate(2), Error);
    ds.subjects[0].cause = 1;
    ds.subjects[0].time = -1;
    CHECK_THROWS_AS(ds.validate(2), Error);

    FunctionalCurve c{"f", {0.0, 0.5, 0.4}, {1, 2, 3}};
    CHECK_THROWS_AS(c.validate(), Error);
    c.taus = {0.0, 1.2};
    c.values = {1, 2};
    CHECK_THROWS_AS(c.validate(), Error);
    c.taus = {0.0};
    c.values = {1};
    CHECK_THROWS_AS(c.validate(), Error);
}
