#include <doctest.h>

#include <cmath>
#include <random>

#include "../support/oracles.hpp"
#include "fcrn/error.hpp"
#include "fcrn/evaluation.hpp"

using namespace fcrn;

namespace {

Dataset outcomes(const std::vector<std::pair<double, int>>& rows) {
    Dataset ds;
    for (const auto& [t, c] : rows) {
        SubjectRecord r;
        r.id = std::to_string(ds.size());
        r.time = t;
        r.cause = c;
        ds.subjects.push_back(r);
    }
    return ds;
}

}  // namespace

TEST_CASE("uncensored Brier score") {
    const TimeGrid grid(1, 4);
    const auto ds = outcomes({{0.5, 1}, {1.5, 2}, {2.5, 1}, {3.5, 2}});
    const std::vector<double> oracle_pred = {1, 0, 1, 0};
    CHECK(brier(3, oracle_pred, ds, grid, 1) == 0.0);
    const std::vector<double> half(4, 0.5);
    CHECK(brier(3, half, ds, grid, 1) == 0.25);
    const double p = 0.3;
    const std::vector<double> cp(4, p);
    const double q = 0.25;  // one of four has cause 1 by t_1
    CHECK(brier(1, cp, ds, grid, 1) == doctest::Approx(q * (1 - p) * (1 - p) + (1 - q) * p * p).epsilon(1e-15));
}

TEST_CASE("IPCW Brier score") {
    const TimeGrid grid(1, 4);
    SUBCASE("reduces to the uncensored score without censoring") {
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int rep = 0; rep < 20; ++rep) {
            Dataset ds;
            for (int i = 0; i < 30 + rep; ++i) {
                SubjectRecord r;
                r.id = std::to_string(i);
                r.time = 4.0 * u(rng);
                r.cause = 1 + static_cast<int>(rng() % 2);
                ds.subjects.push_back(r);
            }
            const auto g = censoring_survival(ds, grid);
            std::vector<double> pred(ds.size());
            for (auto& v : pred) v = u(rng);
            for (int l = 0; l <= 4; ++l) {
                for (int c : {1, 2}) CHECK(std::abs(brier_ipcw(l, pred, ds, grid, c, g) - brier(l, pred, ds, grid, c)) < 1e-12);
            }
        }
    }
    SUBCASE("everyone censored after t") {
        const auto ds = outcomes({{3.5, 0}, {3.2, 0}, {3.9, 1}});
        const auto g = censoring_survival(ds, grid);
        const std::vector<double> pred = {0.1, 0.4, 0.2};
        CHECK(brier_ipcw(2, pred, ds, grid, 1, g) == doctest::Approx(brier(2, pred, ds, grid, 1)).epsilon(1e-15));
    }
    SUBCASE("hand example with one censored subject") {
        // Intervals: A at 1 (cause 1), B censored at 2, C at 3 (cause 2), D beyond t=3.
        const auto ds = outcomes({{0.5, 1}, {1.5, 0}, {2.5, 2}, {3.5, 1}});
        const auto g = censoring_survival(ds, grid);
        // G: risk set at 2 is {B, C, D}, one censoring -> G(2) = G(3) = 2/3.
        CHECK(g.at(1) == 1.0);
        CHECK(g.at(2) == doctest::Approx(2.0 / 3.0));
        const std::vector<double> f = {0.6, 0.3, 0.2, 0.1};
        const double want = ((1 - 0.6) * (1 - 0.6) / 1.0 + 0.0 + (0 - 0.2) * (0 - 0.2) / (2.0 / 3.0) +
                             0.1 * 0.1 / (2.0 / 3.0)) /
                            4.0;
        CHECK(brier_ipcw(3, f, ds, grid, 1, g) == doctest::Approx(want).epsilon(1e-14));
    }
}

TEST_CASE("integrated Brier score") {
    const std::vector<double> t = {0, 1, 2, 3};
    CHECK(ibs(t, std::vector<double>{0.2, 0.2, 0.2, 0.2}) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(ibs(t, std::vector<double>{0.0, 0.2 / 3, 0.4 / 3, 0.2}) == doctest::Approx(0.1).epsilon(1e-14));
    CHECK(ibs(std::vector<double>{2, 5}, std::vector<double>{0.1, 0.3}) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK_THROWS_AS(ibs(std::vector<double>{2, 2}, std::vector<double>{0.1, 0.3}), Error);
    CHECK_THROWS_AS(ibs(std::vector<double>{2}, std::vector<double>{0.1}), Error);
    // Refinement invariance for a piecewise-linear curve.
    const std::vector<double> fine = {0, 0.5, 1, 1.5, 2, 2.5, 3};
    const std::vector<double> fine_s = {0.1, 0.2, 0.3, 0.25, 0.2, 0.15, 0.1};
    const std::vector<double> coarse_s = {0.1, 0.3, 0.2, 0.1};
    CHECK(ibs(fine, fine_s) == doctest::Approx(ibs(t, coarse_s)).epsilon(1e-14));
}

TEST_CASE("score curves") {
    const TimeGrid grid(1, 4);
    const auto ds = outcomes({{0.5, 1}, {1.5, 2}, {2.5, 2}, {3.5, 2}});
    const auto g = censoring_survival(ds, grid);
    std::vector<std::vector<double>> wrong(4, std::vector<double>(5, 1.0));
    const auto none = outcomes({{3.9, 0}, {3.8, 0}});
    std::vector<std::vector<double>> ones(2, std::vector<double>(5, 1.0));
    const auto gn = censoring_survival(none, grid);
    // Constant F = 1 on an event-free horizon scores 1 at every time.
    const auto c = score_curve(ones, none, grid, 1, gn, 0.0, 3.0);
    CHECK(c.ibs == doctest::Approx(1.0));
    CHECK(c.times.front() == 0.0);
    CHECK(c.times.back() == 3.0);

    // Indicator predictions are perfect on uncensored data.
    std::vector<std::vector<double>> perfect(4, std::vector<double>(5, 0.0));
    for (std::size_t i = 0; i < 4; ++i) {
        const int li = oracle::interval_of(ds.subjects[i].time, grid);
        for (int l = li; l <= 4; ++l) perfect[i][static_cast<std::size_t>(l)] = ds.subjects[i].cause == 2 ? 1.0 : 0.0;
    }
    CHECK(score_curve(perfect, ds, grid, 2, g, 0.0, 4.0).ibs < 1e-12);
    CHECK_THROWS_AS(score_curve(perfect, ds, grid, 2, g, 0.0, 5.0), Error);

    const auto cum = cumulative_ibs(c);
    CHECK(cum.back() == doctest::Approx(c.ibs));
}
