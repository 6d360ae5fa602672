#include <doctest.h>

#include <cmath>
#include <random>

#include "../support/oracles.hpp"
#include "fcrn/basis_layer.hpp"
#include "fcrn/error.hpp"

using namespace fcrn;

namespace {

std::vector<double> uniform_grid(int J) {
    std::vector<double> g;
    for (int j = 0; j < J; ++j) g.push_back(static_cast<double>(j) / (J - 1));
    return g;
}

// Layer with no hidden sublayers: B_d(tau) = w_d tau + b_d.
BasisLayer linear_layer(ParameterStore& store, int D, const std::vector<double>& grid, double w, double b) {
    std::mt19937_64 rng(1);
    BasisLayer layer("f", D, grid, {}, store, rng);
    for (int d = 0; d < D; ++d) {
        store[layer.first_param() + 2 * d].value.setConstant(w);
        store[layer.first_param() + 2 * d + 1].value.setConstant(b);
    }
    return layer;
}

}  // namespace

TEST_CASE("trapezoid weights") {
    const auto w = trapezoid_weights(uniform_grid(51));
    REQUIRE(w.size() == 51);
    CHECK(w.front() == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(w.back() == doctest::Approx(0.01).epsilon(1e-12));
    for (std::size_t j = 1; j + 1 < w.size(); ++j) CHECK(w[j] == doctest::Approx(0.02).epsilon(1e-12));
    CHECK(trapezoid_weights(std::vector<double>{0.0, 1.0}) == std::vector<double>{0.5, 0.5});
    const std::vector<double> odd = {0.1, 0.15, 0.4, 0.41, 0.9};
    double sum = 0.0;
    for (double v : trapezoid_weights(odd)) {
        CHECK(v >= 0.0);
        sum += v;
    }
    CHECK(sum == doctest::Approx(0.8).epsilon(1e-14));
    CHECK_THROWS_AS(trapezoid_weights(std::vector<double>{0.5}), Error);
}

TEST_CASE("micro-network forward") {
    const auto grid = uniform_grid(11);
    ParameterStore zs;
    std::mt19937_64 rng(4);
    BasisLayer zero("f", 3, grid, {16, 16}, zs, rng);
    for (auto& p : zs) p.value.setZero();
    for (double tau : {0.0, 0.3, 1.0}) CHECK(zero.micro_forward(tau, 1, zs) == 0.0);

    ParameterStore ls;
    const auto ident = linear_layer(ls, 2, grid, 1.0, 0.0);
    for (double tau : {0.0, 0.25, 0.8}) CHECK(ident.micro_forward(tau, 0, ls) == tau);
}

TEST_CASE("projection examples") {
    const auto grid = uniform_grid(51);
    ParameterStore ones;
    const auto layer1 = linear_layer(ones, 3, grid, 0.0, 1.0);
    const std::vector<double> c(51, 2.5);
    const Vector a = layer1.project_values(c, ones);
    for (int d = 0; d < 3; ++d) CHECK(a[d] == doctest::Approx(2.5).epsilon(1e-13));
    const Vector zero = layer1.project_values(std::vector<double>(51, 0.0), ones);
    CHECK(zero.isZero(0.0));

    ParameterStore lin;
    const auto layer2 = linear_layer(lin, 2, grid, 1.0, 0.0);
    const Vector half = layer2.project_values(std::vector<double>(51, 1.0), lin);
    CHECK(std::abs(half[0] - 0.5) < 1e-12);

    // Trapezoid mean of an arbitrary curve on a nonuniform grid, B == 1.
    const std::vector<double> ng = {0.0, 0.1, 0.35, 0.5, 0.9, 1.0};
    ParameterStore os;
    const auto layer3 = linear_layer(os, 1, ng, 0.0, 1.0);
    const std::vector<double> v = {1, -2, 0.5, 3, 4, -1};
    double ref = 0.0;
    for (std::size_t j = 1; j < ng.size(); ++j) ref += 0.5 * (v[j] + v[j - 1]) * (ng[j] - ng[j - 1]);
    CHECK(layer3.project_values(v, os)[0] == doctest::Approx(ref).epsilon(1e-14));
}

TEST_CASE("projection is linear in the curve and matches the graph path") {
    const auto grid = uniform_grid(21);
    ParameterStore store;
    std::mt19937_64 rng(8);
    BasisLayer layer("f", 4, grid, {16, 16}, store, rng);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> x1(21), x2(21), mix(21);
    for (int j = 0; j < 21; ++j) {
        x1[j] = n(rng);
        x2[j] = n(rng);
        mix[j] = 0.7 * x1[j] - 1.3 * x2[j];
    }
    const Vector a = layer.project_values(mix, store);
    const Vector b = 0.7 * layer.project_values(x1, store) - 1.3 * layer.project_values(x2, store);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10);

    Graph g;
    Matrix curves(2, 21);
    for (int j = 0; j < 21; ++j) {
        curves(0, j) = x1[j];
        curves(1, j) = mix[j];
    }
    const auto proj = layer.project(g, store, g.constant(curves));
    const Matrix& out = g.value(proj);
    CHECK((out.row(1).transpose() - a).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("micro-network gradients agree with finite differences and are nonzero") {
    const auto grid = uniform_grid(15);
    ParameterStore store;
    std::mt19937_64 rng(12);
    BasisLayer layer("f", 3, grid, {16, 16}, store, rng);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix curves(3, 15);
    for (Eigen::Index k = 0; k < curves.size(); ++k) curves.data()[k] = n(rng);
    Matrix target(3, 3);
    for (Eigen::Index k = 0; k < target.size(); ++k) target.data()[k] = n(rng);

    auto build = [&](Graph& g) {
        const auto a = layer.project(g, store, g.constant(curves));
        const auto diff = g.sub(a, g.constant(target));
        return g.sum(g.mul(diff, diff));
    };
    store.zero_grad();
    Graph g;
    g.backward(build(g));
    double worst = 0.0;
    for (auto& p : store) {
        CHECK(p.grad.cwiseAbs().maxCoeff() > 0.0);
        for (Eigen::Index k = 0; k < p.value.size(); ++k) {
            double& v = p.value.data()[k];
            const double keep = v;
            v = keep + 1e-5;
            Graph up;
            const double lu = up.scalar(build(up));
            v = keep - 1e-5;
            Graph dn;
            const double ld = dn.scalar(build(dn));
            v = keep;
            worst = std::max(worst, oracle::rel_err((lu - ld) / 2e-5, p.grad.data()[k]));
        }
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("resampling and canonical grid") {
    FunctionalCurve c{"f", {0.0, 0.5, 1.0}, {0.0, 1.0, 3.0}};
    const auto r = resample_linear(c, std::vector<double>{0.0, 0.25, 0.75, 1.0});
    CHECK(r == std::vector<double>{0.0, 0.5, 2.0, 3.0});
    FunctionalCurve inner{"f", {0.2, 0.8}, {1.0, 2.0}};
    const auto flat = resample_linear(inner, std::vector<double>{0.0, 1.0});
    CHECK(flat == std::vector<double>{1.0, 2.0});

    Dataset ds;
    ds.signal_names = {"f"};
    for (int i = 0; i < 2; ++i) {
        SubjectRecord s;
        s.id = std::to_string(i);
        s.curves.push_back(i == 0 ? FunctionalCurve{"f", {0.0, 0.5, 1.0}, {1, 2, 3}} : FunctionalCurve{"f", {0.0, 0.25, 1.0}, {1, 2, 3}});
        ds.subjects.push_back(s);
    }
    CHECK(canonical_grid(ds, 0) == std::vector<double>{0.0, 0.25, 0.5, 1.0});
    CHECK(canonical_grid(ds, 0, 3).size() == 3);
}
