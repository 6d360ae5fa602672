#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "fcrn/ggm.hpp"
#include "fcrn/survival_data.hpp"
#include "fcrn/tensor.hpp"

namespace fcrn {

/// Clamped uniform B-spline basis on [0, 1].
class BSplineBasis {
public:
    explicit BSplineBasis(int num_basis = 15, int degree = 3);

    int num_basis() const noexcept { return num_basis_; }
    int degree() const noexcept { return degree_; }
    const std::vector<double>& knots() const noexcept { return knots_; }

    /// Cox-de Boor values of all basis functions at tau.
    std::vector<double> eval(double tau) const;

private:
    int num_basis_;
    int degree_;
    std::vector<double> knots_;
};

inline std::vector<double> bspline_eval(const BSplineBasis& basis, double tau) { return basis.eval(tau); }

struct NormalSpec {
    double mean;
    double sd;
};
struct UniformSpec {
    double lo;
    double hi;
};

/// Hidden feature: product of two visible columns (a == b gives a square), both centered.
struct HiddenSpec {
    int a;
    int b;
};

struct CauseEffects {
    std::array<double, 10> visible{};
    std::array<double, 5> hidden{};
    std::array<double, 3> functional{};
};

struct SimConfig {
    int n = 1000;
    int n_train = 800;
    int n_test = 200;
    std::uint64_t seed = 1;

    std::array<NormalSpec, 5> normals{{{0.2, 1.0}, {1.5, 1.2}, {0.0, 1.0}, {-0.5, 0.8}, {1.0, 1.5}}};
    std::array<UniformSpec, 5> uniforms{{{-1.0, 1.0}, {0.2, 2.0}, {0.0, 1.0}, {-2.0, 0.0}, {0.5, 1.5}}};
    std::array<HiddenSpec, 5> hidden{{{0, 0}, {5, 5}, {2, 2}, {1, 6}, {3, 7}}};

    bool functional = true;
    int num_signals = 3;
    int spline_basis = 15;
    int sample_points = 51;
    /// Correlation of the first spline coefficient of each curve with two tabular covariates.
    double coef_covariate_corr = 0.0;

    // cause 1: log T = mu - eta_1 + sigma Z - log V,  V ~ Gamma(shape, scale)
    double lognormal_mu = 3.6;
    double lognormal_sigma = 0.8;
    double gamma_shape = 2.0;
    double gamma_scale = 0.5;
    // cause 2: Weibull proportional hazards with Exponential frailty
    double weibull_shape = 1.5;
    double weibull_scale = 55.0;
    double exp_rate = 1.0;
    bool frailty = true;
    CauseEffects effects1{{0.6, 0.0, 0.4, 0.0, 0.0, -0.5, 0.0, 0.0, 0.0, 0.0},
                          {0.3, 0.0, 0.0, -0.4, 0.0},
                          {1.0, -0.8, 0.0}};
    CauseEffects effects2{{0.0, -0.4, 0.0, 0.5, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0},
                          {0.0, 0.4, 0.0, 0.0, 0.3},
                          {0.0, 0.0, 1.0}};

    double c_max = 160.0;
    double admin_censor = 100.0;

    double missing_rate = 0.0;
    std::array<int, 2> mar_anchors{0, 5};
    double mar_strength = 1.0;

    nlohmann::json to_json() const;
    static SimConfig from_json(const nlohmann::json& j);
    void validate() const;
};

struct TabularDraw {
    Matrix visible;  // n x 10
    Matrix hidden;   // n x 5
};

TabularDraw gen_tabular(const SimConfig& cfg, std::mt19937_64& rng);

struct FunctionalDraw {
    std::vector<double> taus;
    std::vector<Matrix> curves;   // per signal, n x J
    Matrix scores;                // n x signals, outcome-relevant curve functionals
};

FunctionalDraw gen_functional(const SimConfig& cfg, const Matrix& visible, std::mt19937_64& rng);

struct Outcomes {
    std::vector<double> time;
    std::vector<int> cause;
};

Outcomes gen_outcomes(const SimConfig& cfg, const TabularDraw& tab, const Matrix& functional_scores, std::mt19937_64& rng);

/// MAR mask: per-cell missingness is logistic in the two anchor covariates, intercept found by
/// bisection so the realized overall rate is the target. Anchors are never masked.
MissingMask apply_mar(const Matrix& x, double rate, std::array<int, 2> anchors, double strength, std::mt19937_64& rng);

struct SimResult {
    Dataset full;
    Dataset train;
    Dataset test;
    nlohmann::json manifest;
};

SimResult simulate(const SimConfig& cfg);

}  // namespace fcrn
