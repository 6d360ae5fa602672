#include "fcrn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "fcrn/basis_layer.hpp"
#include "fcrn/error.hpp"
#include "fcrn/tensor.hpp"

namespace fcrn {

BSplineBasis::BSplineBasis(int num_basis, int degree) : num_basis_(num_basis), degree_(degree) {
    if (degree < 0 || num_basis < degree + 1) throw invalid_argument("B-spline basis needs num_basis > degree");
    const int interior = num_basis - degree - 1;
    knots_.assign(static_cast<std::size_t>(degree + 1), 0.0);
    for (int k = 1; k <= interior; ++k) knots_.push_back(static_cast<double>(k) / static_cast<double>(interior + 1));
    knots_.insert(knots_.end(), static_cast<std::size_t>(degree + 1), 1.0);
}

std::vector<double> BSplineBasis::eval(double tau) const {
    if (!(tau >= 0.0 && tau <= 1.0)) throw invalid_argument("bspline_eval: tau outside [0, 1]");
    const auto& t = knots_;
    const int p = degree_;
    const int n = num_basis_;
    // Knot span: largest i with t[i] <= tau < t[i+1]; tau = 1 belongs to the last nonempty span.
    int span = p;
    if (tau >= t[static_cast<std::size_t>(n)]) {
        span = n - 1;
    } else {
        while (span < n - 1 && tau >= t[static_cast<std::size_t>(span + 1)]) ++span;
    }
    // Degree-0 start, then Cox-de Boor raises the degree in place.
    std::vector<double> nvals(static_cast<std::size_t>(p + 1), 0.0);
    nvals[0] = 1.0;
    std::vector<double> left(static_cast<std::size_t>(p + 1)), right(static_cast<std::size_t>(p + 1));
    for (int j = 1; j <= p; ++j) {
        left[static_cast<std::size_t>(j)] = tau - t[static_cast<std::size_t>(span + 1 - j)];
        right[static_cast<std::size_t>(j)] = t[static_cast<std::size_t>(span + j)] - tau;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double denom = right[static_cast<std::size_t>(r + 1)] + left[static_cast<std::size_t>(j - r)];
            const double temp = denom != 0.0 ? nvals[static_cast<std::size_t>(r)] / denom : 0.0;
            nvals[static_cast<std::size_t>(r)] = saved + right[static_cast<std::size_t>(r + 1)] * temp;
            saved = left[static_cast<std::size_t>(j - r)] * temp;
        }
        nvals[static_cast<std::size_t>(j)] = saved;
    }
    std::vector<double> out(static_cast<std::size_t>(n), 0.0);
    for (int r = 0; r <= p; ++r) out[static_cast<std::size_t>(span - p + r)] = nvals[static_cast<std::size_t>(r)];
    return out;
}

namespace {

double normal_sd(const NormalSpec& s) { return s.sd; }
double uniform_sd(const UniformSpec& s) { return (s.hi - s.lo) / std::sqrt(12.0); }

/// Visible covariates centered and scaled by their generating moments.
Matrix standardize(const SimConfig& cfg, const Matrix& visible) {
    Matrix z = visible;
    for (int k = 0; k < 5; ++k) {
        z.col(k).array() = (visible.col(k).array() - cfg.normals[k].mean) / normal_sd(cfg.normals[k]);
        const auto& u = cfg.uniforms[k];
        z.col(5 + k).array() = (visible.col(5 + k).array() - 0.5 * (u.lo + u.hi)) / uniform_sd(u);
    }
    return z;
}

double weight_function(int signal, double tau) {
    return std::sin(static_cast<double>(signal + 1) * std::numbers::pi * tau);
}

nlohmann::json effects_json(const CauseEffects& e) {
    return {{"visible", e.visible}, {"hidden", e.hidden}, {"functional", e.functional}};
}

CauseEffects effects_from(const nlohmann::json& j, const CauseEffects& def) {
    CauseEffects e = def;
    if (j.contains("visible")) e.visible = j.at("visible").get<std::array<double, 10>>();
    if (j.contains("hidden")) e.hidden = j.at("hidden").get<std::array<double, 5>>();
    if (j.contains("functional")) e.functional = j.at("functional").get<std::array<double, 3>>();
    return e;
}

}  // namespace

nlohmann::json SimConfig::to_json() const {
    nlohmann::json j;
    j["n"] = n;
    j["n_train"] = n_train;
    j["n_test"] = n_test;
    j["seed"] = seed;
    nlohmann::json nj = nlohmann::json::array();
    for (const auto& s : normals) nj.push_back({s.mean, s.sd});
    j["normals"] = nj;
    nlohmann::json uj = nlohmann::json::array();
    for (const auto& s : uniforms) uj.push_back({s.lo, s.hi});
    j["uniforms"] = uj;
    nlohmann::json hj = nlohmann::json::array();
    for (const auto& s : hidden) hj.push_back({s.a, s.b});
    j["hidden"] = hj;
    j["functional"] = functional;
    j["num_signals"] = num_signals;
    j["spline_basis"] = spline_basis;
    j["sample_points"] = sample_points;
    j["coef_covariate_corr"] = coef_covariate_corr;
    j["lognormal_mu"] = lognormal_mu;
    j["lognormal_sigma"] = lognormal_sigma;
    j["gamma_shape"] = gamma_shape;
    j["gamma_scale"] = gamma_scale;
    j["weibull_shape"] = weibull_shape;
    j["weibull_scale"] = weibull_scale;
    j["exp_rate"] = exp_rate;
    j["frailty"] = frailty;
    j["effects1"] = effects_json(effects1);
    j["effects2"] = effects_json(effects2);
    j["c_max"] = c_max;
    j["admin_censor"] = admin_censor;
    j["missing_rate"] = missing_rate;
    j["mar_anchors"] = mar_anchors;
    j["mar_strength"] = mar_strength;
    return j;
}

SimConfig SimConfig::from_json(const nlohmann::json& j) {
    SimConfig c;
    if (!j.is_object()) throw config_error("simulation config must be a JSON object");
    const auto known = c.to_json();
    for (const auto& [k, v] : j.items()) {
        if (!known.contains(k)) throw config_error("unknown simulation config key '" + k + "'");
    }
    try {
        c.n = j.value("n", c.n);
        c.n_train = j.value("n_train", c.n_train);
        c.n_test = j.value("n_test", c.n_test);
        c.seed = j.value("seed", c.seed);
        if (j.contains("normals")) {
            for (std::size_t k = 0; k < 5; ++k) c.normals[k] = {j["normals"].at(k).at(0).get<double>(), j["normals"].at(k).at(1).get<double>()};
        }
        if (j.contains("uniforms")) {
            for (std::size_t k = 0; k < 5; ++k) c.uniforms[k] = {j["uniforms"].at(k).at(0).get<double>(), j["uniforms"].at(k).at(1).get<double>()};
        }
        if (j.contains("hidden")) {
            for (std::size_t k = 0; k < 5; ++k) c.hidden[k] = {j["hidden"].at(k).at(0).get<int>(), j["hidden"].at(k).at(1).get<int>()};
        }
        c.functional = j.value("functional", c.functional);
        c.num_signals = j.value("num_signals", c.num_signals);
        c.spline_basis = j.value("spline_basis", c.spline_basis);
        c.sample_points = j.value("sample_points", c.sample_points);
        c.coef_covariate_corr = j.value("coef_covariate_corr", c.coef_covariate_corr);
        c.lognormal_mu = j.value("lognormal_mu", c.lognormal_mu);
        c.lognormal_sigma = j.value("lognormal_sigma", c.lognormal_sigma);
        c.gamma_shape = j.value("gamma_shape", c.gamma_shape);
        c.gamma_scale = j.value("gamma_scale", c.gamma_scale);
        c.weibull_shape = j.value("weibull_shape", c.weibull_shape);
        c.weibull_scale = j.value("weibull_scale", c.weibull_scale);
        c.exp_rate = j.value("exp_rate", c.exp_rate);
        c.frailty = j.value("frailty", c.frailty);
        if (j.contains("effects1")) c.effects1 = effects_from(j["effects1"], c.effects1);
        if (j.contains("effects2")) c.effects2 = effects_from(j["effects2"], c.effects2);
        c.c_max = j.value("c_max", c.c_max);
        c.admin_censor = j.value("admin_censor", c.admin_censor);
        c.missing_rate = j.value("missing_rate", c.missing_rate);
        if (j.contains("mar_anchors")) c.mar_anchors = j["mar_anchors"].get<std::array<int, 2>>();
        c.mar_strength = j.value("mar_strength", c.mar_strength);
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("simulation config: ") + e.what());
    }
    c.validate();
    return c;
}

void SimConfig::validate() const {
    if (n < 1) throw config_error("simulation: n must be >= 1");
    if (n_train < 0 || n_test < 0 || n_train + n_test != n) throw config_error("simulation: n_train + n_test must equal n");
    if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw config_error("simulation: missing_rate must be in [0, 1)");
    if (num_signals < 0 || num_signals > 3) throw config_error("simulation: num_signals must be in 0..3");
    if (sample_points < 2) throw config_error("simulation: sample_points must be >= 2");
    if (mar_anchors[0] == mar_anchors[1] || std::min(mar_anchors[0], mar_anchors[1]) < 0 ||
        std::max(mar_anchors[0], mar_anchors[1]) > 9) {
        throw config_error("simulation: MAR anchors must be two distinct columns in 0..9");
    }
    for (const auto& h : hidden) {
        if (h.a < 0 || h.a > 9 || h.b < 0 || h.b > 9) throw config_error("simulation: hidden feature column out of range");
    }
    if (!(c_max >= 0.0) || !(admin_censor > 0.0)) throw config_error("simulation: censoring bounds must be positive");
}

TabularDraw gen_tabular(const SimConfig& cfg, std::mt19937_64& rng) {
    TabularDraw out;
    out.visible.resize(cfg.n, 10);
    out.hidden.resize(cfg.n, 5);
    for (int i = 0; i < cfg.n; ++i) {
        for (int k = 0; k < 5; ++k) {
            std::normal_distribution<double> d(cfg.normals[k].mean, cfg.normals[k].sd);
            out.visible(i, k) = d(rng);
        }
        for (int k = 0; k < 5; ++k) {
            std::uniform_real_distribution<double> d(cfg.uniforms[k].lo, cfg.uniforms[k].hi);
            out.visible(i, 5 + k) = d(rng);
        }
    }
    const Matrix z = standardize(cfg, out.visible);
    for (int k = 0; k < 5; ++k) {
        const auto& h = cfg.hidden[k];
        out.hidden.col(k) = z.col(h.a).cwiseProduct(z.col(h.b));
        // Squares are centered so that the hidden term has mean zero.
        if (h.a == h.b) out.hidden.col(k).array() -= 1.0;
    }
    return out;
}

FunctionalDraw gen_functional(const SimConfig& cfg, const Matrix& visible, std::mt19937_64& rng) {
    FunctionalDraw out;
    const int J = cfg.sample_points;
    const int S = cfg.functional ? cfg.num_signals : 0;
    out.scores = Matrix::Zero(cfg.n, 3);
    if (S == 0) return out;
    for (int j = 0; j < J; ++j) out.taus.push_back(static_cast<double>(j) / static_cast<double>(J - 1));
    out.taus.back() = 1.0;

    const BSplineBasis basis(cfg.spline_basis, 3);
    Matrix B(J, cfg.spline_basis);
    for (int j = 0; j < J; ++j) {
        const auto v = basis.eval(out.taus[static_cast<std::size_t>(j)]);
        for (int k = 0; k < cfg.spline_basis; ++k) B(j, k) = v[static_cast<std::size_t>(k)];
    }
    const auto w = trapezoid_weights(out.taus);
    const Matrix z = standardize(cfg, visible);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double rho = cfg.coef_covariate_corr;
    for (int s = 0; s < S; ++s) {
        // Functional score = sum_j w_j x(tau_j) psi_s(tau_j) = c . loading; scaled to unit variance.
        Vector loading = Vector::Zero(cfg.spline_basis);
        for (int j = 0; j < J; ++j) loading += w[static_cast<std::size_t>(j)] * weight_function(s, out.taus[static_cast<std::size_t>(j)]) * B.row(j).transpose();
        const double score_sd = loading.norm();

        Matrix coef(cfg.n, cfg.spline_basis);
        for (int i = 0; i < cfg.n; ++i) {
            for (int k = 0; k < cfg.spline_basis; ++k) coef(i, k) = normal(rng);
            if (rho != 0.0) coef(i, 0) = rho * z(i, s) + std::sqrt(1.0 - rho * rho) * coef(i, 0);
        }
        out.curves.push_back(coef * B.transpose());
        out.scores.col(s) = (coef * loading) / (score_sd > 0.0 ? score_sd : 1.0);
    }
    return out;
}

Outcomes gen_outcomes(const SimConfig& cfg, const TabularDraw& tab, const Matrix& functional_scores, std::mt19937_64& rng) {
    const Matrix z = standardize(cfg, tab.visible);
    auto linear = [&](const CauseEffects& e, int i) {
        double eta = 0.0;
        for (int k = 0; k < 10; ++k) eta += e.visible[static_cast<std::size_t>(k)] * z(i, k);
        for (int k = 0; k < 5; ++k) eta += e.hidden[static_cast<std::size_t>(k)] * tab.hidden(i, k);
        for (int k = 0; k < 3 && k < functional_scores.cols(); ++k) eta += e.functional[static_cast<std::size_t>(k)] * functional_scores(i, k);
        return eta;
    };
    std::normal_distribution<double> normal(0.0, 1.0);
    std::gamma_distribution<double> gamma(cfg.gamma_shape, cfg.gamma_scale);
    std::exponential_distribution<double> frail2(cfg.exp_rate);
    std::exponential_distribution<double> unit_exp(1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    Outcomes out;
    out.time.resize(static_cast<std::size_t>(cfg.n));
    out.cause.resize(static_cast<std::size_t>(cfg.n));
    for (int i = 0; i < cfg.n; ++i) {
        const double eta1 = linear(cfg.effects1, i);
        const double eta2 = linear(cfg.effects2, i);
        const double v1 = cfg.frailty ? gamma(rng) : 1.0;
        const double v2 = cfg.frailty ? frail2(rng) : 1.0;
        const double t1 = std::exp(cfg.lognormal_mu - eta1 + cfg.lognormal_sigma * normal(rng)) / v1;
        const double t2 = cfg.weibull_scale * std::pow(unit_exp(rng) / (v2 * std::exp(eta2)), 1.0 / cfg.weibull_shape);
        const double c = std::min(cfg.c_max * unif(rng), cfg.admin_censor);
        const auto I = static_cast<std::size_t>(i);
        if (t1 <= t2 && t1 <= c) {
            out.time[I] = t1;
            out.cause[I] = 1;
        } else if (t2 < t1 && t2 <= c) {
            out.time[I] = t2;
            out.cause[I] = 2;
        } else {
            out.time[I] = c;
            out.cause[I] = 0;
        }
    }
    return out;
}

MissingMask apply_mar(const Matrix& x, double rate, std::array<int, 2> anchors, double strength, std::mt19937_64& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw config_error("apply_mar: rate must be in [0, 1)");
    const auto n = x.rows();
    const auto P = x.cols();
    MissingMask mask = MissingMask::Constant(n, P, false);
    if (rate == 0.0 || n == 0) return mask;
    for (int a : anchors) {
        if (a < 0 || a >= P) throw config_error("apply_mar: anchor column out of range");
    }
    const double total = static_cast<double>(n * P);
    const double maskable = static_cast<double>(n * (P - 2));
    if (rate * total > maskable) {
        throw config_error("apply_mar: target rate " + std::to_string(rate) + " unreachable with two always-observed anchors");
    }
    // Standardized anchor score per row.
    Vector score = Vector::Zero(n);
    for (int a : anchors) {
        const double mean = x.col(a).mean();
        const double sd = std::sqrt((x.col(a).array() - mean).square().sum() / std::max<double>(1.0, static_cast<double>(n - 1)));
        score.array() += (x.col(a).array() - mean) / (sd > 0.0 ? sd : 1.0);
    }
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Matrix u(n, P);
    for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = unif(rng);

    auto count_at = [&](double alpha) {
        std::size_t c = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double p = sigmoid(alpha + strength * score[i]);
            for (Eigen::Index j = 0; j < P; ++j) {
                if (j == anchors[0] || j == anchors[1]) continue;
                if (u(i, j) < p) ++c;
            }
        }
        return c;
    };
    const double target = rate * total;
    double lo = -40.0, hi = 40.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (static_cast<double>(count_at(mid)) < target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    const double alpha = std::abs(static_cast<double>(count_at(lo)) - target) <= std::abs(static_cast<double>(count_at(hi)) - target) ? lo : hi;
    std::size_t realized = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double p = sigmoid(alpha + strength * score[i]);
        for (Eigen::Index j = 0; j < P; ++j) {
            if (j == anchors[0] || j == anchors[1]) continue;
            mask(i, j) = u(i, j) < p;
            realized += mask(i, j);
        }
    }
    if (std::abs(static_cast<double>(realized) / total - rate) > 0.01) {
        throw config_error("apply_mar: could not reach missing rate " + std::to_string(rate));
    }
    return mask;
}

SimResult simulate(const SimConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    const TabularDraw tab = gen_tabular(cfg, rng);
    const FunctionalDraw fun = gen_functional(cfg, tab.visible, rng);
    const Outcomes out = gen_outcomes(cfg, tab, fun.scores, rng);
    const MissingMask mask = apply_mar(tab.visible, cfg.missing_rate, cfg.mar_anchors, cfg.mar_strength, rng);

    SimResult res;
    auto& ds = res.full;
    for (int k = 1; k <= 5; ++k) ds.covariate_names.push_back("norm" + std::to_string(k));
    for (int k = 1; k <= 5; ++k) ds.covariate_names.push_back("unif" + std::to_string(k));
    for (std::size_t s = 0; s < fun.curves.size(); ++s) ds.signal_names.push_back("signal" + std::to_string(s + 1));
    const int width = static_cast<int>(std::to_string(cfg.n).size());
    for (int i = 0; i < cfg.n; ++i) {
        SubjectRecord r;
        std::string num = std::to_string(i + 1);
        r.id = "s" + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num;
        for (int k = 0; k < 10; ++k) {
            r.missing_mask.push_back(mask(i, k));
            r.x.push_back(mask(i, k) ? kMissing : tab.visible(i, k));
        }
        for (std::size_t s = 0; s < fun.curves.size(); ++s) {
            FunctionalCurve c;
            c.name = ds.signal_names[s];
            c.taus = fun.taus;
            c.values.assign(fun.curves[s].row(i).data(), fun.curves[s].row(i).data() + fun.curves[s].cols());
            r.curves.push_back(std::move(c));
        }
        r.time = out.time[static_cast<std::size_t>(i)];
        r.cause = out.cause[static_cast<std::size_t>(i)];
        ds.subjects.push_back(std::move(r));
    }

    std::vector<std::size_t> order(static_cast<std::size_t>(cfg.n));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> tr(order.begin(), order.begin() + cfg.n_train);
    std::vector<std::size_t> te(order.begin() + cfg.n_train, order.end());
    std::sort(tr.begin(), tr.end());
    std::sort(te.begin(), te.end());
    res.train = ds.subset(tr);
    res.test = ds.subset(te);

    std::array<int, 3> counts{0, 0, 0};
    for (const auto& s : ds.subjects) ++counts[static_cast<std::size_t>(s.cause)];
    res.manifest = {{"generator", "fcrn-synth"},
                    {"config", cfg.to_json()},
                    {"covariates", ds.covariate_names},
                    {"signals", ds.signal_names},
                    {"cause_counts", counts},
                    {"missing_cells", ds.missing_count()},
                    {"n_train", res.train.size()},
                    {"n_test", res.test.size()}};
    return res;
}

}  // namespace fcrn
