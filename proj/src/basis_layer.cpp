#include "fcrn/basis_layer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fcrn/error.hpp"

namespace fcrn {

std::vector<double> trapezoid_weights(std::span<const double> taus) {
    const std::size_t J = taus.size();
    if (J < 2) throw invalid_argument("trapezoid_weights: need at least 2 points");
    for (std::size_t j = 1; j < J; ++j) {
        if (!(taus[j] > taus[j - 1])) throw invalid_argument("trapezoid_weights: points must be strictly increasing");
    }
    std::vector<double> w(J);
    w[0] = 0.5 * (taus[1] - taus[0]);
    w[J - 1] = 0.5 * (taus[J - 1] - taus[J - 2]);
    for (std::size_t j = 1; j + 1 < J; ++j) w[j] = 0.5 * (taus[j + 1] - taus[j - 1]);
    return w;
}

std::vector<double> resample_linear(const FunctionalCurve& curve, std::span<const double> grid) {
    curve.validate();
    const auto& t = curve.taus;
    const auto& v = curve.values;
    std::vector<double> out(grid.size());
    std::size_t k = 0;
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double x = grid[j];
        if (x <= t.front()) {
            out[j] = v.front();
            continue;
        }
        if (x >= t.back()) {
            out[j] = v.back();
            continue;
        }
        while (k + 1 < t.size() && t[k + 1] < x) ++k;
        while (k > 0 && t[k] > x) --k;
        const double a = (x - t[k]) / (t[k + 1] - t[k]);
        out[j] = (1.0 - a) * v[k] + a * v[k + 1];
    }
    return out;
}

std::vector<double> canonical_grid(const Dataset& ds, std::size_t signal, std::size_t cap) {
    std::vector<double> all;
    for (const auto& s : ds.subjects) {
        const auto& c = s.curves.at(signal);
        all.insert(all.end(), c.taus.begin(), c.taus.end());
    }
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    if (all.size() < 2) throw data_error("canonical_grid: signal has fewer than 2 distinct sample points");
    if (all.size() <= cap) return all;
    std::vector<double> uniform(cap);
    for (std::size_t j = 0; j < cap; ++j) uniform[j] = static_cast<double>(j) / static_cast<double>(cap - 1);
    return uniform;
}

BasisLayer::BasisLayer(std::string signal, int num_basis, std::vector<double> grid, std::vector<int> hidden,
                       std::size_t first_param)
    : signal_(std::move(signal)),
      num_basis_(num_basis),
      grid_(std::move(grid)),
      weights_(trapezoid_weights(grid_)),
      hidden_(std::move(hidden)),
      first_param_(first_param) {
    if (num_basis_ < 1) throw invalid_argument("basis layer needs D >= 1");
}

BasisLayer::BasisLayer(std::string signal, int num_basis, std::vector<double> grid, std::vector<int> hidden,
                       ParameterStore& store, std::mt19937_64& rng)
    : BasisLayer(std::move(signal), num_basis, std::move(grid), std::move(hidden), store.size()) {
    for (int d = 0; d < num_basis_; ++d) {
        int fan_in = 1;
        for (std::size_t k = 0; k <= hidden_.size(); ++k) {
            const int fan_out = k < hidden_.size() ? hidden_[k] : 1;
            const std::string prefix = "basis." + signal_ + "." + std::to_string(d) + "." + std::to_string(k);
            store.add(prefix + ".W", glorot_uniform(fan_out, fan_in, rng));
            store.add(prefix + ".b", Matrix::Zero(1, fan_out));
            fan_in = fan_out;
        }
    }
}

Graph::NodeId BasisLayer::basis_values(Graph& g, ParameterStore& store) const {
    Matrix tau(static_cast<Eigen::Index>(grid_.size()), 1);
    for (std::size_t j = 0; j < grid_.size(); ++j) tau(static_cast<Eigen::Index>(j), 0) = grid_[j];
    const auto tau_node = g.constant(std::move(tau));
    std::vector<Graph::NodeId> columns;
    std::size_t p = first_param_;
    for (int d = 0; d < num_basis_; ++d) {
        auto h = tau_node;
        for (std::size_t k = 0; k <= hidden_.size(); ++k) {
            const auto w = g.parameter(store[p++]);
            const auto b = g.parameter(store[p++]);
            h = g.dense(h, w, b);
            if (k < hidden_.size()) h = g.tanh(h);
        }
        columns.push_back(h);
    }
    return g.concat_cols(columns);
}

Graph::NodeId BasisLayer::project(Graph& g, ParameterStore& store, Graph::NodeId curves) const {
    if (g.value(curves).cols() != static_cast<Eigen::Index>(grid_.size())) {
        throw data_error("basis layer '" + signal_ + "': curve block width does not match the layer grid");
    }
    const auto basis = basis_values(g, store);
    const auto weighted = g.scale_rows(basis, Eigen::Map<const Vector>(weights_.data(), static_cast<Eigen::Index>(weights_.size())));
    return g.matmul(curves, weighted);
}

double BasisLayer::micro_forward(double tau, int d, const ParameterStore& store) const {
    if (d < 0 || d >= num_basis_) throw invalid_argument("micro_forward: basis index out of range");
    std::size_t p = first_param_ + static_cast<std::size_t>(d) * (hidden_.size() + 1) * 2;
    Eigen::RowVectorXd h = Eigen::RowVectorXd::Constant(1, tau);
    for (std::size_t k = 0; k <= hidden_.size(); ++k) {
        const auto& w = store[p++].value;
        const auto& b = store[p++].value;
        Eigen::RowVectorXd next = h * w.transpose() + b.row(0);
        if (k < hidden_.size()) next = next.array().tanh().matrix();
        h = std::move(next);
    }
    return h(0);
}

Vector BasisLayer::project_values(std::span<const double> values, const ParameterStore& store) const {
    if (values.size() != grid_.size()) throw data_error("project: curve not sampled on the layer grid");
    Vector a = Vector::Zero(num_basis_);
    for (int d = 0; d < num_basis_; ++d) {
        for (std::size_t j = 0; j < grid_.size(); ++j) a[d] += weights_[j] * micro_forward(grid_[j], d, store) * values[j];
    }
    return a;
}

}  // namespace fcrn
