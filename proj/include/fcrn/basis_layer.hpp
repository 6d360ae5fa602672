#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fcrn/survival_data.hpp"
#include "fcrn/tensor.hpp"

namespace fcrn {

/// Composite trapezoid weights for strictly increasing sample points.
std::vector<double> trapezoid_weights(std::span<const double> taus);

/// Piecewise-linear interpolation of a curve onto `grid`; flat beyond the curve's end points.
std::vector<double> resample_linear(const FunctionalCurve& curve, std::span<const double> grid);

/// Union of the sample points of signal `signal` across the dataset. Falls back to a uniform
/// grid of `cap` points on [0, 1] when the union is larger than `cap`.
std::vector<double> canonical_grid(const Dataset& ds, std::size_t signal, std::size_t cap = 101);

/// One scalar-to-scalar micro-network per basis node. Hidden layers use tanh, output is linear.
/// An empty `hidden` list gives a single affine map B(tau) = w * tau + b.
class BasisLayer {
public:
    BasisLayer() = default;
    BasisLayer(std::string signal, int num_basis, std::vector<double> grid, std::vector<int> hidden,
               ParameterStore& store, std::mt19937_64& rng);
    /// Reattach to parameters already present in `store`, starting at `first_param`.
    BasisLayer(std::string signal, int num_basis, std::vector<double> grid, std::vector<int> hidden,
               std::size_t first_param);

    const std::string& signal() const noexcept { return signal_; }
    int num_basis() const noexcept { return num_basis_; }
    const std::vector<double>& grid() const noexcept { return grid_; }
    const std::vector<double>& weights() const noexcept { return weights_; }
    const std::vector<int>& hidden() const noexcept { return hidden_; }
    std::size_t first_param() const noexcept { return first_param_; }
    std::size_t param_count() const noexcept { return static_cast<std::size_t>(num_basis_) * (hidden_.size() + 1) * 2; }

    /// J x D node with entry (j, d) = B_d(tau_j), recorded on `g`.
    Graph::NodeId basis_values(Graph& g, ParameterStore& store) const;
    /// n x D coefficients for an n x J block of curves sampled on grid().
    Graph::NodeId project(Graph& g, ParameterStore& store, Graph::NodeId curves) const;

    /// Graph-free evaluation of B_d(tau).
    double micro_forward(double tau, int d, const ParameterStore& store) const;
    /// Graph-free projection of a curve already on grid().
    Vector project_values(std::span<const double> values, const ParameterStore& store) const;

private:
    std::string signal_;
    int num_basis_ = 0;
    std::vector<double> grid_;
    std::vector<double> weights_;
    std::vector<int> hidden_;
    std::size_t first_param_ = 0;
};

}  // namespace fcrn
