#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace fcrn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// A trainable array plus its gradient accumulator.
struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;

    Parameter() = default;
    Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}
    std::size_t size() const noexcept { return static_cast<std::size_t>(value.size()); }
};

/// Owns parameters with stable addresses; graphs hold pointers into it.
class ParameterStore {
public:
    std::size_t add(std::string name, Matrix value);
    Parameter& operator[](std::size_t i) { return params_.at(i); }
    const Parameter& operator[](std::size_t i) const { return params_.at(i); }
    std::size_t size() const noexcept { return params_.size(); }
    std::size_t scalar_count() const noexcept;
    void zero_grad();

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::vector<Parameter> params_;
};

/// Glorot-uniform matrix: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
Matrix glorot_uniform(Eigen::Index fan_out, Eigen::Index fan_in, std::mt19937_64& rng);

enum class Reduction { Mean, Sum };

/// Define-by-run reverse-mode tape. Values are computed as nodes are added;
/// backward() accumulates into Parameter::grad and into input leaves marked
/// differentiable. One graph per forward pass; not thread-safe.
class Graph {
public:
    using NodeId = std::size_t;

    NodeId constant(Matrix value);
    NodeId input(Matrix value, bool requires_grad);
    NodeId parameter(Parameter& p);

    NodeId matmul(NodeId a, NodeId b);
    /// x (n x in) * W^T (in x out) + b (1 x out), row-broadcast bias.
    NodeId dense(NodeId x, NodeId w, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double s);
    NodeId relu(NodeId a);
    NodeId tanh(NodeId a);
    NodeId sigmoid(NodeId a);
    NodeId softmax_rows(NodeId a);
    /// log(max(a, floor)); zero gradient where clamped.
    NodeId log_clamped(NodeId a, double floor = 1e-12);
    NodeId sum(NodeId a);
    NodeId mean(NodeId a);
    NodeId concat_cols(std::span<const NodeId> parts);
    /// Output row k is input row indices[k]; backward scatter-adds.
    NodeId gather_rows(NodeId a, std::vector<std::size_t> indices);
    /// Multiplies row j by factors[j].
    NodeId scale_rows(NodeId a, Vector factors);

    /// Fused multinomial negative log-likelihood on rows of logits; -log p clamped at -log(1e-12).
    NodeId softmax_cross_entropy(NodeId logits, std::vector<int> targets, Vector weights, Reduction r);
    /// Fused weighted binary cross-entropy on an n x 1 logit column. Mean divides by sum of weights.
    NodeId sigmoid_binary_cross_entropy(NodeId logits, std::vector<int> targets, Vector weights, Reduction r);

    const Matrix& value(NodeId id) const;
    double scalar(NodeId id) const;
    /// Gradient of the last backward() loss w.r.t. node `id` (zeros if unreachable).
    const Matrix& grad(NodeId id) const;

    void backward(NodeId loss);
    std::size_t size() const noexcept { return nodes_.size(); }
    void clear();

private:
    enum class Op {
        Leaf, Param, MatMul, Dense, Add, Sub, Mul, Scale, Relu, Tanh, Sigmoid, Softmax, Log,
        Sum, Mean, Concat, Gather, ScaleRows, SoftmaxXent, SigmoidBce,
    };

    struct Node {
        Op op = Op::Leaf;
        std::vector<NodeId> in;
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        Parameter* param = nullptr;
        double scalar = 0.0;
        std::vector<std::size_t> indices;
        std::vector<int> targets;
        Vector weights;
        Matrix cache;  // op-specific (softmax probabilities, clamp masks, ...)
        Reduction reduction = Reduction::Mean;
    };

    NodeId push(Node node);
    const Node& at(NodeId id) const;
    bool any_requires(std::initializer_list<NodeId> ids) const;

    std::vector<Node> nodes_;
    bool has_backward_ = false;
};

/// Row-wise softmax with max subtraction.
Matrix softmax(const Matrix& logits);
double sigmoid(double u);

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<Matrix> m;
    std::vector<Matrix> v;
};

AdamState make_adam_state(const ParameterStore& params);

/// One bias-corrected Adam update from the gradients currently held in `params`.
void adam_step(ParameterStore& params, AdamState& state, double lr);

}  // namespace fcrn
