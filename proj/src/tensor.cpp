#include "fcrn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fcrn/error.hpp"

namespace fcrn {

namespace {

constexpr double kLogFloor = 1e-12;

double softplus(double u) { return std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u))); }

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw invalid_argument(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                               std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                               std::to_string(b.cols()));
    }
}

}  // namespace

std::size_t ParameterStore::add(std::string name, Matrix value) {
    params_.emplace_back(std::move(name), std::move(value));
    return params_.size() - 1;
}

std::size_t ParameterStore::scalar_count() const noexcept {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& p : params_) p.grad.setZero(p.value.rows(), p.value.cols());
}

Matrix glorot_uniform(Eigen::Index fan_out, Eigen::Index fan_in, std::mt19937_64& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-a, a);
    Matrix w(fan_out, fan_in);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
    return w;
}

Matrix softmax(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double mx = logits.row(r).maxCoeff();
        out.row(r) = (logits.row(r).array() - mx).exp();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

double sigmoid(double u) {
    if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

Graph::NodeId Graph::push(Node node) {
    has_backward_ = false;
    nodes_.push_back(std::move(node));
    return nodes_.size() - 1;
}

const Graph::Node& Graph::at(NodeId id) const {
    if (id >= nodes_.size()) throw state_error("graph: unknown node " + std::to_string(id));
    return nodes_[id];
}

bool Graph::any_requires(std::initializer_list<NodeId> ids) const {
    for (auto id : ids) {
        if (at(id).requires_grad) return true;
    }
    return false;
}

void Graph::clear() {
    nodes_.clear();
    has_backward_ = false;
}

Graph::NodeId Graph::constant(Matrix value) {
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
}

Graph::NodeId Graph::input(Matrix value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    return push(std::move(n));
}

Graph::NodeId Graph::parameter(Parameter& p) {
    Node n;
    n.op = Op::Param;
    n.value = p.value;
    n.param = &p;
    n.requires_grad = true;
    return push(std::move(n));
}

Graph::NodeId Graph::matmul(NodeId a, NodeId b) {
    const auto& A = at(a).value;
    const auto& B = at(b).value;
    if (A.cols() != B.rows()) throw invalid_argument("matmul: inner dimensions differ");
    Node n;
    n.op = Op::MatMul;
    n.in = {a, b};
    n.value = A * B;
    n.requires_grad = any_requires({a, b});
    return push(std::move(n));
}

Graph::NodeId Graph::dense(NodeId x, NodeId w, NodeId b) {
    const auto& X = at(x).value;
    const auto& W = at(w).value;
    const auto& B = at(b).value;
    if (X.cols() != W.cols() || B.rows() != 1 || B.cols() != W.rows()) {
        throw invalid_argument("dense: input width " + std::to_string(X.cols()) + " vs weight " +
                               std::to_string(W.rows()) + "x" + std::to_string(W.cols()) + ", bias " +
                               std::to_string(B.rows()) + "x" + std::to_string(B.cols()));
    }
    Node n;
    n.op = Op::Dense;
    n.in = {x, w, b};
    n.value = X * W.transpose();
    n.value.rowwise() += B.row(0);
    n.requires_grad = any_requires({x, w, b});
    return push(std::move(n));
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
    require_same_shape(at(a).value, at(b).value, "add");
    Node n;
    n.op = Op::Add;
    n.in = {a, b};
    n.value = at(a).value + at(b).value;
    n.requires_grad = any_requires({a, b});
    return push(std::move(n));
}

Graph::NodeId Graph::sub(NodeId a, NodeId b) {
    require_same_shape(at(a).value, at(b).value, "sub");
    Node n;
    n.op = Op::Sub;
    n.in = {a, b};
    n.value = at(a).value - at(b).value;
    n.requires_grad = any_requires({a, b});
    return push(std::move(n));
}

Graph::NodeId Graph::mul(NodeId a, NodeId b) {
    require_same_shape(at(a).value, at(b).value, "mul");
    Node n;
    n.op = Op::Mul;
    n.in = {a, b};
    n.value = at(a).value.cwiseProduct(at(b).value);
    n.requires_grad = any_requires({a, b});
    return push(std::move(n));
}

Graph::NodeId Graph::scale(NodeId a, double s) {
    Node n;
    n.op = Op::Scale;
    n.in = {a};
    n.scalar = s;
    n.value = at(a).value * s;
    n.requires_grad = at(a).requires_grad;
    return push(std::move(n));
}

Graph::NodeId Graph::relu(NodeId a) {
    Node n;
    n.op = Op::Relu;
    n.in = {a};
    n.value = at(a).value.cwiseMax(0.0);
    n.requires_grad = at(a).requires_grad;
    return push(std::move(n));
}

Graph::NodeId Graph::tanh(NodeId a) {
    Node n;
    n.op = Op::Tanh;
    n.in = {a};
    n.value = at(a).value.array().tanh().matrix();
    n.requires_grad = at(a).requires_grad;
    return push(std::move(n));
}

Graph::NodeId Graph::sigmoid(NodeId a) {
    Node n;
    n.op = Op::Sigmoid;
    n.in = {a};
    n.value = at(a).value.unaryExpr([](double u) { return fcrn::sigmoid(u); });
    n.requires_grad = at(a).requires_grad;
    return push(std::move(n));
}

Graph::NodeId Graph::softmax_rows(NodeId a) {
    Node n;
    n.op = Op::Softmax;
    n.in = {a};
    n.value = softmax(at(a).value);
    n.requires_grad = at(a).requires_grad;
    return push(std::move(n));
}

Graph::NodeId Graph::log_clamped(NodeId a, double floor) {
    Node n;
    n.op = Op::Log;
    n.in = {a};
    n.scalar = floor;
    n.value = at(a).value.unaryExpr([floor](double v) { return std::log(std::max(v, floor)); });
    n.requires_grad = at(a).requires_grad;
    return push(std::move(n));
}

Graph::NodeId Graph::sum(NodeId a) {
    Node n;
    n.op = Op::Sum;
    n.in = {a};
    n.value = Matrix::Constant(1, 1, at(a).value.sum());
    n.requires_grad = at(a).requires_grad;
    return push(std::move(n));
}

Graph::NodeId Graph::mean(NodeId a) {
    const auto& A = at(a).value;
    if (A.size() == 0) throw invalid_argument("mean: empty input");
    Node n;
    n.op = Op::Mean;
    n.in = {a};
    n.value = Matrix::Constant(1, 1, A.mean());
    n.requires_grad = at(a).requires_grad;
    return push(std::move(n));
}

Graph::NodeId Graph::concat_cols(std::span<const NodeId> parts) {
    if (parts.empty()) throw invalid_argument("concat_cols: no inputs");
    const Eigen::Index rows = at(parts[0]).value.rows();
    Eigen::Index cols = 0;
    Node n;
    n.op = Op::Concat;
    for (auto p : parts) {
        if (at(p).value.rows() != rows) throw invalid_argument("concat_cols: row counts differ");
        cols += at(p).value.cols();
        n.requires_grad = n.requires_grad || at(p).requires_grad;
        n.in.push_back(p);
    }
    n.value.resize(rows, cols);
    Eigen::Index c = 0;
    for (auto p : parts) {
        const auto& v = at(p).value;
        n.value.middleCols(c, v.cols()) = v;
        c += v.cols();
    }
    return push(std::move(n));
}

Graph::NodeId Graph::gather_rows(NodeId a, std::vector<std::size_t> indices) {
    const auto& A = at(a).value;
    Node n;
    n.op = Op::Gather;
    n.in = {a};
    n.value.resize(static_cast<Eigen::Index>(indices.size()), A.cols());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] >= static_cast<std::size_t>(A.rows())) throw invalid_argument("gather_rows: index out of range");
        n.value.row(static_cast<Eigen::Index>(k)) = A.row(static_cast<Eigen::Index>(indices[k]));
    }
    n.indices = std::move(indices);
    n.requires_grad = at(a).requires_grad;
    return push(std::move(n));
}

Graph::NodeId Graph::scale_rows(NodeId a, Vector factors) {
    const auto& A = at(a).value;
    if (factors.size() != A.rows()) throw invalid_argument("scale_rows: factor count differs from rows");
    Node n;
    n.op = Op::ScaleRows;
    n.in = {a};
    n.value = factors.asDiagonal() * A;
    n.weights = std::move(factors);
    n.requires_grad = at(a).requires_grad;
    return push(std::move(n));
}

Graph::NodeId Graph::softmax_cross_entropy(NodeId logits, std::vector<int> targets, Vector weights, Reduction r) {
    const auto& Z = at(logits).value;
    const auto rows = Z.rows();
    if (static_cast<Eigen::Index>(targets.size()) != rows || weights.size() != rows) {
        throw invalid_argument("softmax_cross_entropy: targets/weights do not match logits rows");
    }
    Node n;
    n.op = Op::SoftmaxXent;
    n.in = {logits};
    n.cache = softmax(Z);
    n.reduction = r;
    const double cap = -std::log(kLogFloor);
    double total = 0.0;
    double wsum = 0.0;
    n.indices.assign(rows, 0);  // 1 where the clamp is active
    for (Eigen::Index i = 0; i < rows; ++i) {
        const int k = targets[i];
        if (k < 0 || k >= Z.cols()) throw invalid_argument("softmax_cross_entropy: target out of range");
        const double mx = Z.row(i).maxCoeff();
        const double lse = mx + std::log((Z.row(i).array() - mx).exp().sum());
        double nll = lse - Z(i, k);
        if (nll > cap) {
            nll = cap;
            n.indices[i] = 1;
        }
        total += weights[i] * nll;
        wsum += weights[i];
    }
    n.scalar = (r == Reduction::Mean) ? (wsum > 0.0 ? 1.0 / wsum : 0.0) : 1.0;
    n.value = Matrix::Constant(1, 1, total * n.scalar);
    n.targets = std::move(targets);
    n.weights = std::move(weights);
    n.requires_grad = at(logits).requires_grad;
    return push(std::move(n));
}

Graph::NodeId Graph::sigmoid_binary_cross_entropy(NodeId logits, std::vector<int> targets, Vector weights, Reduction r) {
    const auto& U = at(logits).value;
    const auto rows = U.rows();
    if (U.cols() != 1) throw invalid_argument("sigmoid_binary_cross_entropy: logits must be a column");
    if (static_cast<Eigen::Index>(targets.size()) != rows || weights.size() != rows) {
        throw invalid_argument("sigmoid_binary_cross_entropy: targets/weights do not match logits rows");
    }
    Node n;
    n.op = Op::SigmoidBce;
    n.in = {logits};
    n.reduction = r;
    const double cap = -std::log(kLogFloor);
    double total = 0.0;
    double wsum = 0.0;
    n.indices.assign(rows, 0);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const double u = U(i, 0);
        double nll = targets[i] == 1 ? softplus(-u) : softplus(u);
        if (nll > cap) {
            nll = cap;
            n.indices[i] = 1;
        }
        total += weights[i] * nll;
        wsum += weights[i];
    }
    n.scalar = (r == Reduction::Mean) ? (wsum > 0.0 ? 1.0 / wsum : 0.0) : 1.0;
    n.value = Matrix::Constant(1, 1, total * n.scalar);
    n.targets = std::move(targets);
    n.weights = std::move(weights);
    n.requires_grad = at(logits).requires_grad;
    return push(std::move(n));
}

const Matrix& Graph::value(NodeId id) const { return at(id).value; }

double Graph::scalar(NodeId id) const {
    const auto& v = at(id).value;
    if (v.size() != 1) throw invalid_argument("graph: node is not a scalar");
    return v(0, 0);
}

const Matrix& Graph::grad(NodeId id) const {
    if (!has_backward_) throw state_error("graph: grad requested before backward");
    return at(id).grad;
}

void Graph::backward(NodeId loss) {
    if (nodes_.empty()) throw state_error("backward called before any forward pass");
    const auto& L = at(loss).value;
    if (L.size() != 1) throw invalid_argument("backward: loss must be a scalar node");

    for (auto& n : nodes_) n.grad.setZero(n.value.rows(), n.value.cols());
    nodes_[loss].grad(0, 0) = 1.0;

    for (std::size_t idx = loss + 1; idx-- > 0;) {
        Node& n = nodes_[idx];
        if (!n.requires_grad) continue;
        const Matrix& g = n.grad;
        auto in_grad = [&](std::size_t k) -> Matrix* {
            Node& src = nodes_[n.in[k]];
            return src.requires_grad ? &src.grad : nullptr;
        };
        switch (n.op) {
        case Op::Leaf:
            break;
        case Op::Param:
            n.param->grad += g;
            break;
        case Op::MatMul: {
            if (auto* ga = in_grad(0)) *ga += g * nodes_[n.in[1]].value.transpose();
            if (auto* gb = in_grad(1)) *gb += nodes_[n.in[0]].value.transpose() * g;
            break;
        }
        case Op::Dense: {
            if (auto* gx = in_grad(0)) *gx += g * nodes_[n.in[1]].value;
            if (auto* gw = in_grad(1)) *gw += g.transpose() * nodes_[n.in[0]].value;
            if (auto* gb = in_grad(2)) *gb += g.colwise().sum();
            break;
        }
        case Op::Add:
            if (auto* ga = in_grad(0)) *ga += g;
            if (auto* gb = in_grad(1)) *gb += g;
            break;
        case Op::Sub:
            if (auto* ga = in_grad(0)) *ga += g;
            if (auto* gb = in_grad(1)) *gb -= g;
            break;
        case Op::Mul:
            if (auto* ga = in_grad(0)) *ga += g.cwiseProduct(nodes_[n.in[1]].value);
            if (auto* gb = in_grad(1)) *gb += g.cwiseProduct(nodes_[n.in[0]].value);
            break;
        case Op::Scale:
            if (auto* ga = in_grad(0)) *ga += g * n.scalar;
            break;
        case Op::Relu:
            if (auto* ga = in_grad(0)) {
                const auto& x = nodes_[n.in[0]].value;
                *ga += g.cwiseProduct(x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
            }
            break;
        case Op::Tanh:
            if (auto* ga = in_grad(0)) *ga += g.cwiseProduct((1.0 - n.value.array().square()).matrix());
            break;
        case Op::Sigmoid:
            if (auto* ga = in_grad(0)) *ga += g.cwiseProduct((n.value.array() * (1.0 - n.value.array())).matrix());
            break;
        case Op::Softmax:
            if (auto* ga = in_grad(0)) {
                for (Eigen::Index r = 0; r < g.rows(); ++r) {
                    const double dot = g.row(r).dot(n.value.row(r));
                    ga->row(r) += (n.value.row(r).array() * (g.row(r).array() - dot)).matrix();
                }
            }
            break;
        case Op::Log:
            if (auto* ga = in_grad(0)) {
                const auto& x = nodes_[n.in[0]].value;
                const double floor = n.scalar;
                for (Eigen::Index i = 0; i < x.size(); ++i) {
                    if (x.data()[i] > floor) ga->data()[i] += g.data()[i] / x.data()[i];
                }
            }
            break;
        case Op::Sum:
            if (auto* ga = in_grad(0)) ga->array() += g(0, 0);
            break;
        case Op::Mean:
            if (auto* ga = in_grad(0)) ga->array() += g(0, 0) / static_cast<double>(ga->size());
            break;
        case Op::Concat: {
            Eigen::Index c = 0;
            for (std::size_t k = 0; k < n.in.size(); ++k) {
                const auto w = nodes_[n.in[k]].value.cols();
                if (auto* gk = in_grad(k)) *gk += g.middleCols(c, w);
                c += w;
            }
            break;
        }
        case Op::Gather:
            if (auto* ga = in_grad(0)) {
                for (std::size_t k = 0; k < n.indices.size(); ++k) {
                    ga->row(static_cast<Eigen::Index>(n.indices[k])) += g.row(static_cast<Eigen::Index>(k));
                }
            }
            break;
        case Op::ScaleRows:
            if (auto* ga = in_grad(0)) *ga += n.weights.asDiagonal() * g;
            break;
        case Op::SoftmaxXent:
            if (auto* ga = in_grad(0)) {
                const double s = g(0, 0) * n.scalar;
                for (Eigen::Index i = 0; i < n.cache.rows(); ++i) {
                    if (n.indices[i]) continue;
                    Eigen::RowVectorXd d = n.cache.row(i);
                    d(n.targets[i]) -= 1.0;
                    ga->row(i) += s * n.weights[i] * d;
                }
            }
            break;
        case Op::SigmoidBce:
            if (auto* ga = in_grad(0)) {
                const double s = g(0, 0) * n.scalar;
                const auto& u = nodes_[n.in[0]].value;
                for (Eigen::Index i = 0; i < u.rows(); ++i) {
                    if (n.indices[i]) continue;
                    (*ga)(i, 0) += s * n.weights[i] * (fcrn::sigmoid(u(i, 0)) - (n.targets[i] == 1 ? 1.0 : 0.0));
                }
            }
            break;
        }
    }
    has_backward_ = true;
}

AdamState make_adam_state(const ParameterStore& params) {
    AdamState s;
    for (const auto& p : params) {
        s.m.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
        s.v.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
    return s;
}

void adam_step(ParameterStore& params, AdamState& state, double lr) {
    if (state.m.size() != params.size()) throw invalid_argument("adam_step: state does not match parameters");
    ++state.step;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k];
        auto& m = state.m[k];
        auto& v = state.v[k];
        if (m.rows() != p.value.rows() || m.cols() != p.value.cols()) {
            throw invalid_argument("adam_step: accumulator shape differs for " + p.name);
        }
        m = state.beta1 * m + (1.0 - state.beta1) * p.grad;
        v = state.beta2 * v + (1.0 - state.beta2) * p.grad.cwiseAbs2();
        p.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
    }
}

}  // namespace fcrn
