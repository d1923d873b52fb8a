#pragma once

// Reverse-mode differentiation over a small set of dense primitives:
// matmul, row-bias add, relu, pairwise squared distance, exp, guarded log,
// row softmax, elementwise arithmetic, scalar scale/shift, full-sum
// reduction. A Graph is built once (shapes are static), evaluated with
// named input tensors, then backward() fills gradient slots for every node
// reachable from the chosen scalar root.
//
// Conventions fixed here so tests are deterministic:
//   - relu subgradient at 0 is 0
//   - softmax subtracts the row max before exponentiation
//   - log is guarded as log(max(v, 1e-12)); the clamped region has zero
//     derivative
// Any non-finite value produced by a primitive is an error, not a warning.

#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "srdc/errors.hpp"
#include "srdc/tensor.hpp"

namespace srdc {

constexpr double kLogGuard = 1e-12;

struct NodeId {
    std::size_t index = static_cast<std::size_t>(-1);
    bool valid() const { return index != static_cast<std::size_t>(-1); }
};

class Graph {
public:
    // ---- graph construction -------------------------------------------

    NodeId placeholder(const std::string& name, std::vector<std::size_t> shape) {
        if (placeholders_.count(name))
            throw ConfigError("graph: duplicate placeholder '" + name + "'");
        NodeId id = push(Op::Placeholder, {}, Tensor(std::move(shape)));
        nodes_[id.index].name = name;
        placeholders_[name] = id;
        return id;
    }

    NodeId constant(Tensor t) { return push(Op::Constant, {}, std::move(t)); }

    // C = A * B, A: n x m, B: m x p
    NodeId matmul(NodeId a, NodeId b) {
        const Tensor& ta = nodes_[a.index].value;
        const Tensor& tb = nodes_[b.index].value;
        require(ta.rank() == 2 && tb.rank() == 2 && ta.cols() == tb.rows(),
                "matmul", ta, tb);
        return push(Op::Matmul, {a, b}, Tensor({ta.rows(), tb.cols()}));
    }

    // Y = X + 1 * bias, bias broadcast across rows (bias: 1 x m)
    NodeId add_row_bias(NodeId x, NodeId bias) {
        const Tensor& tx = nodes_[x.index].value;
        const Tensor& tb = nodes_[bias.index].value;
        require(tx.rank() == 2 && tb.rank() == 2 && tb.rows() == 1 &&
                    tb.cols() == tx.cols(),
                "add_row_bias", tx, tb);
        return push(Op::AddRowBias, {x, bias}, Tensor(tx.shape()));
    }

    NodeId relu(NodeId x) { return unary(Op::Relu, x); }
    NodeId exp(NodeId x) { return unary(Op::Exp, x); }
    NodeId log_guard(NodeId x) { return unary(Op::LogGuard, x); }
    // y = 1 / (1 + x)
    NodeId inv1p(NodeId x) { return unary(Op::Inv1p, x); }

    NodeId softmax_rows(NodeId x) {
        const Tensor& tx = nodes_[x.index].value;
        require(tx.rank() == 2, "softmax_rows", tx, tx);
        return push(Op::SoftmaxRows, {x, NodeId{}}, Tensor(tx.shape()));
    }

    // D[i][k] = ||Z_i - C_k||^2, Z: n x d, C: K x d
    NodeId sqdist(NodeId z, NodeId centers) {
        const Tensor& tz = nodes_[z.index].value;
        const Tensor& tc = nodes_[centers.index].value;
        require(tz.rank() == 2 && tc.rank() == 2 && tz.cols() == tc.cols(),
                "sqdist", tz, tc);
        return push(Op::Sqdist, {z, centers}, Tensor({tz.rows(), tc.rows()}));
    }

    NodeId add(NodeId a, NodeId b) { return binary_same(Op::Add, a, b); }
    NodeId sub(NodeId a, NodeId b) { return binary_same(Op::Sub, a, b); }
    NodeId hadamard(NodeId a, NodeId b) { return binary_same(Op::Hadamard, a, b); }

    NodeId scale(NodeId x, double factor) {
        NodeId id = unary(Op::Scale, x);
        nodes_[id.index].attr = factor;
        return id;
    }

    NodeId add_scalar(NodeId x, double shift) {
        NodeId id = unary(Op::AddScalar, x);
        nodes_[id.index].attr = shift;
        return id;
    }

    NodeId sum_all(NodeId x) { return push(Op::SumAll, {x, NodeId{}}, Tensor({1})); }

    // ---- execution ------------------------------------------------------

    // Binds the named tensors to placeholders and runs every node in
    // topological (construction) order. Intermediate values are cached for
    // backward(). Throws on unbound/unknown names, shape mismatch, or any
    // non-finite intermediate.
    void evaluate(const std::vector<std::pair<std::string, Tensor>>& inputs) {
        std::size_t bound = 0;
        for (const auto& [name, tensor] : inputs) {
            auto it = placeholders_.find(name);
            if (it == placeholders_.end())
                throw ConfigError("graph: unknown input '" + name + "'");
            Node& node = nodes_[it->second.index];
            if (tensor.shape() != node.value.shape())
                throw NumericError("graph: input '" + name + "' has shape " +
                                   tensor.shape_str() + ", declared " +
                                   node.value.shape_str());
            node.value = tensor;
            ++bound;
        }
        if (bound != placeholders_.size())
            throw ConfigError("graph: not all placeholders bound");
        for (Node& node : nodes_) forward(node);
        evaluated_ = true;
    }

    // Seeds the root with `seed` and accumulates gradients into every node
    // reachable from it, visiting each exactly once (reverse construction
    // order is a reverse topological order).
    void backward(NodeId root, double seed = 1.0) {
        if (!evaluated_)
            throw NumericError("graph: backward called before evaluate");
        if (nodes_[root.index].value.size() != 1)
            throw NumericError("graph: backward root must be scalar");
        std::vector<bool> reachable(nodes_.size(), false);
        mark_reachable(root, reachable);
        for (Node& node : nodes_) {
            node.grad = Tensor(node.value.shape());
        }
        nodes_[root.index].grad[0] = seed;
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            if (reachable[i]) backprop(nodes_[i]);
        }
        differentiated_ = true;
    }

    const Tensor& value(NodeId id) const {
        if (!evaluated_) throw NumericError("graph: value read before evaluate");
        return nodes_[id.index].value;
    }

    const Tensor& grad(NodeId id) const {
        if (!differentiated_)
            throw NumericError("graph: grad read before backward");
        return nodes_[id.index].grad;
    }

    std::size_t node_count() const { return nodes_.size(); }

private:
    enum class Op {
        Placeholder,
        Constant,
        Matmul,
        AddRowBias,
        Relu,
        Exp,
        LogGuard,
        Inv1p,
        SoftmaxRows,
        Sqdist,
        Add,
        Sub,
        Hadamard,
        Scale,
        AddScalar,
        SumAll,
    };

    struct Node {
        Op op;
        NodeId in0, in1;
        double attr = 0.0;
        Tensor value;
        Tensor grad;
        std::string name;
    };

    NodeId push(Op op, std::pair<NodeId, NodeId> ins, Tensor value) {
        Node node;
        node.op = op;
        node.in0 = ins.first;
        node.in1 = ins.second;
        node.value = std::move(value);
        nodes_.push_back(std::move(node));
        evaluated_ = false;
        differentiated_ = false;
        return NodeId{nodes_.size() - 1};
    }

    NodeId unary(Op op, NodeId x) {
        return push(op, {x, NodeId{}}, Tensor(nodes_[x.index].value.shape()));
    }

    NodeId binary_same(Op op, NodeId a, NodeId b) {
        const Tensor& ta = nodes_[a.index].value;
        const Tensor& tb = nodes_[b.index].value;
        require(ta.shape() == tb.shape(), "elementwise", ta, tb);
        return push(op, {a, b}, Tensor(ta.shape()));
    }

    void require(bool ok, const char* op, const Tensor& a, const Tensor& b) {
        if (!ok)
            throw NumericError(std::string("graph: ") + op +
                               " shape mismatch: " + a.shape_str() + " vs " +
                               b.shape_str());
    }

    const Tensor& in_val(const Node& n, int which) const {
        return nodes_[(which == 0 ? n.in0 : n.in1).index].value;
    }

    Tensor& in_grad(Node& n, int which) {
        return nodes_[(which == 0 ? n.in0 : n.in1).index].grad;
    }

    void forward(Node& n) {
        switch (n.op) {
            case Op::Placeholder:
            case Op::Constant:
                break;
            case Op::Matmul: {
                const Tensor& a = in_val(n, 0);
                const Tensor& b = in_val(n, 1);
                const std::size_t rows = a.rows(), inner = a.cols(), cols = b.cols();
                n.value.fill(0.0);
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t k = 0; k < inner; ++k) {
                        const double aik = a.at(i, k);
                        for (std::size_t j = 0; j < cols; ++j)
                            n.value.at(i, j) += aik * b.at(k, j);
                    }
                break;
            }
            case Op::AddRowBias: {
                const Tensor& x = in_val(n, 0);
                const Tensor& bias = in_val(n, 1);
                for (std::size_t i = 0; i < x.rows(); ++i)
                    for (std::size_t j = 0; j < x.cols(); ++j)
                        n.value.at(i, j) = x.at(i, j) + bias.at(0, j);
                break;
            }
            case Op::Relu: {
                const Tensor& x = in_val(n, 0);
                for (std::size_t i = 0; i < x.size(); ++i)
                    n.value[i] = x[i] > 0.0 ? x[i] : 0.0;
                break;
            }
            case Op::Exp: {
                const Tensor& x = in_val(n, 0);
                for (std::size_t i = 0; i < x.size(); ++i)
                    n.value[i] = std::exp(x[i]);
                break;
            }
            case Op::LogGuard: {
                const Tensor& x = in_val(n, 0);
                for (std::size_t i = 0; i < x.size(); ++i)
                    n.value[i] = std::log(x[i] > kLogGuard ? x[i] : kLogGuard);
                break;
            }
            case Op::Inv1p: {
                const Tensor& x = in_val(n, 0);
                for (std::size_t i = 0; i < x.size(); ++i)
                    n.value[i] = 1.0 / (1.0 + x[i]);
                break;
            }
            case Op::SoftmaxRows: {
                const Tensor& x = in_val(n, 0);
                for (std::size_t i = 0; i < x.rows(); ++i) {
                    double mx = x.at(i, 0);
                    for (std::size_t j = 1; j < x.cols(); ++j)
                        if (x.at(i, j) > mx) mx = x.at(i, j);
                    double denom = 0.0;
                    for (std::size_t j = 0; j < x.cols(); ++j) {
                        const double e = std::exp(x.at(i, j) - mx);
                        n.value.at(i, j) = e;
                        denom += e;
                    }
                    for (std::size_t j = 0; j < x.cols(); ++j)
                        n.value.at(i, j) /= denom;
                }
                break;
            }
            case Op::Sqdist: {
                const Tensor& z = in_val(n, 0);
                const Tensor& c = in_val(n, 1);
                for (std::size_t i = 0; i < z.rows(); ++i)
                    for (std::size_t k = 0; k < c.rows(); ++k) {
                        double d = 0.0;
                        for (std::size_t j = 0; j < z.cols(); ++j) {
                            const double diff = z.at(i, j) - c.at(k, j);
                            d += diff * diff;
                        }
                        n.value.at(i, k) = d;
                    }
                break;
            }
            case Op::Add: {
                const Tensor& a = in_val(n, 0);
                const Tensor& b = in_val(n, 1);
                for (std::size_t i = 0; i < a.size(); ++i) n.value[i] = a[i] + b[i];
                break;
            }
            case Op::Sub: {
                const Tensor& a = in_val(n, 0);
                const Tensor& b = in_val(n, 1);
                for (std::size_t i = 0; i < a.size(); ++i) n.value[i] = a[i] - b[i];
                break;
            }
            case Op::Hadamard: {
                const Tensor& a = in_val(n, 0);
                const Tensor& b = in_val(n, 1);
                for (std::size_t i = 0; i < a.size(); ++i) n.value[i] = a[i] * b[i];
                break;
            }
            case Op::Scale: {
                const Tensor& x = in_val(n, 0);
                for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = n.attr * x[i];
                break;
            }
            case Op::AddScalar: {
                const Tensor& x = in_val(n, 0);
                for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = n.attr + x[i];
                break;
            }
            case Op::SumAll: {
                const Tensor& x = in_val(n, 0);
                double s = 0.0;
                for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
                n.value[0] = s;
                break;
            }
        }
        if (!n.value.all_finite())
            throw NumericError("graph: non-finite value after op " + op_name(n.op));
    }

    void backprop(Node& n) {
        const Tensor& g = n.grad;
        switch (n.op) {
            case Op::Placeholder:
            case Op::Constant:
                break;
            case Op::Matmul: {
                const Tensor& a = in_val(n, 0);
                const Tensor& b = in_val(n, 1);
                Tensor& ga = in_grad(n, 0);
                Tensor& gb = in_grad(n, 1);
                const std::size_t rows = a.rows(), inner = a.cols(), cols = b.cols();
                // dA = G * B^T, dB = A^T * G
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j) {
                        const double gij = g.at(i, j);
                        for (std::size_t k = 0; k < inner; ++k) {
                            ga.at(i, k) += gij * b.at(k, j);
                            gb.at(k, j) += a.at(i, k) * gij;
                        }
                    }
                break;
            }
            case Op::AddRowBias: {
                Tensor& gx = in_grad(n, 0);
                Tensor& gbias = in_grad(n, 1);
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) {
                        gx.at(i, j) += g.at(i, j);
                        gbias.at(0, j) += g.at(i, j);
                    }
                break;
            }
            case Op::Relu: {
                const Tensor& x = in_val(n, 0);
                Tensor& gx = in_grad(n, 0);
                for (std::size_t i = 0; i < x.size(); ++i)
                    if (x[i] > 0.0) gx[i] += g[i];
                break;
            }
            case Op::Exp: {
                Tensor& gx = in_grad(n, 0);
                for (std::size_t i = 0; i < g.size(); ++i)
                    gx[i] += g[i] * n.value[i];
                break;
            }
            case Op::LogGuard: {
                const Tensor& x = in_val(n, 0);
                Tensor& gx = in_grad(n, 0);
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (x[i] > kLogGuard) gx[i] += g[i] / x[i];
                break;
            }
            case Op::Inv1p: {
                Tensor& gx = in_grad(n, 0);
                for (std::size_t i = 0; i < g.size(); ++i)
                    gx[i] -= g[i] * n.value[i] * n.value[i];
                break;
            }
            case Op::SoftmaxRows: {
                Tensor& gx = in_grad(n, 0);
                for (std::size_t i = 0; i < g.rows(); ++i) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < g.cols(); ++j)
                        dot += g.at(i, j) * n.value.at(i, j);
                    for (std::size_t j = 0; j < g.cols(); ++j)
                        gx.at(i, j) += n.value.at(i, j) * (g.at(i, j) - dot);
                }
                break;
            }
            case Op::Sqdist: {
                const Tensor& z = in_val(n, 0);
                const Tensor& c = in_val(n, 1);
                Tensor& gz = in_grad(n, 0);
                Tensor& gc = in_grad(n, 1);
                for (std::size_t i = 0; i < z.rows(); ++i)
                    for (std::size_t k = 0; k < c.rows(); ++k) {
                        const double gik = g.at(i, k);
                        if (gik == 0.0) continue;
                        for (std::size_t j = 0; j < z.cols(); ++j) {
                            const double diff = z.at(i, j) - c.at(k, j);
                            gz.at(i, j) += 2.0 * gik * diff;
                            gc.at(k, j) -= 2.0 * gik * diff;
                        }
                    }
                break;
            }
            case Op::Add: {
                Tensor& ga = in_grad(n, 0);
                Tensor& gb = in_grad(n, 1);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    ga[i] += g[i];
                    gb[i] += g[i];
                }
                break;
            }
            case Op::Sub: {
                Tensor& ga = in_grad(n, 0);
                Tensor& gb = in_grad(n, 1);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    ga[i] += g[i];
                    gb[i] -= g[i];
                }
                break;
            }
            case Op::Hadamard: {
                const Tensor& a = in_val(n, 0);
                const Tensor& b = in_val(n, 1);
                Tensor& ga = in_grad(n, 0);
                Tensor& gb = in_grad(n, 1);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    ga[i] += g[i] * b[i];
                    gb[i] += g[i] * a[i];
                }
                break;
            }
            case Op::Scale: {
                Tensor& gx = in_grad(n, 0);
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += n.attr * g[i];
                break;
            }
            case Op::AddScalar: {
                Tensor& gx = in_grad(n, 0);
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                break;
            }
            case Op::SumAll: {
                Tensor& gx = in_grad(n, 0);
                const double gs = g[0];
                for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gs;
                break;
            }
        }
    }

    void mark_reachable(NodeId root, std::vector<bool>& reachable) const {
        std::vector<std::size_t> stack{root.index};
        while (!stack.empty()) {
            std::size_t i = stack.back();
            stack.pop_back();
            if (reachable[i]) continue;
            reachable[i] = true;
            const Node& n = nodes_[i];
            if (n.in0.valid()) stack.push_back(n.in0.index);
            if (n.in1.valid()) stack.push_back(n.in1.index);
        }
    }

    static std::string op_name(Op op) {
        switch (op) {
            case Op::Placeholder: return "placeholder";
            case Op::Constant: return "constant";
            case Op::Matmul: return "matmul";
            case Op::AddRowBias: return "add_row_bias";
            case Op::Relu: return "relu";
            case Op::Exp: return "exp";
            case Op::LogGuard: return "log_guard";
            case Op::Inv1p: return "inv1p";
            case Op::SoftmaxRows: return "softmax_rows";
            case Op::Sqdist: return "sqdist";
            case Op::Add: return "add";
            case Op::Sub: return "sub";
            case Op::Hadamard: return "hadamard";
            case Op::Scale: return "scale";
            case Op::AddScalar: return "add_scalar";
            case Op::SumAll: return "sum_all";
        }
        return "?";
    }

    std::vector<Node> nodes_;
    std::unordered_map<std::string, NodeId> placeholders_;
    bool evaluated_ = false;
    bool differentiated_ = false;
};

}  // namespace srdc
