#pragma once

// Reverse-mode automatic differentiation on a per-forward-pass tape. A Tape is
// an append-only list of nodes, so reverse creation order is a valid reverse
// topological order. One tape per training step, single-threaded; distinct
// tapes share no state.

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "trustlora/errors.hpp"
#include "trustlora/matrix.hpp"

namespace trustlora {

// Probabilities are clamped at this floor before any logarithm.
inline constexpr double kLogClampEps = 1e-12;

class Tape {
public:
    using NodeId = std::uint32_t;

    NodeId input(Matrix value, bool requires_grad) {
        nodes_.push_back(Node{std::move(value), Matrix{}, {}, nullptr,
                              requires_grad ? "param" : "const", requires_grad});
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    NodeId constant(Matrix value) { return input(std::move(value), false); }
    NodeId param(Matrix value) { return input(std::move(value), true); }

    NodeId matmul(NodeId a, NodeId b) {
        NodeId out = make(trustlora::matmul(value(a), value(b)), {a, b}, "matmul");
        attach(out, [this, out, a, b] {
            const Matrix& g = nodes_[out].grad;
            if (nodes_[a].requires_grad) {
                accumulate(a, trustlora::matmul(g, trustlora::transpose(value(b))));
            }
            if (nodes_[b].requires_grad) {
                accumulate(b, trustlora::matmul(trustlora::transpose(value(a)), g));
            }
        });
        return out;
    }

    NodeId transpose(NodeId a) {
        NodeId out = make(trustlora::transpose(value(a)), {a}, "transpose");
        attach(out, [this, out, a] { accumulate(a, trustlora::transpose(nodes_[out].grad)); });
        return out;
    }

    NodeId add(NodeId a, NodeId b) {
        NodeId out = make(trustlora::add(value(a), value(b)), {a, b}, "add");
        attach(out, [this, out, a, b] {
            if (nodes_[a].requires_grad) {
                accumulate(a, nodes_[out].grad);
            }
            if (nodes_[b].requires_grad) {
                accumulate(b, nodes_[out].grad);
            }
        });
        return out;
    }

    NodeId sub(NodeId a, NodeId b) {
        NodeId out = make(trustlora::sub(value(a), value(b)), {a, b}, "sub");
        attach(out, [this, out, a, b] {
            if (nodes_[a].requires_grad) {
                accumulate(a, nodes_[out].grad);
            }
            if (nodes_[b].requires_grad) {
                accumulate(b, trustlora::scale(nodes_[out].grad, -1.0));
            }
        });
        return out;
    }

    // x (n x d) plus a bias row (1 x d) broadcast over rows.
    NodeId add_row(NodeId x, NodeId bias) {
        NodeId out = make(trustlora::add_row(value(x), value(bias)), {x, bias}, "add_row");
        attach(out, [this, out, x, bias] {
            const Matrix& g = nodes_[out].grad;
            if (nodes_[x].requires_grad) {
                accumulate(x, g);
            }
            if (nodes_[bias].requires_grad) {
                Matrix gb(1, g.cols);
                for (std::size_t i = 0; i < g.rows; ++i) {
                    for (std::size_t j = 0; j < g.cols; ++j) {
                        gb.data[j] += g.data[i * g.cols + j];
                    }
                }
                accumulate(bias, std::move(gb));
            }
        });
        return out;
    }

    NodeId scale(NodeId a, double s) {
        NodeId out = make(trustlora::scale(value(a), s), {a}, "scale");
        attach(out, [this, out, a, s] { accumulate(a, trustlora::scale(nodes_[out].grad, s)); });
        return out;
    }

    NodeId hadamard(NodeId a, NodeId b) {
        NodeId out = make(trustlora::hadamard(value(a), value(b)), {a, b}, "hadamard");
        attach(out, [this, out, a, b] {
            const Matrix& g = nodes_[out].grad;
            if (nodes_[a].requires_grad) {
                accumulate(a, trustlora::hadamard(g, value(b)));
            }
            if (nodes_[b].requires_grad) {
                accumulate(b, trustlora::hadamard(g, value(a)));
            }
        });
        return out;
    }

    NodeId relu(NodeId a) {
        NodeId out = make(trustlora::relu(value(a)), {a}, "relu");
        attach(out, [this, out, a] {
            const Matrix& x = value(a);
            Matrix gx = nodes_[out].grad;
            for (std::size_t i = 0; i < gx.data.size(); ++i) {
                if (x.data[i] <= 0.0) {
                    gx.data[i] = 0.0;
                }
            }
            accumulate(a, std::move(gx));
        });
        return out;
    }

    NodeId softmax_rows(NodeId a) {
        NodeId out = make(trustlora::softmax_rows(value(a)), {a}, "softmax_rows");
        attach(out, [this, out, a] {
            const Matrix& p = nodes_[out].value;
            const Matrix& g = nodes_[out].grad;
            Matrix gx(p.rows, p.cols);
            for (std::size_t i = 0; i < p.rows; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < p.cols; ++j) {
                    dot += g.data[i * p.cols + j] * p.data[i * p.cols + j];
                }
                for (std::size_t j = 0; j < p.cols; ++j) {
                    const std::size_t k = i * p.cols + j;
                    gx.data[k] = p.data[k] * (g.data[k] - dot);
                }
            }
            accumulate(a, std::move(gx));
        });
        return out;
    }

    // log(max(x, eps)); the gradient is zero wherever the clamp is active.
    NodeId log_clamped(NodeId a, double eps = kLogClampEps) {
        Matrix v = value(a);
        for (double& x : v.data) {
            x = std::log(x < eps ? eps : x);
        }
        NodeId out = make(std::move(v), {a}, "log_clamped");
        attach(out, [this, out, a, eps] {
            const Matrix& x = value(a);
            Matrix gx = nodes_[out].grad;
            for (std::size_t i = 0; i < gx.data.size(); ++i) {
                gx.data[i] = x.data[i] >= eps ? gx.data[i] / x.data[i] : 0.0;
            }
            accumulate(a, std::move(gx));
        });
        return out;
    }

    // Picks a[i, labels[i]] for every row, producing an n x 1 column.
    NodeId gather_labels(NodeId a, std::span<const int> labels) {
        const Matrix& x = value(a);
        if (labels.size() != x.rows) {
            throw DimensionError("gather_labels: " + std::to_string(labels.size()) + " labels for " +
                                 std::to_string(x.rows) + " rows");
        }
        Matrix v(x.rows, 1);
        for (std::size_t i = 0; i < x.rows; ++i) {
            const int y = labels[i];
            if (y < 0 || static_cast<std::size_t>(y) >= x.cols) {
                throw ContractError("gather_labels: label " + std::to_string(y) + " outside [0, " +
                                    std::to_string(x.cols) + ")");
            }
            v.data[i] = x(i, static_cast<std::size_t>(y));
        }
        std::vector<int> ys(labels.begin(), labels.end());
        NodeId out = make(std::move(v), {a}, "gather_labels");
        attach(out, [this, out, a, ys = std::move(ys)] {
            const Matrix& g = nodes_[out].grad;
            Matrix gx(value(a).rows, value(a).cols);
            for (std::size_t i = 0; i < gx.rows; ++i) {
                gx(i, static_cast<std::size_t>(ys[i])) = g.data[i];
            }
            accumulate(a, std::move(gx));
        });
        return out;
    }

    NodeId sum(NodeId a) {
        double s = 0.0;
        for (const double v : value(a).data) {
            s += v;
        }
        NodeId out = make(Matrix(1, 1, s), {a}, "sum");
        attach(out, [this, out, a] {
            accumulate(a, Matrix(value(a).rows, value(a).cols, nodes_[out].grad.data[0]));
        });
        return out;
    }

    NodeId mean_all(NodeId a) {
        const std::size_t n = value(a).size();
        if (n == 0) {
            throw DimensionError("mean_all: empty operand");
        }
        return scale(sum(a), 1.0 / static_cast<double>(n));
    }

    // Reverse accumulation from a scalar loss. Parameters that do not lie on
    // any path to the loss keep a lazily materialized zero gradient.
    void backward(NodeId loss) {
        Node& top = nodes_.at(loss);
        if (top.value.rows != 1 || top.value.cols != 1) {
            throw ContractError("backward: loss must be scalar, got " + top.value.shape_str());
        }
        top.grad = Matrix(1, 1, 1.0);
        for (std::size_t i = loss + 1; i-- > 0;) {
            Node& node = nodes_[i];
            if (node.back && !node.grad.empty() && node.requires_grad) {
                node.back();
            }
        }
    }

    const Matrix& value(NodeId id) const { return nodes_.at(id).value; }

    const Matrix& grad(NodeId id) {
        Node& node = nodes_.at(id);
        if (node.grad.empty()) {
            node.grad = Matrix(node.value.rows, node.value.cols);
        }
        return node.grad;
    }

    std::size_t size() const { return nodes_.size(); }
    const char* op_name(NodeId id) const { return nodes_.at(id).op; }

private:
    struct Node {
        Matrix value;
        Matrix grad;  // empty until touched
        std::vector<NodeId> parents;
        std::function<void()> back;
        const char* op;
        bool requires_grad;
    };

    NodeId make(Matrix value, std::vector<NodeId> parents, const char* op) {
        bool requires_grad = false;
        for (const NodeId p : parents) {
            requires_grad = requires_grad || nodes_.at(p).requires_grad;
        }
        nodes_.push_back(Node{std::move(value), Matrix{}, std::move(parents), nullptr, op, requires_grad});
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    // Backward closures are only attached to nodes on a differentiable path.
    void attach(NodeId id, std::function<void()> back) {
        if (nodes_[id].requires_grad) {
            nodes_[id].back = std::move(back);
        }
    }

    void accumulate(NodeId id, Matrix delta) {
        Node& node = nodes_[id];
        if (!node.requires_grad) {
            return;
        }
        if (node.grad.empty()) {
            node.grad = std::move(delta);
        } else {
            for (std::size_t i = 0; i < node.grad.data.size(); ++i) {
                node.grad.data[i] += delta.data[i];
            }
        }
    }

    std::vector<Node> nodes_;
};

}  // namespace trustlora
