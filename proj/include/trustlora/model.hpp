#pragma once

// A small ReLU MLP classifier whose linear layers can each carry low-rank
// branches. Layer l computes z = W x + sum_j B_j (A_j x) + b; hidden layers
// are followed by ReLU, the final layer is linear. Batches are row-major
// (one sample per row), so the batched forward uses X W^T.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "trustlora/autodiff.hpp"
#include "trustlora/errors.hpp"
#include "trustlora/matrix.hpp"
#include "trustlora/rng.hpp"

namespace trustlora {

enum class TrainMode { b_only, a_and_b };

inline const char* to_string(TrainMode m) { return m == TrainMode::b_only ? "b-only" : "ab"; }

inline TrainMode train_mode_from_string(const std::string& s) {
    if (s == "b-only") {
        return TrainMode::b_only;
    }
    if (s == "ab" || s == "a-and-b") {
        return TrainMode::a_and_b;
    }
    throw ConfigError("unknown train mode '" + s + "' (expected b-only|ab)");
}

struct ModelConfig {
    std::size_t input_dim = 2;
    std::vector<std::size_t> hidden_dims = {64, 64};
    std::size_t num_classes = 4;
    std::size_t lora_rank = 4;
    std::uint64_t lora_seed = 0;
    // Layers carrying an adapter. Unset selects every hidden linear layer
    // whose shape admits the rank (rank < min(u, v)).
    std::optional<std::vector<std::size_t>> adapt_layers;
    TrainMode train_mode = TrainMode::b_only;

    std::size_t num_layers() const { return hidden_dims.size() + 1; }

    // (u, v) of layer l: W is u x v.
    std::pair<std::size_t, std::size_t> layer_shape(std::size_t l) const {
        const std::size_t v = l == 0 ? input_dim : hidden_dims[l - 1];
        const std::size_t u = l < hidden_dims.size() ? hidden_dims[l] : num_classes;
        return {u, v};
    }

    std::vector<std::size_t> resolved_adapt_layers() const {
        if (adapt_layers.has_value()) {
            return *adapt_layers;
        }
        std::vector<std::size_t> picked;
        for (std::size_t l = 0; l < hidden_dims.size(); ++l) {
            const auto [u, v] = layer_shape(l);
            if (lora_rank < std::min(u, v)) {
                picked.push_back(l);
            }
        }
        return picked;
    }

    void validate() const {
        if (input_dim == 0 || num_classes < 2) {
            throw ConfigError("model: input_dim must be > 0 and num_classes >= 2");
        }
        for (const std::size_t h : hidden_dims) {
            if (h == 0) {
                throw ConfigError("model: hidden layer of width 0");
            }
        }
        if (lora_rank < 1) {
            throw ConfigError("model: lora_rank must be >= 1");
        }
        for (const std::size_t l : resolved_adapt_layers()) {
            if (l >= num_layers()) {
                throw ConfigError("model: adapt layer " + std::to_string(l) + " out of range (" +
                                  std::to_string(num_layers()) + " layers)");
            }
            const auto [u, v] = layer_shape(l);
            if (lora_rank >= std::min(u, v)) {
                throw ConfigError("model: rank " + std::to_string(lora_rank) + " not below min(u,v)=" +
                                  std::to_string(std::min(u, v)) + " at layer " + std::to_string(l));
            }
        }
    }
};

struct LinearLayer {
    Matrix W;  // u x v
    Matrix b;  // 1 x u
};

struct BaseModel {
    ModelConfig config;
    std::vector<LinearLayer> layers;
};

// One low-rank branch on one layer. Freshly created branches have B == 0, so
// they leave the forward pass untouched. `a_from_seed` marks A as bit-exactly
// reproducible from (seed, shape), which is what checkpoints rely on to store
// only {seed, B}.
struct LoraAdapter {
    std::size_t layer = 0;
    std::size_t rank = 0;
    std::uint64_t seed = 0;
    bool a_from_seed = true;
    Matrix A;  // r x v
    Matrix B;  // u x r
};

// Application order matters only for floating-point summation order; merged
// models may carry several branches per layer.
using AdapterSet = std::vector<LoraAdapter>;

inline Matrix lora_a_matrix(std::uint64_t seed, std::size_t rank, std::size_t v) {
    Rng rng(seed);
    Matrix a(rank, v);
    for (double& x : a.data) {
        x = rng.next_gaussian();
    }
    return a;
}

inline std::uint64_t lora_layer_seed(std::uint64_t lora_seed, std::size_t layer) {
    return derive_seed(lora_seed, "lora-A-layer-" + std::to_string(layer));
}

inline AdapterSet make_adapters(const ModelConfig& config) {
    config.validate();
    AdapterSet adapters;
    for (const std::size_t l : config.resolved_adapt_layers()) {
        const auto [u, v] = config.layer_shape(l);
        LoraAdapter ad;
        ad.layer = l;
        ad.rank = config.lora_rank;
        ad.seed = lora_layer_seed(config.lora_seed, l);
        ad.a_from_seed = true;
        ad.A = lora_a_matrix(ad.seed, ad.rank, v);
        ad.B = Matrix(u, ad.rank);
        adapters.push_back(std::move(ad));
    }
    return adapters;
}

inline BaseModel init_base_model(const ModelConfig& config, std::uint64_t init_seed) {
    config.validate();
    BaseModel model;
    model.config = config;
    for (std::size_t l = 0; l < config.num_layers(); ++l) {
        const auto [u, v] = config.layer_shape(l);
        Rng rng(derive_seed(init_seed, "base-init-layer-" + std::to_string(l)));
        LinearLayer layer;
        layer.W = Matrix(u, v);
        const double std_dev = std::sqrt(2.0 / static_cast<double>(v));
        for (double& w : layer.W.data) {
            w = std_dev * rng.next_gaussian();
        }
        layer.b = Matrix(1, u);
        model.layers.push_back(std::move(layer));
    }
    return model;
}

namespace detail {
inline void check_adapters(const BaseModel& model, const AdapterSet& adapters) {
    for (const LoraAdapter& ad : adapters) {
        if (ad.layer >= model.layers.size()) {
            throw ConfigError("adapter attached to layer " + std::to_string(ad.layer) + " of a " +
                              std::to_string(model.layers.size()) + "-layer model");
        }
        const LinearLayer& layer = model.layers[ad.layer];
        if (ad.B.rows != layer.W.rows || ad.A.cols != layer.W.cols || ad.B.cols != ad.A.rows) {
            throw DimensionError("adapter shapes B=" + ad.B.shape_str() + " A=" + ad.A.shape_str() +
                                 " incompatible with W=" + layer.W.shape_str() + " at layer " +
                                 std::to_string(ad.layer));
        }
    }
}
}  // namespace detail

// Inference forward. Branches whose B is identically zero are skipped, which
// makes the zero-init identity (fresh adapters == base model) hold bit-exactly.
inline Matrix forward(const BaseModel& model, const AdapterSet& adapters, const Matrix& x) {
    if (x.cols != model.config.input_dim) {
        throw DimensionError("forward: input " + x.shape_str() + " but model expects cols=" +
                             std::to_string(model.config.input_dim));
    }
    detail::check_adapters(model, adapters);
    Matrix h = x;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const LinearLayer& layer = model.layers[l];
        Matrix z = matmul(h, transpose(layer.W));
        for (const LoraAdapter& ad : adapters) {
            if (ad.layer != l || is_zero(ad.B)) {
                continue;
            }
            z = add(z, matmul(matmul(h, transpose(ad.A)), transpose(ad.B)));
        }
        z = add_row(z, layer.b);
        h = l + 1 < model.layers.size() ? relu(z) : std::move(z);
    }
    return h;
}

inline Matrix forward(const BaseModel& model, const Matrix& x) { return forward(model, {}, x); }

inline std::vector<int> predict(const BaseModel& model, const AdapterSet& adapters, const Matrix& x) {
    const Matrix logits = forward(model, adapters, x);
    std::vector<int> labels(logits.rows);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.cols; ++j) {
            if (logits(i, j) > logits(i, best)) {
                best = j;
            }
        }
        labels[i] = static_cast<int>(best);
    }
    return labels;
}

inline double accuracy(const BaseModel& model, const AdapterSet& adapters, const Matrix& x,
                       const std::vector<int>& y) {
    const std::vector<int> yhat = predict(model, adapters, x);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < yhat.size(); ++i) {
        correct += yhat[i] == y[i] ? 1 : 0;
    }
    return yhat.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(yhat.size());
}

enum class TrainPhase { base, lora };

// Tape-side mirror of (model, adapters): parameter/constant node ids plus the
// structure needed to run the differentiable forward.
struct TapeModel {
    std::size_t num_layers = 0;
    std::vector<Tape::NodeId> w_nodes;
    std::vector<Tape::NodeId> b_nodes;
    std::vector<std::size_t> adapter_layers;
    std::vector<Tape::NodeId> a_nodes;
    std::vector<Tape::NodeId> b_lora_nodes;
};

// During the base phase all W/b are trainable and branches are constants; in
// a LoRA phase the base is frozen and only B (plus A when training A-and-B)
// receives gradients. The tape graph always includes every branch so that
// gradients can flow into zero-initialized B matrices.
inline TapeModel build_tape_model(Tape& tape, const BaseModel& model, const AdapterSet& adapters,
                                  TrainPhase phase, TrainMode mode) {
    detail::check_adapters(model, adapters);
    TapeModel tm;
    tm.num_layers = model.layers.size();
    const bool base_trainable = phase == TrainPhase::base;
    for (const LinearLayer& layer : model.layers) {
        tm.w_nodes.push_back(tape.input(layer.W, base_trainable));
        tm.b_nodes.push_back(tape.input(layer.b, base_trainable));
    }
    const bool lora_trainable = phase == TrainPhase::lora;
    for (const LoraAdapter& ad : adapters) {
        tm.adapter_layers.push_back(ad.layer);
        tm.a_nodes.push_back(tape.input(ad.A, lora_trainable && mode == TrainMode::a_and_b));
        tm.b_lora_nodes.push_back(tape.input(ad.B, lora_trainable));
    }
    return tm;
}

inline Tape::NodeId tape_forward(Tape& tape, const TapeModel& tm, Tape::NodeId x) {
    Tape::NodeId h = x;
    for (std::size_t l = 0; l < tm.num_layers; ++l) {
        Tape::NodeId z = tape.matmul(h, tape.transpose(tm.w_nodes[l]));
        for (std::size_t k = 0; k < tm.adapter_layers.size(); ++k) {
            if (tm.adapter_layers[k] != l) {
                continue;
            }
            Tape::NodeId low = tape.matmul(h, tape.transpose(tm.a_nodes[k]));
            z = tape.add(z, tape.matmul(low, tape.transpose(tm.b_lora_nodes[k])));
        }
        z = tape.add_row(z, tm.b_nodes[l]);
        h = l + 1 < tm.num_layers ? tape.relu(z) : z;
    }
    return h;
}

struct ParamRef {
    Matrix* matrix;
    std::string name;
};

struct TrainableParams {
    std::vector<ParamRef> params;
    std::size_t trainable_count = 0;
    std::size_t base_count = 0;
    double ratio = 0.0;
};

inline TrainableParams trainable_parameters(BaseModel& model, AdapterSet& adapters, TrainPhase phase,
                                            TrainMode mode) {
    TrainableParams out;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        out.base_count += model.layers[l].W.size() + model.layers[l].b.size();
        if (phase == TrainPhase::base) {
            out.params.push_back({&model.layers[l].W, "layer" + std::to_string(l) + ".W"});
            out.params.push_back({&model.layers[l].b, "layer" + std::to_string(l) + ".b"});
        }
    }
    if (phase == TrainPhase::lora) {
        for (std::size_t k = 0; k < adapters.size(); ++k) {
            const std::string stem = "lora" + std::to_string(k) + ".L" + std::to_string(adapters[k].layer);
            out.params.push_back({&adapters[k].B, stem + ".B"});
            if (mode == TrainMode::a_and_b) {
                out.params.push_back({&adapters[k].A, stem + ".A"});
            }
        }
    }
    for (const ParamRef& p : out.params) {
        out.trainable_count += p.matrix->size();
    }
    out.ratio = out.base_count == 0
                    ? 0.0
                    : static_cast<double>(out.trainable_count) / static_cast<double>(out.base_count);
    return out;
}

}  // namespace trustlora
