#pragma once

// Loss functions: plain (non-differentiable) versions used by evaluation and
// oracle checks, plus tape builders for training. The probability argument of
// every logarithm is clamped at 1e-12; that clamp is part of the loss
// contract, not an implementation detail.

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "trustlora/autodiff.hpp"
#include "trustlora/errors.hpp"
#include "trustlora/matrix.hpp"
#include "trustlora/model.hpp"

namespace trustlora {

struct ObjectiveConfig {
    // Weight of the JS consistency term. Default follows the AugMix recipe.
    double lambda_cov = 12.0;
    // Weight of the KL-to-uniform outlier term. Default follows the OE recipe.
    double lambda_sem = 0.5;
    std::size_t num_classes = 4;

    void validate() const {
        if (lambda_cov <= 0.0 || lambda_sem <= 0.0) {
            throw ConfigError("objectives: lambda values must be strictly positive");
        }
    }
};

// Mean over the batch of -log p[i, y_i].
inline double cross_entropy(const Matrix& probabilities, std::span<const int> labels) {
    if (labels.size() != probabilities.rows || probabilities.rows == 0) {
        throw ContractError("cross_entropy: need one label per probability row");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < probabilities.rows; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= probabilities.cols) {
            throw ContractError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                                std::to_string(probabilities.cols) + ")");
        }
        const double p = probabilities(i, static_cast<std::size_t>(y));
        total -= std::log(p < kLogClampEps ? kLogClampEps : p);
    }
    return total / static_cast<double>(probabilities.rows);
}

// KL(p || q) over two rows of equal length, with 0 log 0 := 0.
inline double kl_div(const Matrix& p, const Matrix& q) {
    if (!p.same_shape(q)) {
        throw DimensionError("kl_div: " + p.shape_str() + " vs " + q.shape_str());
    }
    double total = 0.0;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
        const double pi = p.data[i];
        if (pi == 0.0) {
            continue;
        }
        const double qi = q.data[i] < kLogClampEps ? kLogClampEps : q.data[i];
        const double pc = pi < kLogClampEps ? kLogClampEps : pi;
        total += pi * (std::log(pc) - std::log(qi));
    }
    return total;
}

// Jensen-Shannon consistency over a triple of posterior rows:
// (1/3) * [KL(p0||m) + KL(p1||m) + KL(p2||m)] with m the arithmetic mean.
inline double js_consistency(const Matrix& p0, const Matrix& p1, const Matrix& p2) {
    if (!p0.same_shape(p1) || !p0.same_shape(p2)) {
        throw DimensionError("js_consistency: mismatched row shapes");
    }
    const Matrix m = scale(add(add(p0, p1), p2), 1.0 / 3.0);
    return (kl_div(p0, m) + kl_div(p1, m) + kl_div(p2, m)) / 3.0;
}

// Batch means: every loss term reduces with an arithmetic mean over rows.
inline double js_consistency_batch(const Matrix& p0, const Matrix& p1, const Matrix& p2) {
    if (!p0.same_shape(p1) || !p0.same_shape(p2) || p0.rows == 0) {
        throw DimensionError("js_consistency_batch: mismatched or empty batches");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < p0.rows; ++i) {
        total += js_consistency(p0.row(i), p1.row(i), p2.row(i));
    }
    return total / static_cast<double>(p0.rows);
}

inline Matrix uniform_row(std::size_t k) { return Matrix(1, k, 1.0 / static_cast<double>(k)); }

inline double kl_to_uniform_batch(const Matrix& p, std::size_t k) {
    if (p.rows == 0 || p.cols != k) {
        throw ContractError("kl_to_uniform_batch: empty batch or class-count mismatch");
    }
    const Matrix u = uniform_row(k);
    double total = 0.0;
    for (std::size_t i = 0; i < p.rows; ++i) {
        total += kl_div(p.row(i), u);
    }
    return total / static_cast<double>(p.rows);
}

// ---- tape builders ----------------------------------------------------

// mean_i -log clamp(p[i, y_i])
inline Tape::NodeId tape_cross_entropy(Tape& tape, Tape::NodeId probabilities,
                                       std::span<const int> labels) {
    Tape::NodeId picked = tape.gather_labels(probabilities, labels);
    return tape.scale(tape.mean_all(tape.log_clamped(picked)), -1.0);
}

// Batch-mean KL(p || q) for row-aligned probability batches.
inline Tape::NodeId tape_kl_batch(Tape& tape, Tape::NodeId p, Tape::NodeId q) {
    const std::size_t n = tape.value(p).rows;
    Tape::NodeId diff = tape.sub(tape.log_clamped(p), tape.log_clamped(q));
    return tape.scale(tape.sum(tape.hadamard(p, diff)), 1.0 / static_cast<double>(n));
}

inline Tape::NodeId tape_js_batch(Tape& tape, Tape::NodeId p0, Tape::NodeId p1, Tape::NodeId p2) {
    Tape::NodeId m = tape.scale(tape.add(tape.add(p0, p1), p2), 1.0 / 3.0);
    Tape::NodeId total = tape.add(tape.add(tape_kl_batch(tape, p0, m), tape_kl_batch(tape, p1, m)),
                                  tape_kl_batch(tape, p2, m));
    return tape.scale(total, 1.0 / 3.0);
}

// Produces a stochastic variant of a batch; both consistency views come from
// independent draws of the same augmenter.
using Augmenter = std::function<Matrix(const Matrix&)>;

// Consistency objective with the two augmented views already materialized:
// CE on the clean view plus lambda times the batch-mean JS across the triple.
// Deterministic given its inputs, which is what gradient checks need.
inline Tape::NodeId augmix_objective_views(Tape& tape, const TapeModel& tm, const Matrix& x,
                                           const Matrix& x_aug1, const Matrix& x_aug2,
                                           std::span<const int> labels, double lambda_cov) {
    if (!x.same_shape(x_aug1) || !x.same_shape(x_aug2)) {
        throw DimensionError("augmix: augmented views must match the clean batch shape");
    }
    Tape::NodeId p0 = tape.softmax_rows(tape_forward(tape, tm, tape.constant(x)));
    Tape::NodeId ce = tape_cross_entropy(tape, p0, labels);
    Tape::NodeId p1 = tape.softmax_rows(tape_forward(tape, tm, tape.constant(x_aug1)));
    Tape::NodeId p2 = tape.softmax_rows(tape_forward(tape, tm, tape.constant(x_aug2)));
    return tape.add(ce, tape.scale(tape_js_batch(tape, p0, p1, p2), lambda_cov));
}

inline Tape::NodeId augmix_objective(Tape& tape, const TapeModel& tm, const Matrix& x,
                                     std::span<const int> labels, const Augmenter& augment,
                                     double lambda_cov) {
    Matrix x_aug1 = augment(x);
    Matrix x_aug2 = augment(x);
    if (!all_finite(x_aug1) || !all_finite(x_aug2)) {
        throw DataError("augmix: augmenter produced non-finite values");
    }
    return augmix_objective_views(tape, tm, x, x_aug1, x_aug2, labels, lambda_cov);
}

// Outlier-exposure objective: CE on the labeled batch plus lambda times the
// batch-mean KL from the auxiliary posterior to the uniform distribution.
inline Tape::NodeId oe_objective(Tape& tape, const TapeModel& tm, const Matrix& x,
                                 std::span<const int> labels, const Matrix& x_aux, double lambda_sem,
                                 std::size_t num_classes) {
    if (x_aux.rows == 0) {
        throw ContractError("oe: auxiliary outlier batch is empty");
    }
    Tape::NodeId p = tape.softmax_rows(tape_forward(tape, tm, tape.constant(x)));
    Tape::NodeId ce = tape_cross_entropy(tape, p, labels);
    Tape::NodeId p_aux = tape.softmax_rows(tape_forward(tape, tm, tape.constant(x_aux)));
    Tape::NodeId uniform = tape.constant(Matrix(x_aux.rows, num_classes, 1.0 / static_cast<double>(num_classes)));
    return tape.add(ce, tape.scale(tape_kl_batch(tape, p_aux, uniform), lambda_sem));
}

}  // namespace trustlora
