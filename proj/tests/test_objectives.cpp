#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "trustlora/matrix.hpp"
#include "trustlora/model.hpp"
#include "trustlora/objectives.hpp"
#include "trustlora/rng.hpp"

using namespace trustlora;

namespace {

Matrix random_simplex_row(Rng& rng, std::size_t k) {
    Matrix logits(1, k);
    for (double& v : logits.data) {
        v = rng.next_range(-3.0, 3.0);
    }
    return softmax_rows(logits);
}

BaseModel tiny_model(Rng& rng, std::size_t in, std::vector<std::size_t> hidden, std::size_t k,
                     std::size_t rank = 1) {
    ModelConfig cfg;
    cfg.input_dim = in;
    cfg.hidden_dims = std::move(hidden);
    cfg.num_classes = k;
    cfg.lora_rank = rank;
    cfg.lora_seed = rng.next_u64();
    return init_base_model(cfg, rng.next_u64());
}

}  // namespace

TEST_CASE("cross entropy handles the boundary cases") {
    Matrix perfect(2, 3);
    perfect(0, 1) = 1.0;
    perfect(1, 2) = 1.0;
    const std::vector<int> y_perfect = {1, 2};
    CHECK(cross_entropy(perfect, y_perfect) == Catch::Approx(0.0).margin(1e-12));

    const Matrix uniform(3, 4, 0.25);
    const std::vector<int> y_any = {0, 3, 1};
    CHECK(cross_entropy(uniform, y_any) == Catch::Approx(std::log(4.0)).epsilon(1e-12));

    const Matrix p = Matrix::from_rows({{0.7, 0.3}});
    const std::vector<int> y1 = {1};
    CHECK(cross_entropy(p, y1) == Catch::Approx(-std::log(0.3)).epsilon(1e-12));
    CHECK(cross_entropy(p, y1) == Catch::Approx(1.203973).margin(1e-6));

    const std::vector<int> bad = {2};
    CHECK_THROWS_AS(cross_entropy(p, bad), ContractError);
}

TEST_CASE("kl divergence identities") {
    Rng rng(31);
    const Matrix p = random_simplex_row(rng, 5);
    CHECK(kl_div(p, p) == Catch::Approx(0.0).margin(1e-15));

    Matrix onehot(1, 6);
    onehot(0, 2) = 1.0;
    CHECK(kl_div(onehot, uniform_row(6)) == Catch::Approx(std::log(6.0)).epsilon(1e-12));

    const Matrix a = Matrix::row_vector({0.8, 0.2});
    const Matrix b = Matrix::row_vector({0.5, 0.5});
    const double expected = 0.8 * std::log(0.8 / 0.5) + 0.2 * std::log(0.2 / 0.5);
    CHECK(kl_div(a, b) == Catch::Approx(expected).epsilon(1e-12));
    CHECK(kl_div(a, b) == Catch::Approx(0.192745).margin(1e-6));

    CHECK_THROWS_AS(kl_div(a, uniform_row(3)), DimensionError);
}

TEST_CASE("kl divergence is nonnegative on random simplex pairs") {
    Rng rng(37);
    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t k = 2 + rng.next_below(7);
        const Matrix p = random_simplex_row(rng, k);
        const Matrix q = random_simplex_row(rng, k);
        REQUIRE(kl_div(p, q) >= -1e-13);
    }
}

TEST_CASE("js consistency of identical posteriors vanishes") {
    Rng rng(41);
    const Matrix p = random_simplex_row(rng, 4);
    CHECK(js_consistency(p, p, p) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("js consistency matches hand evaluation and is symmetric") {
    const Matrix p0 = Matrix::row_vector({1.0, 0.0});
    const Matrix p1 = Matrix::row_vector({0.0, 1.0});
    const Matrix p2 = Matrix::row_vector({0.5, 0.5});
    const double expected = 2.0 * std::log(2.0) / 3.0;
    CHECK(js_consistency(p0, p1, p2) == Catch::Approx(expected).epsilon(1e-12));
    CHECK(js_consistency(p0, p1, p2) == Catch::Approx(0.462098).margin(1e-6));

    CHECK(js_consistency(p1, p2, p0) == Catch::Approx(js_consistency(p0, p1, p2)).epsilon(1e-12));
    CHECK(js_consistency(p2, p0, p1) == Catch::Approx(js_consistency(p0, p1, p2)).epsilon(1e-12));
}

TEST_CASE("js consistency is nonnegative and separates unequal triples") {
    Rng rng(43);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t k = 2 + rng.next_below(5);
        const Matrix p0 = random_simplex_row(rng, k);
        const Matrix p1 = random_simplex_row(rng, k);
        const Matrix p2 = random_simplex_row(rng, k);
        const double js = js_consistency(p0, p1, p2);
        REQUIRE(js >= -1e-13);
        if (max_abs_diff(p0, p1) > 1e-6 || max_abs_diff(p0, p2) > 1e-6) {
            REQUIRE(js > 1e-12);
        }
    }
}

TEST_CASE("consistency objective reduces to cross entropy with identity views") {
    Rng rng(47);
    BaseModel model = tiny_model(rng, 3, {6}, 4);
    AdapterSet adapters = make_adapters(model.config);
    Matrix x(5, 3);
    for (double& v : x.data) {
        v = rng.next_gaussian();
    }
    std::vector<int> y;
    for (int i = 0; i < 5; ++i) {
        y.push_back(static_cast<int>(rng.next_below(4)));
    }

    Tape tape;
    const TapeModel tm = build_tape_model(tape, model, adapters, TrainPhase::lora, TrainMode::b_only);
    auto loss = augmix_objective_views(tape, tm, x, x, x, y, 12.0);

    const Matrix probs = softmax_rows(forward(model, adapters, x));
    CHECK(tape.value(loss)(0, 0) == Catch::Approx(cross_entropy(probs, y)).margin(1e-12));

    // lambda = 0 drops the consistency term entirely.
    Tape tape0;
    const TapeModel tm0 = build_tape_model(tape0, model, adapters, TrainPhase::lora, TrainMode::b_only);
    Matrix shaken = x;
    for (double& v : shaken.data) {
        v += 0.3;
    }
    auto plain = augmix_objective_views(tape0, tm0, x, shaken, shaken, y, 0.0);
    CHECK(tape0.value(plain)(0, 0) == Catch::Approx(cross_entropy(probs, y)).margin(1e-14));
}

TEST_CASE("consistency objective equals a two-pass recomputation") {
    Rng rng(53);
    BaseModel model = tiny_model(rng, 2, {5}, 3);
    AdapterSet adapters = make_adapters(model.config);
    for (double& v : adapters[0].B.data) {
        v = 0.1 * rng.next_gaussian();
    }
    Matrix x(4, 2);
    Matrix xa1(4, 2);
    Matrix xa2(4, 2);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        x.data[i] = rng.next_gaussian();
        xa1.data[i] = x.data[i] + 0.1 * rng.next_gaussian();
        xa2.data[i] = x.data[i] + 0.1 * rng.next_gaussian();
    }
    const std::vector<int> y = {0, 2, 1, 1};
    const double lambda = 12.0;

    Tape tape;
    const TapeModel tm = build_tape_model(tape, model, adapters, TrainPhase::lora, TrainMode::b_only);
    auto loss = augmix_objective_views(tape, tm, x, xa1, xa2, y, lambda);

    const Matrix p0 = softmax_rows(forward(model, adapters, x));
    const Matrix p1 = softmax_rows(forward(model, adapters, xa1));
    const Matrix p2 = softmax_rows(forward(model, adapters, xa2));
    const double oracle = cross_entropy(p0, y) + lambda * js_consistency_batch(p0, p1, p2);
    CHECK(tape.value(loss)(0, 0) == Catch::Approx(oracle).margin(1e-10));
}

TEST_CASE("consistency objective is monotone in lambda") {
    Rng rng(59);
    BaseModel model = tiny_model(rng, 2, {5}, 3);
    AdapterSet adapters = make_adapters(model.config);
    Matrix x(4, 2);
    Matrix xa1(4, 2);
    Matrix xa2(4, 2);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        x.data[i] = rng.next_gaussian();
        xa1.data[i] = x.data[i] + 0.2 * rng.next_gaussian();
        xa2.data[i] = x.data[i] + 0.2 * rng.next_gaussian();
    }
    const std::vector<int> y = {0, 1, 2, 0};

    double previous = -1.0;
    for (const double lambda : {0.0, 0.5, 2.0, 12.0}) {
        Tape tape;
        const TapeModel tm = build_tape_model(tape, model, adapters, TrainPhase::lora, TrainMode::b_only);
        const double loss = tape.value(augmix_objective_views(tape, tm, x, xa1, xa2, y, lambda))(0, 0);
        REQUIRE(loss >= previous - 1e-12);
        previous = loss;
    }
}

TEST_CASE("outlier objective boundary and oracle recomputation") {
    Rng rng(61);
    const std::size_t k = 4;

    // A model with all-zero weights emits uniform posteriors, so the
    // auxiliary term vanishes.
    ModelConfig cfg;
    cfg.input_dim = 2;
    cfg.hidden_dims = {5};
    cfg.num_classes = k;
    cfg.lora_rank = 1;
    BaseModel zero_model = init_base_model(cfg, 1);
    for (LinearLayer& layer : zero_model.layers) {
        layer.W = Matrix(layer.W.rows, layer.W.cols);
        layer.b = Matrix(1, layer.W.rows);
    }
    AdapterSet adapters = make_adapters(cfg);

    Matrix x(3, 2);
    Matrix aux(4, 2);
    for (double& v : x.data) {
        v = rng.next_gaussian();
    }
    for (double& v : aux.data) {
        v = rng.next_gaussian();
    }
    const std::vector<int> y = {0, 1, 3};

    Tape tape;
    const TapeModel tm = build_tape_model(tape, zero_model, adapters, TrainPhase::lora, TrainMode::b_only);
    auto loss = oe_objective(tape, tm, x, y, aux, 0.5, k);
    CHECK(tape.value(loss)(0, 0) == Catch::Approx(std::log(static_cast<double>(k))).epsilon(1e-12));

    // Mixed case against an independent recomputation.
    BaseModel model = tiny_model(rng, 2, {5}, k);
    AdapterSet lora = make_adapters(model.config);
    for (double& v : lora[0].B.data) {
        v = 0.2 * rng.next_gaussian();
    }
    Tape tape2;
    const TapeModel tm2 = build_tape_model(tape2, model, lora, TrainPhase::lora, TrainMode::b_only);
    const double lambda = 0.5;
    auto loss2 = oe_objective(tape2, tm2, x, y, aux, lambda, k);

    const Matrix p_id = softmax_rows(forward(model, lora, x));
    const Matrix p_aux = softmax_rows(forward(model, lora, aux));
    const double oracle = cross_entropy(p_id, y) + lambda * kl_to_uniform_batch(p_aux, k);
    CHECK(tape2.value(loss2)(0, 0) == Catch::Approx(oracle).margin(1e-10));

    // One-hot auxiliary posterior contributes exactly lambda * log K.
    Matrix onehot(1, k);
    onehot(0, 1) = 1.0;
    CHECK(kl_to_uniform_batch(onehot, k) == Catch::Approx(std::log(static_cast<double>(k))).epsilon(1e-12));

    const Matrix empty_aux(0, 2);
    Tape tape3;
    const TapeModel tm3 = build_tape_model(tape3, model, lora, TrainPhase::lora, TrainMode::b_only);
    CHECK_THROWS_AS(oe_objective(tape3, tm3, x, y, empty_aux, lambda, k), ContractError);
}

TEST_CASE("objective gradients pass finite-difference checks on small nets") {
    Rng rng(67);
    for (int trial = 0; trial < 3; ++trial) {
        ModelConfig cfg;
        cfg.input_dim = 3;
        cfg.hidden_dims = {8};
        cfg.num_classes = 4;
        cfg.lora_rank = 2;
        cfg.lora_seed = rng.next_u64();
        BaseModel model = init_base_model(cfg, rng.next_u64());
        AdapterSet adapters = make_adapters(cfg);
        for (LoraAdapter& ad : adapters) {
            for (double& v : ad.B.data) {
                v = 0.3 * rng.next_gaussian();
            }
        }

        Matrix x(4, 3);
        Matrix xa1(4, 3);
        Matrix xa2(4, 3);
        Matrix aux(3, 3);
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            x.data[i] = rng.next_gaussian();
            xa1.data[i] = x.data[i] + 0.15 * rng.next_gaussian();
            xa2.data[i] = x.data[i] + 0.15 * rng.next_gaussian();
        }
        for (double& v : aux.data) {
            v = 2.0 + rng.next_gaussian();
        }
        std::vector<int> y;
        for (int i = 0; i < 4; ++i) {
            y.push_back(static_cast<int>(rng.next_below(4)));
        }

        SECTION("consistency objective, trial " + std::to_string(trial)) {
            Tape tape;
            const TapeModel tm = build_tape_model(tape, model, adapters, TrainPhase::lora, TrainMode::a_and_b);
            tape.backward(augmix_objective_views(tape, tm, x, xa1, xa2, y, 12.0));

            const auto eval = [&] {
                const Matrix p0 = softmax_rows(forward(model, adapters, x));
                const Matrix p1 = softmax_rows(forward(model, adapters, xa1));
                const Matrix p2 = softmax_rows(forward(model, adapters, xa2));
                return cross_entropy(p0, y) + 12.0 * js_consistency_batch(p0, p1, p2);
            };
            CHECK(oracles::max_rel_error(tape.grad(tm.b_lora_nodes[0]),
                                         oracles::finite_difference_grad(eval, adapters[0].B)) < 1e-5);
            CHECK(oracles::max_rel_error(tape.grad(tm.a_nodes[0]),
                                         oracles::finite_difference_grad(eval, adapters[0].A)) < 1e-5);
        }

        SECTION("outlier objective, trial " + std::to_string(trial)) {
            Tape tape;
            const TapeModel tm = build_tape_model(tape, model, adapters, TrainPhase::lora, TrainMode::b_only);
            tape.backward(oe_objective(tape, tm, x, y, aux, 0.5, 4));

            const auto eval = [&] {
                const Matrix p = softmax_rows(forward(model, adapters, x));
                const Matrix pa = softmax_rows(forward(model, adapters, aux));
                return cross_entropy(p, y) + 0.5 * kl_to_uniform_batch(pa, 4);
            };
            CHECK(oracles::max_rel_error(tape.grad(tm.b_lora_nodes[0]),
                                         oracles::finite_difference_grad(eval, adapters[0].B)) < 1e-5);
        }
    }
}

TEST_CASE("objective config rejects non-positive weights") {
    ObjectiveConfig cfg;
    cfg.lambda_cov = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.lambda_cov = 1.0;
    cfg.lambda_sem = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
