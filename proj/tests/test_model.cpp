#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "srdc/srdc.hpp"
#include "test_util.hpp"

using namespace srdc;

namespace {

// Independent forward pass: nested loops, no shared helpers.
Tensor mlp_oracle(const ModelParams& params, const Tensor& X) {
    Tensor h = X;
    for (std::size_t layer = 0; layer < params.phi.size(); ++layer) {
        const Tensor& W = params.phi[layer].weight;
        const Tensor& b = params.phi[layer].bias;
        Tensor next({h.rows(), W.cols()});
        for (std::size_t i = 0; i < h.rows(); ++i)
            for (std::size_t j = 0; j < W.cols(); ++j) {
                double acc = b.at(0, j);
                for (std::size_t k = 0; k < h.cols(); ++k)
                    acc += h.at(i, k) * W.at(k, j);
                if (layer + 1 < params.phi.size() && acc < 0.0) acc = 0.0;
                next.at(i, j) = acc;
            }
        h = next;
    }
    return h;
}

Tensor softmax_oracle(const Tensor& logits) {
    Tensor out(logits.shape());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        double mx = logits.at(i, 0);
        for (std::size_t j = 1; j < logits.cols(); ++j)
            mx = std::max(mx, logits.at(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j)
            denom += std::exp(logits.at(i, j) - mx);
        for (std::size_t j = 0; j < logits.cols(); ++j)
            out.at(i, j) = std::exp(logits.at(i, j) - mx) / denom;
    }
    return out;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("init_params is deterministic in the seed") {
    ModelSpec spec;
    ModelParams a = init_params(spec, 17);
    ModelParams b = init_params(spec, 17);
    a.for_each([&b](const std::string& name, const Tensor& t) {
        b.for_each([&](const std::string& other, const Tensor& u) {
            if (other == name) CHECK(t.values() == u.values());
        });
    });
}

TEST_CASE("init_params shapes follow the model spec") {
    ModelSpec spec;
    spec.input_dim = 2;
    spec.hidden = {5};
    spec.feature_dim = 2;
    spec.classes = 3;
    ModelParams params = init_params(spec, 0);
    CHECK(params.centers.rows() == 3);
    CHECK(params.centers.cols() == 2);
    CHECK(params.phi.size() == 2);
    CHECK(params.phi[0].weight.rows() == 2);
    CHECK(params.phi[0].weight.cols() == 5);
    CHECK(params.classifier.weight.rows() == 2);
    CHECK(params.classifier.weight.cols() == 3);
    for (double v : params.centers.values()) CHECK(v == 0.0);
    for (double v : params.phi[0].bias.values()) CHECK(v == 0.0);
}

TEST_CASE("distinct seeds give distinct weights") {
    ModelSpec spec;
    ModelParams a = init_params(spec, 1);
    ModelParams b = init_params(spec, 2);
    CHECK(a.phi[0].weight.values() != b.phi[0].weight.values());
}

TEST_CASE("embed through zero weights is zero") {
    ModelSpec spec;
    spec.input_dim = 3;
    spec.hidden = {4};
    spec.feature_dim = 2;
    ModelParams params = init_params(spec, 0);
    for (auto& layer : params.phi) layer.weight.fill(0.0);
    Rng rng(1);
    Tensor X = testutil::random_matrix(rng, 5, 3);
    Tensor Z = embed(params, X);
    for (double v : Z.values()) CHECK(v == 0.0);
}

TEST_CASE("identity-weight phi with a hidden relu computes relu(X)") {
    ModelSpec spec;
    spec.input_dim = 2;
    spec.hidden = {2};
    spec.feature_dim = 2;
    ModelParams params = init_params(spec, 0);
    for (auto& layer : params.phi) {
        layer.weight.fill(0.0);
        for (std::size_t i = 0; i < 2; ++i) layer.weight.at(i, i) = 1.0;
        layer.bias.fill(0.0);
    }
    Tensor X = Tensor::row_major(2, 2, {-1.0, 2.0, 0.5, -3.0});
    Tensor Z = embed(params, X);
    CHECK(Z.at(0, 0) == 0.0);
    CHECK(Z.at(0, 1) == 2.0);
    CHECK(Z.at(1, 0) == 0.5);
    CHECK(Z.at(1, 1) == 0.0);
}

TEST_CASE("embed matches the loop oracle on random inputs") {
    ModelSpec spec;
    spec.input_dim = 4;
    spec.hidden = {7, 5};
    spec.feature_dim = 3;
    ModelParams params = init_params(spec, 9);
    Rng rng(2);
    Tensor X = testutil::random_matrix(rng, 6, 4);
    Tensor Z = embed(params, X);
    Tensor Z_oracle = mlp_oracle(params, X);
    for (std::size_t i = 0; i < Z.size(); ++i)
        CHECK(Z[i] == doctest::Approx(Z_oracle[i]).epsilon(1e-12));
}

TEST_CASE("classify with zero classifier weights is uniform") {
    ModelSpec spec;
    spec.classes = 4;
    ModelParams params = init_params(spec, 0);
    params.classifier.weight.fill(0.0);
    Rng rng(3);
    Tensor Z = testutil::random_matrix(rng, 3, spec.feature_dim);
    Tensor P = classify(params, Z);
    for (double v : P.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("a dominating logit saturates its class") {
    ModelSpec spec;
    spec.feature_dim = 1;
    spec.hidden = {2};
    spec.classes = 3;
    ModelParams params = init_params(spec, 0);
    params.classifier.weight.fill(0.0);
    params.classifier.bias.fill(0.0);
    params.classifier.bias.at(0, 1) = 1000.0;
    Tensor Z({2, 1});
    Tensor P = classify(params, Z);
    CHECK(P.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(P.at(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("classify matches the softmax oracle") {
    ModelSpec spec;
    ModelParams params = init_params(spec, 4);
    Rng rng(5);
    Tensor Z = testutil::random_matrix(rng, 8, spec.feature_dim, 2.0);
    Tensor P = classify(params, Z);
    Tensor logits({8, spec.classes});
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < spec.classes; ++j) {
            double acc = params.classifier.bias.at(0, j);
            for (std::size_t k = 0; k < spec.feature_dim; ++k)
                acc += Z.at(i, k) * params.classifier.weight.at(k, j);
            logits.at(i, j) = acc;
        }
    Tensor P_oracle = softmax_oracle(logits);
    for (std::size_t i = 0; i < P.size(); ++i)
        CHECK(P[i] == doctest::Approx(P_oracle[i]).epsilon(1e-12));
}

TEST_CASE("soft_assign is uniform for equidistant centers") {
    Tensor centers = Tensor::row_major(2, 2, {1.0, 0.0, -1.0, 0.0});
    Tensor Z = Tensor::row_major(1, 2, {0.0, 5.0});
    Tensor P = soft_assign(centers, Z);
    CHECK(P.at(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(P.at(0, 1) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("soft_assign one-dimensional frozen value") {
    // z = 0 against centers {0, 1}: similarities 1 and 1/2, so the first
    // probability is e^1 / (e^1 + e^0.5).
    Tensor centers = Tensor::row_major(2, 1, {0.0, 1.0});
    Tensor Z = Tensor::row_major(1, 1, {0.0});
    Tensor P = soft_assign(centers, Z);
    CHECK(P.at(0, 0) == doctest::Approx(0.62245933120185448).epsilon(1e-12));
    CHECK(P.at(0, 1) == doctest::Approx(0.37754066879814552).epsilon(1e-12));
}

TEST_CASE("soft_assign limit: one coincident center, the rest far away") {
    const std::size_t K = 3;
    Tensor centers = Tensor::row_major(3, 1, {0.0, 1e8, -1e8});
    Tensor Z = Tensor::row_major(1, 1, {0.0});
    Tensor P = soft_assign(centers, Z);
    const double expected = std::exp(1.0) / (std::exp(1.0) + (K - 1));
    CHECK(P.at(0, 0) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("soft_assign commutes with center permutation") {
    Rng rng(6);
    Tensor centers = testutil::random_matrix(rng, 3, 4);
    Tensor Z = testutil::random_matrix(rng, 5, 4);
    Tensor P = soft_assign(centers, Z);
    Tensor permuted({3, 4});
    const std::size_t perm[3] = {2, 0, 1};
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t j = 0; j < 4; ++j)
            permuted.at(k, j) = centers.at(perm[k], j);
    Tensor P2 = soft_assign(permuted, Z);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t k = 0; k < 3; ++k)
            CHECK(P2.at(i, k) == doctest::Approx(P.at(i, perm[k])).epsilon(1e-12));
}

TEST_CASE("classify and soft_assign rows are stochastic for random inputs") {
    Rng rng(7);
    ModelSpec spec;
    ModelParams params = init_params(spec, 8);
    for (double& v : params.centers.values()) v = rng.normal();
    for (int trial = 0; trial < 10; ++trial) {
        Tensor X = testutil::random_matrix(rng, 7, spec.input_dim, 3.0);
        Tensor Z = embed(params, X);
        for (const Tensor& P : {classify(params, Z), soft_assign(params.centers, Z)}) {
            for (std::size_t i = 0; i < P.rows(); ++i) {
                double sum = 0.0;
                for (std::size_t k = 0; k < P.cols(); ++k) {
                    CHECK(P.at(i, k) >= 0.0);
                    CHECK(P.at(i, k) <= 1.0);
                    sum += P.at(i, k);
                }
                CHECK(std::fabs(sum - 1.0) < 1e-12);
            }
        }
    }
}

TEST_CASE("checkpoints round-trip parameters losslessly") {
    ModelSpec spec;
    spec.input_dim = 3;
    spec.hidden = {5};
    spec.feature_dim = 2;
    spec.classes = 3;
    ModelParams params = init_params(spec, 31);
    Rng rng(32);
    for (double& v : params.centers.values()) v = rng.normal();

    const auto path = (std::filesystem::temp_directory_path() /
                       "srdc_model_tests_checkpoint.json")
                          .string();
    save_checkpoint(path, spec, params);
    auto [loaded_spec, loaded] = load_checkpoint(path);
    CHECK(loaded_spec.hidden == spec.hidden);
    CHECK(loaded_spec.classes == spec.classes);
    params.for_each([&loaded](const std::string& name, const Tensor& t) {
        loaded.for_each([&](const std::string& other, const Tensor& u) {
            if (other == name) CHECK(t.values() == u.values());
        });
    });
    CHECK_THROWS_AS(load_checkpoint("definitely_missing.json"), IoError);
}

TEST_CASE("soft_assign gradients w.r.t. features match finite differences") {
    // Plain soft_assign supplies the finite-difference values, the graph
    // supplies the analytic gradient, so this also pins the two paths to
    // each other.
    Rng rng(9);
    const std::size_t n = 4, d = 3, K = 2;
    Tensor centers = testutil::random_matrix(rng, K, d);
    Tensor Q = testutil::random_stochastic(rng, n, K);
    Tensor Z0 = testutil::random_matrix(rng, n, d);

    auto value = [&](const std::vector<double>& flat) {
        return target_ce(soft_assign(centers, Tensor({n, d}, flat)), Q);
    };
    auto grad = [&](const std::vector<double>& flat) {
        Graph g;
        NodeId z = g.placeholder("z", {n, d});
        NodeId p = g.softmax_rows(g.inv1p(g.sqdist(z, g.constant(centers))));
        NodeId loss = g.scale(g.sum_all(g.hadamard(g.constant(Q), g.log_guard(p))),
                              -1.0 / static_cast<double>(n));
        g.evaluate({{"z", Tensor({n, d}, flat)}});
        g.backward(loss);
        return g.grad(z).values();
    };
    CHECK(grad_check(value, grad, Z0.values(), 1e-5) < 1e-4);
}

}  // TEST_SUITE
