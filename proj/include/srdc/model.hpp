#pragma once

// The adapted network: an MLP embedding phi (ReLU hidden layers, linear
// output into the feature space), a linear softmax classifier on top, and
// K learnable cluster centers living in the feature space. Plain forward
// routines here are used for evaluation and cluster bookkeeping; the
// matching graph builders produce the differentiable path used in
// training. Both compute the same functions.

#include <cstdint>
#include <string>
#include <vector>

#include "srdc/autodiff.hpp"
#include "srdc/errors.hpp"
#include "srdc/rng.hpp"
#include "srdc/tensor.hpp"

namespace srdc {

struct ModelSpec {
    std::size_t input_dim = 2;
    std::vector<std::size_t> hidden = {64, 32};
    std::size_t feature_dim = 8;
    std::size_t classes = 3;

    void validate() const {
        if (input_dim < 1 || feature_dim < 1)
            throw ConfigError("model spec: dims must be >= 1");
        for (std::size_t h : hidden)
            if (h < 1) throw ConfigError("model spec: hidden width must be >= 1");
        if (classes < 2) throw ConfigError("model spec: need at least 2 classes");
    }

    // phi layer widths including input and feature dims.
    std::vector<std::size_t> phi_dims() const {
        std::vector<std::size_t> dims{input_dim};
        dims.insert(dims.end(), hidden.begin(), hidden.end());
        dims.push_back(feature_dim);
        return dims;
    }
};

struct DenseLayer {
    Tensor weight;  // in x out
    Tensor bias;    // 1 x out
};

struct ModelParams {
    std::vector<DenseLayer> phi;
    DenseLayer classifier;
    Tensor centers;  // K x feature_dim

    // Fixed traversal order shared by the graph bindings, the optimizer
    // state, and checkpointing: phi layers, classifier, centers.
    template <typename Fn>
    void for_each(Fn&& fn) {
        for (std::size_t i = 0; i < phi.size(); ++i) {
            fn("phi_w" + std::to_string(i), phi[i].weight);
            fn("phi_b" + std::to_string(i), phi[i].bias);
        }
        fn(std::string("clf_w"), classifier.weight);
        fn(std::string("clf_b"), classifier.bias);
        fn(std::string("mu"), centers);
    }

    template <typename Fn>
    void for_each(Fn&& fn) const {
        const_cast<ModelParams*>(this)->for_each(
            [&fn](const std::string& name, Tensor& t) {
                fn(name, static_cast<const Tensor&>(t));
            });
    }

    bool all_finite() const {
        bool ok = true;
        for_each([&ok](const std::string&, const Tensor& t) {
            ok = ok && t.all_finite();
        });
        return ok;
    }
};

// Scaled uniform init, bound = sqrt(6 / (fan_in + fan_out)); biases zero.
// Centers start at zero: they are overwritten from cluster assignments
// before the first gradient step.
inline ModelParams init_params(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(mix_seed(seed, /*stream=*/0x70a7a));
    ModelParams params;
    const std::vector<std::size_t> dims = spec.phi_dims();
    auto make_layer = [&rng](std::size_t fan_in, std::size_t fan_out) {
        DenseLayer layer{Tensor({fan_in, fan_out}), Tensor({1, fan_out})};
        const double bound =
            std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (double& w : layer.weight.values()) w = rng.uniform(-bound, bound);
        return layer;
    };
    for (std::size_t i = 0; i + 1 < dims.size(); ++i)
        params.phi.push_back(make_layer(dims[i], dims[i + 1]));
    params.classifier = make_layer(spec.feature_dim, spec.classes);
    params.centers = Tensor({spec.classes, spec.feature_dim});
    return params;
}

// ---- plain forward ------------------------------------------------------

namespace detail {

inline Tensor dense(const Tensor& x, const DenseLayer& layer, bool relu) {
    if (x.cols() != layer.weight.rows())
        throw NumericError("model: input width " + std::to_string(x.cols()) +
                           " does not match layer fan-in " +
                           std::to_string(layer.weight.rows()));
    Tensor y({x.rows(), layer.weight.cols()});
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t k = 0; k < x.cols(); ++k) {
            const double xik = x.at(i, k);
            for (std::size_t j = 0; j < y.cols(); ++j)
                y.at(i, j) += xik * layer.weight.at(k, j);
        }
        for (std::size_t j = 0; j < y.cols(); ++j) {
            y.at(i, j) += layer.bias.at(0, j);
            if (relu && y.at(i, j) < 0.0) y.at(i, j) = 0.0;
        }
    }
    return y;
}

inline void softmax_rows_inplace(Tensor& logits) {
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        double mx = logits.at(i, 0);
        for (std::size_t j = 1; j < logits.cols(); ++j)
            if (logits.at(i, j) > mx) mx = logits.at(i, j);
        double denom = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            logits.at(i, j) = std::exp(logits.at(i, j) - mx);
            denom += logits.at(i, j);
        }
        for (std::size_t j = 0; j < logits.cols(); ++j) logits.at(i, j) /= denom;
    }
}

}  // namespace detail

// Z = phi(X): ReLU on hidden layers, linear map into the feature space.
inline Tensor embed(const ModelParams& params, const Tensor& X) {
    Tensor h = X;
    for (std::size_t i = 0; i < params.phi.size(); ++i)
        h = detail::dense(h, params.phi[i], /*relu=*/i + 1 < params.phi.size());
    return h;
}

// P = softmax(f(Z)), row-stochastic n x K.
inline Tensor classify(const ModelParams& params, const Tensor& Z) {
    Tensor logits = detail::dense(Z, params.classifier, /*relu=*/false);
    detail::softmax_rows_inplace(logits);
    return logits;
}

// Soft cluster assignment from instance-to-center distances:
//   p[i][k] = exp((1 + ||z_i - mu_k||^2)^-1) / sum_k' exp(...)
inline Tensor soft_assign(const Tensor& centers, const Tensor& Z) {
    if (centers.cols() != Z.cols())
        throw NumericError("soft_assign: center dim " +
                           std::to_string(centers.cols()) +
                           " does not match feature dim " +
                           std::to_string(Z.cols()));
    Tensor sim({Z.rows(), centers.rows()});
    for (std::size_t i = 0; i < Z.rows(); ++i)
        for (std::size_t k = 0; k < centers.rows(); ++k) {
            double d = 0.0;
            for (std::size_t j = 0; j < Z.cols(); ++j) {
                const double diff = Z.at(i, j) - centers.at(k, j);
                d += diff * diff;
            }
            sim.at(i, k) = 1.0 / (1.0 + d);
        }
    detail::softmax_rows_inplace(sim);
    return sim;
}

// ---- graph builders -------------------------------------------------------

struct ParamNodes {
    std::vector<NodeId> phi_w, phi_b;
    NodeId clf_w, clf_b;
    NodeId mu;
};

inline ParamNodes declare_params(Graph& g, const ModelSpec& spec) {
    ParamNodes nodes;
    const std::vector<std::size_t> dims = spec.phi_dims();
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        nodes.phi_w.push_back(
            g.placeholder("phi_w" + std::to_string(i), {dims[i], dims[i + 1]}));
        nodes.phi_b.push_back(
            g.placeholder("phi_b" + std::to_string(i), {1, dims[i + 1]}));
    }
    nodes.clf_w = g.placeholder("clf_w", {spec.feature_dim, spec.classes});
    nodes.clf_b = g.placeholder("clf_b", {1, spec.classes});
    nodes.mu = g.placeholder("mu", {spec.classes, spec.feature_dim});
    return nodes;
}

inline NodeId phi_forward(Graph& g, const ParamNodes& p, NodeId x) {
    NodeId h = x;
    for (std::size_t i = 0; i < p.phi_w.size(); ++i) {
        h = g.add_row_bias(g.matmul(h, p.phi_w[i]), p.phi_b[i]);
        if (i + 1 < p.phi_w.size()) h = g.relu(h);
    }
    return h;
}

inline NodeId classifier_forward(Graph& g, const ParamNodes& p, NodeId z) {
    return g.softmax_rows(g.add_row_bias(g.matmul(z, p.clf_w), p.clf_b));
}

inline NodeId soft_assign_forward(Graph& g, NodeId mu, NodeId z) {
    return g.softmax_rows(g.inv1p(g.sqdist(z, mu)));
}

// Placeholder bindings for every parameter tensor, in for_each order.
inline std::vector<std::pair<std::string, Tensor>> param_bindings(
    const ModelParams& params) {
    std::vector<std::pair<std::string, Tensor>> out;
    params.for_each([&out](const std::string& name, const Tensor& t) {
        out.emplace_back(name, t);
    });
    return out;
}

}  // namespace srdc
