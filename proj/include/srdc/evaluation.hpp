#pragma once

// Evaluation surfaces: accuracy, confusion matrix, NMI between a
// clustering and ground truth (natural logs, geometric-mean
// normalization), and a 2-D PCA projection for embedding plots. Everything
// is read-only with respect to model parameters; argmax ties resolve to
// the lowest class index.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "srdc/data.hpp"
#include "srdc/errors.hpp"
#include "srdc/model.hpp"
#include "srdc/tensor.hpp"

namespace srdc {

struct EvalReport {
    double accuracy = 0.0;
    std::vector<double> per_class_accuracy;       // length K
    std::vector<std::vector<std::size_t>> confusion;  // confusion[true][pred]
    double nmi = 0.0;
    std::vector<int> predictions;                  // 1-based labels
};

inline std::size_t argmax_row(const Tensor& P, std::size_t row) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < P.cols(); ++k)
        if (P.at(row, k) > P.at(row, best)) best = k;
    return best;
}

// Mutual information between two partitions normalized by the geometric
// mean of their entropies; 0 by convention when either partition is
// constant. Values are clamped into [0,1] against rounding.
inline double nmi(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw NumericError("nmi: length mismatch");
    const double n = static_cast<double>(a.size());
    if (a.empty()) return 0.0;

    std::unordered_map<int, double> ca, cb;
    std::unordered_map<long long, double> joint;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ca[a[i]] += 1.0;
        cb[b[i]] += 1.0;
        joint[(static_cast<long long>(a[i]) << 32) ^
              static_cast<unsigned int>(b[i])] += 1.0;
    }
    auto entropy = [n](const std::unordered_map<int, double>& counts) {
        double h = 0.0;
        for (const auto& [_, c] : counts) h -= (c / n) * std::log(c / n);
        return h;
    };
    const double ha = entropy(ca), hb = entropy(cb);
    if (ha <= 0.0 || hb <= 0.0) return 0.0;

    double mi = 0.0;
    for (const auto& [key, c] : joint) {
        const int label_a = static_cast<int>(key >> 32);
        const int label_b = static_cast<int>(key & 0xffffffff);
        mi += (c / n) * std::log(n * c / (ca.at(label_a) * cb.at(label_b)));
    }
    return std::clamp(mi / std::sqrt(ha * hb), 0.0, 1.0);
}

// Predictions are the per-row argmax of classify(embed(X)); the dataset
// must carry labels in either channel. Rows labeled -1 get predictions but
// are excluded from accuracy, confusion, and NMI.
inline EvalReport evaluate(const ModelParams& params, const Dataset& ds) {
    const std::vector<int>& labels = ds.metric_labels();
    if (labels.empty())
        throw ConfigError("evaluate: dataset '" + ds.name + "' has no labels");
    const std::size_t K = params.classifier.weight.cols();

    const Tensor P = classify(params, embed(params, ds.X));
    EvalReport report;
    report.confusion.assign(K, std::vector<std::size_t>(K, 0));
    report.predictions.reserve(ds.size());

    std::size_t correct = 0, labeled = 0;
    std::vector<int> truth_subset, pred_subset;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const int truth = labels[i];
        if (truth != -1 && (truth < 1 || static_cast<std::size_t>(truth) > K))
            throw NumericError("evaluate: label " + std::to_string(truth) +
                               " outside 1.." + std::to_string(K));
        const std::size_t pred = argmax_row(P, i);
        report.predictions.push_back(static_cast<int>(pred + 1));
        if (truth == -1) continue;
        ++labeled;
        truth_subset.push_back(truth);
        pred_subset.push_back(static_cast<int>(pred + 1));
        report.confusion[static_cast<std::size_t>(truth - 1)][pred] += 1;
        if (pred == static_cast<std::size_t>(truth - 1)) ++correct;
    }
    if (labeled == 0)
        throw ConfigError("evaluate: dataset '" + ds.name +
                          "' has no labeled rows");
    report.accuracy = static_cast<double>(correct) / static_cast<double>(labeled);
    report.per_class_accuracy.assign(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        std::size_t support = 0;
        for (std::size_t j = 0; j < K; ++j) support += report.confusion[k][j];
        if (support > 0)
            report.per_class_accuracy[k] =
                static_cast<double>(report.confusion[k][k]) /
                static_cast<double>(support);
    }
    report.nmi = nmi(pred_subset, truth_subset);
    return report;
}

namespace detail {

// Cyclic Jacobi eigendecomposition of a symmetric matrix; returns
// eigenvalues and column eigenvectors. Deterministic sweep order.
inline void jacobi_eigen(Tensor A, std::vector<double>& eigenvalues,
                         Tensor& eigenvectors) {
    const std::size_t d = A.rows();
    eigenvectors = Tensor({d, d});
    for (std::size_t i = 0; i < d; ++i) eigenvectors.at(i, i) = 1.0;

    for (std::size_t sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) off += A.at(p, q) * A.at(p, q);
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) {
                if (std::fabs(A.at(p, q)) < 1e-300) continue;
                const double theta = (A.at(q, q) - A.at(p, p)) / (2.0 * A.at(p, q));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t i = 0; i < d; ++i) {
                    const double aip = A.at(i, p), aiq = A.at(i, q);
                    A.at(i, p) = c * aip - s * aiq;
                    A.at(i, q) = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < d; ++i) {
                    const double api = A.at(p, i), aqi = A.at(q, i);
                    A.at(p, i) = c * api - s * aqi;
                    A.at(q, i) = s * api + c * aqi;
                }
                for (std::size_t i = 0; i < d; ++i) {
                    const double vip = eigenvectors.at(i, p), viq = eigenvectors.at(i, q);
                    eigenvectors.at(i, p) = c * vip - s * viq;
                    eigenvectors.at(i, q) = s * vip + c * viq;
                }
            }
    }
    eigenvalues.resize(d);
    for (std::size_t i = 0; i < d; ++i) eigenvalues[i] = A.at(i, i);
}

}  // namespace detail

// Projection onto the top `dims` principal components of the centered
// data. Component sign is fixed by making the largest-magnitude loading
// positive (lowest index on ties); zero-variance input projects to zero.
inline Tensor pca_project(const Tensor& Z, std::size_t dims = 2) {
    const std::size_t n = Z.rows(), d = Z.cols();
    if (n < dims) throw NumericError("pca_project: need at least `dims` rows");

    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += Z.at(i, j);
    for (double& m : mean) m /= static_cast<double>(n);

    Tensor cov({d, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < d; ++a) {
            const double za = Z.at(i, a) - mean[a];
            for (std::size_t b = 0; b < d; ++b)
                cov.at(a, b) += za * (Z.at(i, b) - mean[b]);
        }
    for (double& v : cov.values()) v /= static_cast<double>(n);

    std::vector<double> eigenvalues;
    Tensor vectors;
    detail::jacobi_eigen(cov, eigenvalues, vectors);

    std::vector<std::size_t> order(d);
    for (std::size_t i = 0; i < d; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return eigenvalues[a] > eigenvalues[b];
    });

    Tensor projection({n, dims});
    for (std::size_t c = 0; c < dims && c < d; ++c) {
        const std::size_t col = order[c];
        if (eigenvalues[col] <= 1e-18) continue;  // no variance along this axis
        std::size_t lead = 0;
        for (std::size_t j = 1; j < d; ++j)
            if (std::fabs(vectors.at(j, col)) > std::fabs(vectors.at(lead, col)))
                lead = j;
        const double sign = vectors.at(lead, col) < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j)
                dot += (Z.at(i, j) - mean[j]) * vectors.at(j, col);
            projection.at(i, c) = sign * dot;
        }
    }
    return projection;
}

}  // namespace srdc
