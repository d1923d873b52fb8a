#pragma once

// Non-gradient cluster machinery: the closed-form auxiliary distribution
// update, Lloyd K-means with deterministic tie and reseed rules, per-epoch
// center re-initialization, target cluster centers, and cosine-based
// source sample weights. All functions are pure; labels are 1-based
// (values in 1..K).

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "srdc/errors.hpp"
#include "srdc/tensor.hpp"

namespace srdc {

struct AuxiliaryState {
    Tensor q_out;                       // n_t x K, output-space auxiliary
    Tensor q_feat;                      // n_t x K, feature-space auxiliary
    Tensor target_centers;              // K x d_z
    std::vector<double> source_weights; // n_s, each in [0,1]
};

struct KMeansResult {
    Tensor centers;                   // K x d
    std::vector<std::size_t> assignments;  // n, values in [0,K)
    double inertia = 0.0;
    std::size_t iterations = 0;
    std::size_t reseeds = 0;
};

// ---- auxiliary distribution update ---------------------------------------

// Closed-form update: each probability is divided by the square root of
// its column mass, then rows are renormalized. Column masses may be taken
// from P itself (mini-batch mode) or supplied from a cached full-set pass.
// A column mass of exactly zero means a cluster has no predicted mass at
// all and is reported as a degenerate-cluster error.
//
// Weights are expressed relative to the heaviest column, sqrt(max_mass /
// mass_k). When every column mass is identical the weights are all exactly
// one and the update is the identity, so Q == P bit for bit.
inline Tensor update_auxiliary(const Tensor& P, const std::vector<double>& column_mass) {
    const std::size_t n = P.rows(), K = P.cols();
    if (column_mass.size() != K)
        throw NumericError("update_auxiliary: column mass size != K");
    double max_mass = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        if (column_mass[k] <= 0.0)
            throw NumericError("update_auxiliary: degenerate cluster " +
                               std::to_string(k + 1) + " (zero column mass)");
        if (column_mass[k] > max_mass) max_mass = column_mass[k];
    }
    std::vector<double> weight(K);
    bool identity = true;
    for (std::size_t k = 0; k < K; ++k) {
        weight[k] = std::sqrt(max_mass / column_mass[k]);
        identity = identity && weight[k] == 1.0;
    }
    if (identity) return P;
    Tensor Q({n, K});
    for (std::size_t i = 0; i < n; ++i) {
        double denom = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            Q.at(i, k) = P.at(i, k) * weight[k];
            denom += Q.at(i, k);
        }
        if (denom <= 0.0)
            throw NumericError("update_auxiliary: zero row mass at row " +
                               std::to_string(i));
        for (std::size_t k = 0; k < K; ++k) Q.at(i, k) /= denom;
    }
    return Q;
}

inline Tensor update_auxiliary(const Tensor& P) {
    std::vector<double> mass(P.cols(), 0.0);
    for (std::size_t i = 0; i < P.rows(); ++i)
        for (std::size_t k = 0; k < P.cols(); ++k) mass[k] += P.at(i, k);
    return update_auxiliary(P, mass);
}

inline std::vector<double> column_masses(const Tensor& P) {
    std::vector<double> mass(P.cols(), 0.0);
    for (std::size_t i = 0; i < P.rows(); ++i)
        for (std::size_t k = 0; k < P.cols(); ++k) mass[k] += P.at(i, k);
    return mass;
}

// ---- K-means --------------------------------------------------------------

namespace detail {

inline double sq_distance(const Tensor& A, std::size_t i, const Tensor& B,
                          std::size_t k) {
    double d = 0.0;
    for (std::size_t j = 0; j < A.cols(); ++j) {
        const double diff = A.at(i, j) - B.at(k, j);
        d += diff * diff;
    }
    return d;
}

inline std::size_t nearest_center(const Tensor& Z, std::size_t i,
                                  const Tensor& centers) {
    std::size_t best = 0;
    double best_d = sq_distance(Z, i, centers, 0);
    for (std::size_t k = 1; k < centers.rows(); ++k) {
        const double d = sq_distance(Z, i, centers, k);
        if (d < best_d) {  // ties keep the lowest index
            best_d = d;
            best = k;
        }
    }
    return best;
}

}  // namespace detail

// Lloyd iterations from the given centers until the largest center shift
// drops below tol or max_iters is reached. Deterministic rules:
//   - assignment ties go to the lowest center index;
//   - an empty cluster is reseeded (ascending cluster index) to the point
//     farthest from its currently assigned center, lowest point index on
//     ties, each point claimed at most once per round.
// The returned assignments are a final nearest-center pass against the
// returned centers, so the nearest-center invariant holds exactly.
inline KMeansResult kmeans(const Tensor& Z, std::size_t K,
                           const Tensor& init_centers,
                           std::size_t max_iters = 100, double tol = 1e-9) {
    const std::size_t n = Z.rows(), d = Z.cols();
    if (n < K) throw NumericError("kmeans: need at least K points");
    if (init_centers.rows() != K || init_centers.cols() != d)
        throw NumericError("kmeans: init centers must be K x d");
    if (!init_centers.all_finite())
        throw NumericError("kmeans: non-finite init centers");

    KMeansResult result;
    result.centers = init_centers;
    result.assignments.assign(n, 0);

    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        result.iterations = iter + 1;
        for (std::size_t i = 0; i < n; ++i)
            result.assignments[i] = detail::nearest_center(Z, i, result.centers);

        std::vector<std::size_t> counts(K, 0);
        for (std::size_t a : result.assignments) ++counts[a];

        std::vector<bool> claimed(n, false);
        for (std::size_t k = 0; k < K; ++k) {
            if (counts[k] > 0) continue;
            std::size_t far = n;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (claimed[i]) continue;
                const double dist =
                    detail::sq_distance(Z, i, result.centers, result.assignments[i]);
                if (dist > far_d) {
                    far_d = dist;
                    far = i;
                }
            }
            if (far == n) break;  // fewer distinct points than clusters
            claimed[far] = true;
            --counts[result.assignments[far]];
            result.assignments[far] = k;
            ++counts[k];
            for (std::size_t j = 0; j < d; ++j) result.centers.at(k, j) = Z.at(far, j);
            ++result.reseeds;
        }

        Tensor new_centers({K, d});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j)
                new_centers.at(result.assignments[i], j) += Z.at(i, j);
        double shift = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            if (counts[k] == 0) {
                for (std::size_t j = 0; j < d; ++j)
                    new_centers.at(k, j) = result.centers.at(k, j);
                continue;
            }
            double delta = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                new_centers.at(k, j) /= static_cast<double>(counts[k]);
                const double diff = new_centers.at(k, j) - result.centers.at(k, j);
                delta += diff * diff;
            }
            if (delta > shift) shift = delta;
        }
        result.centers = new_centers;
        if (std::sqrt(shift) < tol) break;
    }

    result.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        result.assignments[i] = detail::nearest_center(Z, i, result.centers);
        result.inertia +=
            detail::sq_distance(Z, i, result.centers, result.assignments[i]);
    }
    return result;
}

// ---- centers and weights ---------------------------------------------------

// Row k-1 is the mean of source features labeled k. Every class must be
// covered by at least one sample.
inline Tensor class_centroids(const Tensor& Z_s, const std::vector<int>& y_s,
                              std::size_t K) {
    if (Z_s.rows() != y_s.size())
        throw NumericError("class_centroids: label count mismatch");
    Tensor centroids({K, Z_s.cols()});
    std::vector<std::size_t> counts(K, 0);
    for (std::size_t i = 0; i < Z_s.rows(); ++i) {
        const int label = y_s[i];
        if (label < 1 || static_cast<std::size_t>(label) > K)
            throw NumericError("class_centroids: label " + std::to_string(label) +
                               " outside 1.." + std::to_string(K));
        const std::size_t k = static_cast<std::size_t>(label - 1);
        ++counts[k];
        for (std::size_t j = 0; j < Z_s.cols(); ++j)
            centroids.at(k, j) += Z_s.at(i, j);
    }
    for (std::size_t k = 0; k < K; ++k) {
        if (counts[k] == 0)
            throw NumericError("class_centroids: class " + std::to_string(k + 1) +
                               " has no source samples");
        for (std::size_t j = 0; j < Z_s.cols(); ++j)
            centroids.at(k, j) /= static_cast<double>(counts[k]);
    }
    return centroids;
}

// Per-epoch re-initialization of the learnable centers: the mean of the
// source features labeled k together with the target features currently
// assigned to k (argmax of the feature-space auxiliary, lowest index on
// ties). A class with no target members falls back to the source centroid.
inline Tensor reinit_mu(const Tensor& Z_s, const std::vector<int>& y_s,
                        const Tensor& Z_t, const Tensor& Q_feat) {
    const std::size_t K = Q_feat.cols();
    if (Q_feat.rows() != Z_t.rows())
        throw NumericError("reinit_mu: Q_feat rows != target count");
    if (Z_s.cols() != Z_t.cols())
        throw NumericError("reinit_mu: feature dims differ");
    Tensor mu({K, Z_s.cols()});
    std::vector<std::size_t> counts(K, 0);
    for (std::size_t i = 0; i < Z_s.rows(); ++i) {
        const int label = y_s[i];
        if (label < 1 || static_cast<std::size_t>(label) > K)
            throw NumericError("reinit_mu: source label outside 1..K");
        const std::size_t k = static_cast<std::size_t>(label - 1);
        ++counts[k];
        for (std::size_t j = 0; j < Z_s.cols(); ++j) mu.at(k, j) += Z_s.at(i, j);
    }
    for (std::size_t k = 0; k < K; ++k)
        if (counts[k] == 0)
            throw NumericError("reinit_mu: class " + std::to_string(k + 1) +
                               " has no source samples");
    for (std::size_t i = 0; i < Z_t.rows(); ++i) {
        std::size_t k = 0;
        for (std::size_t c = 1; c < K; ++c)
            if (Q_feat.at(i, c) > Q_feat.at(i, k)) k = c;
        ++counts[k];
        for (std::size_t j = 0; j < Z_t.cols(); ++j) mu.at(k, j) += Z_t.at(i, j);
    }
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t j = 0; j < mu.cols(); ++j)
            mu.at(k, j) /= static_cast<double>(counts[k]);
    return mu;
}

// Target cluster centers: Lloyd on the target features, initialized from
// the source class centroids so cluster k stays in correspondence with
// class k.
inline Tensor target_centers(const Tensor& Z_t, std::size_t K,
                             const Tensor& source_centroids,
                             std::size_t max_iters = 100, double tol = 1e-9) {
    return kmeans(Z_t, K, source_centroids, max_iters, tol).centers;
}

// w_j = (1 + cos(c_{y_j}, z_j)) / 2, clamped into [0,1] against rounding.
inline std::vector<double> source_weights(const Tensor& Z_s,
                                          const std::vector<int>& y_s,
                                          const Tensor& centers) {
    if (Z_s.rows() != y_s.size())
        throw NumericError("source_weights: label count mismatch");
    if (Z_s.cols() != centers.cols())
        throw NumericError("source_weights: feature dims differ");
    std::vector<double> w(Z_s.rows());
    for (std::size_t i = 0; i < Z_s.rows(); ++i) {
        const int label = y_s[i];
        if (label < 1 || static_cast<std::size_t>(label) > centers.rows())
            throw NumericError("source_weights: label outside 1..K");
        const std::size_t k = static_cast<std::size_t>(label - 1);
        double dot = 0.0, nz = 0.0, nc = 0.0;
        for (std::size_t j = 0; j < Z_s.cols(); ++j) {
            dot += centers.at(k, j) * Z_s.at(i, j);
            nz += Z_s.at(i, j) * Z_s.at(i, j);
            nc += centers.at(k, j) * centers.at(k, j);
        }
        if (nz == 0.0 || nc == 0.0)
            throw NumericError("source_weights: cosine undefined for zero-norm vector");
        double v = 0.5 * (1.0 + dot / (std::sqrt(nc) * std::sqrt(nz)));
        if (v < 0.0) v = 0.0;
        if (v > 1.0) v = 1.0;
        w[i] = v;
    }
    return w;
}

}  // namespace srdc
