#pragma once

// Loss terms and schedules. Network updates differentiate the
// cross-entropy surrogates (with the auxiliary distribution held fixed,
// cross-entropy and KL differ by a constant); the KL and balance values
// are computed here for reporting. The lambda ramp and polynomial
// learning-rate decay both run over normalized epoch progress p in [0,1].

#include <cmath>
#include <string>
#include <vector>

#include "srdc/errors.hpp"
#include "srdc/tensor.hpp"

namespace srdc {

struct LossBreakdown {
    double target_out = 0.0;   // output-space clustering CE surrogate
    double target_feat = 0.0;  // feature-space clustering CE surrogate
    double source_out = 0.0;   // weighted source CE, output space
    double source_feat = 0.0;  // weighted source CE, feature space
    double balance_out = 0.0;  // sum_k rho log rho, output space (reporting)
    double balance_feat = 0.0;
    double lambda = 0.0;
    double total = 0.0;        // (target_out + target_feat) + lambda * (source_out + source_feat)
};

struct ScheduleParams {
    double eta0 = 0.001;
    double alpha = 10.0;
    double beta = 0.75;
    double gamma = 10.0;

    void validate() const {
        if (eta0 <= 0.0 || alpha < 0.0 || beta < 0.0 || gamma <= 0.0)
            throw ConfigError("schedule: eta0>0, alpha>=0, beta>=0, gamma>0 required");
    }
};

namespace detail {

inline double guarded_log(double v) {
    constexpr double guard = 1e-12;
    return std::log(v > guard ? v : guard);
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw NumericError(std::string(what) + ": shape mismatch " + a.shape_str() +
                           " vs " + b.shape_str());
}

}  // namespace detail

// -(1/n) sum_i sum_k q[i][k] log p[i][k]
inline double target_ce(const Tensor& P, const Tensor& Q) {
    detail::check_same_shape(P, Q, "target_ce");
    double loss = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i)
        loss -= Q[i] * detail::guarded_log(P[i]);
    return loss / static_cast<double>(P.rows());
}

// sum_k rho_k log rho_k with rho_k the mean assignment mass of cluster k.
// Ranges over [-log K, 0] for row-stochastic Q.
inline double balance_entropy(const Tensor& Q) {
    double value = 0.0;
    const double n = static_cast<double>(Q.rows());
    for (std::size_t k = 0; k < Q.cols(); ++k) {
        double rho = 0.0;
        for (std::size_t i = 0; i < Q.rows(); ++i) rho += Q.at(i, k);
        rho /= n;
        if (rho > 0.0) value += rho * detail::guarded_log(rho);
    }
    return value;
}

// (1/n) sum_i sum_k q log(q/p); zero q terms contribute nothing, positive q
// over zero p is a support violation.
inline double kl_divergence(const Tensor& Q, const Tensor& P) {
    detail::check_same_shape(P, Q, "kl_divergence");
    double kl = 0.0;
    for (std::size_t i = 0; i < Q.size(); ++i) {
        if (Q[i] <= 0.0) continue;
        if (P[i] <= 0.0)
            throw NumericError("kl_divergence: support violation (q > 0 where p = 0)");
        kl += Q[i] * (std::log(Q[i]) - std::log(P[i]));
    }
    return kl / static_cast<double>(Q.rows());
}

// -(1/n) sum_j w_j log p[j][y_j], labels 1-based.
inline double source_ce_weighted(const Tensor& P, const std::vector<int>& labels,
                                 const std::vector<double>& weights) {
    if (labels.size() != P.rows() || weights.size() != P.rows())
        throw NumericError("source_ce_weighted: label/weight count mismatch");
    double loss = 0.0;
    for (std::size_t j = 0; j < P.rows(); ++j) {
        const int label = labels[j];
        if (label < 1 || static_cast<std::size_t>(label) > P.cols())
            throw NumericError("source_ce_weighted: label " + std::to_string(label) +
                               " outside 1.." + std::to_string(P.cols()));
        loss -= weights[j] *
                detail::guarded_log(P.at(j, static_cast<std::size_t>(label - 1)));
    }
    return loss / static_cast<double>(P.rows());
}

// Assembles the joint objective value. The balance terms ride along for
// reporting only; they do not enter the differentiated total.
inline LossBreakdown srdc_total(double target_out, double target_feat,
                                double source_out, double source_feat,
                                double balance_out, double balance_feat,
                                double lambda) {
    LossBreakdown b;
    b.target_out = target_out;
    b.target_feat = target_feat;
    b.source_out = source_out;
    b.source_feat = source_feat;
    b.balance_out = balance_out;
    b.balance_feat = balance_feat;
    b.lambda = lambda;
    b.total = (target_out + target_feat) + lambda * (source_out + source_feat);
    if (!std::isfinite(b.total))
        throw NumericError("srdc_total: non-finite loss");
    return b;
}

// lambda_p = 2 / (1 + exp(-gamma p)) - 1; exactly 0 at p = 0, approaches 1.
inline double lambda_schedule(double p, double gamma) {
    if (p < 0.0 || p > 1.0)
        throw ConfigError("lambda_schedule: progress outside [0,1]");
    return 2.0 / (1.0 + std::exp(-gamma * p)) - 1.0;
}

// eta_p = eta0 * (1 + alpha p)^(-beta)
inline double lr_schedule(double p, double eta0, double alpha, double beta) {
    if (p < 0.0 || p > 1.0)
        throw ConfigError("lr_schedule: progress outside [0,1]");
    return eta0 * std::pow(1.0 + alpha * p, -beta);
}

}  // namespace srdc
