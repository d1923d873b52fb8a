#pragma once

// The training loop. One epoch: refresh the per-epoch cluster state
// (auxiliary distributions at epoch 1 come from K-means seeded at the
// source class centroids; the learnable centers are re-initialized from
// the current assignments), then run mini-batch SGD steps on the joint
// objective, then recompute target cluster centers and source weights for
// the next epoch. Schedules advance once per epoch: epoch e uses progress
// p = (e-1)/epochs, so training starts at lambda = 0 and the base rate.
//
// Everything is driven by one seeded generator; two runs with the same
// config, datasets and seed produce identical histories bit for bit.

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "srdc/autodiff.hpp"
#include "srdc/clustering.hpp"
#include "srdc/data.hpp"
#include "srdc/errors.hpp"
#include "srdc/evaluation.hpp"
#include "srdc/model.hpp"
#include "srdc/objectives.hpp"
#include "srdc/rng.hpp"
#include "srdc/tensor.hpp"

namespace srdc {

enum class AuxMode { batch, full };
enum class Selection { best_target_acc, final_epoch };

struct TrainConfig {
    std::size_t epochs = 200;
    std::size_t batch_size = 64;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    ScheduleParams schedule;
    std::uint64_t seed = 0;

    // Ablation switches (independent).
    bool source_only = false;         // supervised baseline, no target losses
    bool no_source_reg = false;       // lambda forced to 0, weights ignored
    bool no_feature_discrim = false;  // feature-space terms dropped
    bool no_soft_selection = false;   // weights pinned to 1

    AuxMode aux_mode = AuxMode::batch;
    Selection selection = Selection::best_target_acc;

    // Set when the starting parameters come from a checkpoint; the
    // classifier and centers then train at 10x the embedding rate.
    bool pretrained = false;

    std::size_t kmeans_max_iters = 100;
    double kmeans_tol = 1e-9;

    void validate() const {
        if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
        if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
        if (momentum < 0.0 || momentum >= 1.0)
            throw ConfigError("train: momentum must lie in [0,1)");
        if (weight_decay < 0.0) throw ConfigError("train: negative weight decay");
        if (source_only && no_source_reg)
            throw ConfigError("train: source_only and no_source_reg leave no objective");
        schedule.validate();
    }
};

struct EpochRecord {
    LossBreakdown loss;
    double kl_out = 0.0;   // reported value of the output-space KL term
    double kl_feat = 0.0;
    double lr = 0.0;
    double source_acc = -1.0;
    double target_acc = -1.0;  // -1 when target evaluation labels are absent
    double seconds = 0.0;
    std::size_t kmeans_reseeds = 0;
};

struct RunHistory {
    std::vector<EpochRecord> epochs;
    std::size_t selected_epoch = 0;  // 1-based

    // Pinned per-epoch CSV schema; wall-clock stays out so reruns of the
    // same config are byte-identical.
    std::string to_csv() const {
        std::string out =
            "epoch,target_out,target_feat,source_out,source_feat,"
            "balance_out,balance_feat,lambda,lr,src_acc,tgt_acc\n";
        for (std::size_t i = 0; i < epochs.size(); ++i) {
            const EpochRecord& r = epochs[i];
            out += std::to_string(i + 1);
            for (double v : {r.loss.target_out, r.loss.target_feat, r.loss.source_out,
                             r.loss.source_feat, r.loss.balance_out, r.loss.balance_feat,
                             r.loss.lambda, r.lr, r.source_acc, r.target_acc}) {
                out += ',';
                out += detail::format_double(v);
            }
            out += '\n';
        }
        return out;
    }
};

struct TrainResult {
    ModelParams selected;
    ModelParams final_params;
    RunHistory history;
    AuxiliaryState aux;
};

// v <- momentum * v + grad + weight_decay * param; param <- param - lr * v
inline void sgd_step(Tensor& param, Tensor& velocity, const Tensor& grad,
                     double lr, double momentum, double weight_decay) {
    if (!param.same_shape(grad) || !param.same_shape(velocity))
        throw NumericError("sgd_step: shape mismatch");
    for (std::size_t i = 0; i < param.size(); ++i) {
        velocity[i] = momentum * velocity[i] + grad[i] + weight_decay * param[i];
        param[i] -= lr * velocity[i];
        if (!std::isfinite(param[i]))
            throw NumericError("sgd_step: non-finite parameter update");
    }
}

// best_target_acc: argmax of per-epoch target accuracy, earliest on ties;
// final_epoch: the last epoch. Returns a 1-based index.
inline std::size_t select_model(const RunHistory& history, Selection mode) {
    if (history.epochs.empty()) throw ConfigError("select_model: empty history");
    if (mode == Selection::final_epoch) return history.epochs.size();
    std::size_t best = 0;
    for (std::size_t i = 1; i < history.epochs.size(); ++i)
        if (history.epochs[i].target_acc > history.epochs[best].target_acc)
            best = i;
    return best + 1;
}

namespace detail {

inline Tensor gather_rows(const Tensor& X, const std::vector<std::size_t>& rows) {
    Tensor out({rows.size(), X.cols()});
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < X.cols(); ++j)
            out.at(i, j) = X.at(rows[i], j);
    return out;
}

inline Tensor one_hot(const std::vector<std::size_t>& assignments, std::size_t K) {
    Tensor Q({assignments.size(), K});
    for (std::size_t i = 0; i < assignments.size(); ++i)
        Q.at(i, assignments[i]) = 1.0;
    return Q;
}

inline void check_rows_stochastic(const Tensor& P, const char* what) {
    for (std::size_t i = 0; i < P.rows(); ++i) {
        double sum = 0.0;
        for (std::size_t k = 0; k < P.cols(); ++k) {
            if (P.at(i, k) < 0.0)
                throw NumericError(std::string(what) + ": negative probability");
            sum += P.at(i, k);
        }
        if (std::fabs(sum - 1.0) > 1e-9)
            throw NumericError(std::string(what) + ": row does not sum to 1");
    }
}

// Accuracy over the labeled rows; -1 labels are skipped, and -1 is returned
// when nothing is labeled.
inline double accuracy_against(const Tensor& P, const std::vector<int>& labels) {
    std::size_t correct = 0, labeled = 0;
    for (std::size_t i = 0; i < P.rows(); ++i) {
        if (labels[i] == -1) continue;
        ++labeled;
        if (argmax_row(P, i) + 1 == static_cast<std::size_t>(labels[i])) ++correct;
    }
    if (labeled == 0) return -1.0;
    return static_cast<double>(correct) / static_cast<double>(labeled);
}

// Which loss terms a variant trains on.
struct Terms {
    bool target = true;
    bool source = true;
    bool feature = true;
};

inline Terms active_terms(const TrainConfig& cfg) {
    Terms t;
    t.target = !cfg.source_only;
    t.source = !cfg.no_source_reg;
    t.feature = !cfg.no_feature_discrim && !cfg.source_only;
    return t;
}

// The per-iteration loss graph. Placeholders are bound fresh every step;
// the structure is fixed for the whole run.
struct LossGraph {
    Graph g;
    ParamNodes params;
    NodeId xt, q_out, q_feat;
    NodeId xs, w_onehot;
    NodeId lambda;
    NodeId total;

    LossGraph(const ModelSpec& spec, std::size_t batch, const Terms& terms) {
        params = declare_params(g, spec);
        const double inv_batch = -1.0 / static_cast<double>(batch);
        std::vector<NodeId> pieces;

        if (terms.target) {
            xt = g.placeholder("xt", {batch, spec.input_dim});
            q_out = g.placeholder("q_out", {batch, spec.classes});
            NodeId zt = phi_forward(g, params, xt);
            NodeId pt = classifier_forward(g, params, zt);
            pieces.push_back(
                g.scale(g.sum_all(g.hadamard(q_out, g.log_guard(pt))), inv_batch));
            if (terms.feature) {
                q_feat = g.placeholder("q_feat", {batch, spec.classes});
                NodeId ptf = soft_assign_forward(g, params.mu, zt);
                pieces.push_back(g.scale(
                    g.sum_all(g.hadamard(q_feat, g.log_guard(ptf))), inv_batch));
            }
        }
        if (terms.source) {
            xs = g.placeholder("xs", {batch, spec.input_dim});
            w_onehot = g.placeholder("w_onehot", {batch, spec.classes});
            lambda = g.placeholder("lambda", {1});
            NodeId zs = phi_forward(g, params, xs);
            NodeId ps = classifier_forward(g, params, zs);
            NodeId s = g.scale(g.sum_all(g.hadamard(w_onehot, g.log_guard(ps))),
                               inv_batch);
            if (terms.feature) {
                NodeId psf = soft_assign_forward(g, params.mu, zs);
                s = g.add(s, g.scale(g.sum_all(g.hadamard(w_onehot, g.log_guard(psf))),
                                     inv_batch));
            }
            pieces.push_back(g.hadamard(lambda, s));
        }
        total = pieces.front();
        for (std::size_t i = 1; i < pieces.size(); ++i)
            total = g.add(total, pieces[i]);
    }
};

}  // namespace detail

inline TrainResult train(const TrainConfig& cfg, const Dataset& source,
                         const Dataset& target, const ModelSpec& spec,
                         const ModelParams* warm_start = nullptr) {
    cfg.validate();
    spec.validate();
    const std::size_t K = spec.classes;
    if (source.y.empty())
        throw ConfigError("train: source dataset must be labeled");
    if (source.dim() != spec.input_dim || target.dim() != spec.input_dim)
        throw ConfigError("train: dataset dims do not match model spec");
    {
        std::vector<bool> seen(K, false);
        for (int label : source.y) {
            if (label < 1 || static_cast<std::size_t>(label) > K)
                throw ConfigError("train: source label outside 1..K");
            seen[static_cast<std::size_t>(label - 1)] = true;
        }
        for (bool s : seen)
            if (!s) throw ConfigError("train: source must cover every class");
    }
    bool have_target_eval = false;
    for (int label : target.eval_y) have_target_eval = have_target_eval || label != -1;
    if (!have_target_eval && cfg.selection == Selection::best_target_acc)
        throw ConfigError(
            "train: best_target_acc selection needs target evaluation labels");
    if (target.size() < K && !cfg.source_only)
        throw ConfigError("train: target needs at least K samples");

    const detail::Terms terms = detail::active_terms(cfg);
    const std::size_t n_t = target.size(), n_s = source.size();
    const std::size_t B = cfg.batch_size;
    const std::size_t iters =
        (std::max(n_s, n_t) + B - 1) / B;  // wraps the smaller domain

    ModelParams params = warm_start ? *warm_start : init_params(spec, cfg.seed);
    if (warm_start && !params.all_finite())
        throw NumericError("train: warm-start parameters are not finite");

    // Optimizer state in for_each order; centers get no weight decay and,
    // together with the classifier, a 10x rate when fine-tuning a
    // pretrained embedding.
    struct Slot {
        Tensor* param;
        Tensor velocity;
        double lr_scale;
        double decay;
        bool is_mu;
    };
    std::vector<Slot> slots;
    params.for_each([&](const std::string& name, Tensor& t) {
        const bool is_mu = name == "mu";
        const bool new_layer = is_mu || name == "clf_w" || name == "clf_b";
        slots.push_back(Slot{&t, Tensor(t.shape()),
                             cfg.pretrained && new_layer ? 10.0 : 1.0,
                             is_mu ? 0.0 : cfg.weight_decay, is_mu});
    });

    detail::LossGraph loss_graph(spec, B, terms);
    Rng rng(mix_seed(cfg.seed, 0x7124));

    TrainResult result;
    result.aux.source_weights.assign(n_s, 1.0);
    std::vector<double> mass_out, mass_feat;  // full-set column masses
    double best_acc = -1.0;

    std::vector<std::size_t> order_t(n_t), order_s(n_s);
    for (std::size_t i = 0; i < n_t; ++i) order_t[i] = i;
    for (std::size_t i = 0; i < n_s; ++i) order_s[i] = i;

    // Full-set embeddings computed at each epoch end are still current at
    // the next epoch start (no parameter update in between), so they are
    // carried over instead of recomputed.
    Tensor Z_t_cache, Z_s_cache;
    bool have_cache = false;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        EpochRecord record;
        const double progress = static_cast<double>(epoch - 1) /
                                static_cast<double>(cfg.epochs);
        const double lr = lr_schedule(progress, cfg.schedule.eta0,
                                      cfg.schedule.alpha, cfg.schedule.beta);
        double lambda = 0.0;
        if (cfg.source_only)
            lambda = 1.0;
        else if (terms.source)
            lambda = lambda_schedule(progress, cfg.schedule.gamma);
        record.lr = lr;

        // ---- epoch-start cluster state ---------------------------------
        if (terms.target) {
            Tensor Z_t = have_cache ? std::move(Z_t_cache) : embed(params, target.X);
            Tensor Z_s;
            if (epoch == 1 || terms.feature)
                Z_s = have_cache ? std::move(Z_s_cache) : embed(params, source.X);
            if (epoch == 1) {
                Tensor centroids = class_centroids(Z_s, source.y, K);
                KMeansResult km = kmeans(Z_t, K, centroids, cfg.kmeans_max_iters,
                                         cfg.kmeans_tol);
                record.kmeans_reseeds += km.reseeds;
                result.aux.q_out = detail::one_hot(km.assignments, K);
                result.aux.q_feat = result.aux.q_out;
            } else if (terms.feature) {
                result.aux.q_feat =
                    update_auxiliary(soft_assign(params.centers, Z_t));
            }
            if (terms.feature) {
                params.centers = reinit_mu(Z_s, source.y, Z_t, result.aux.q_feat);
                for (auto& slot : slots)
                    if (slot.is_mu) slot.velocity.fill(0.0);  // centers teleported
            }
            if (cfg.aux_mode == AuxMode::full) {
                mass_out = column_masses(classify(params, Z_t));
                if (terms.feature)
                    mass_feat = column_masses(soft_assign(params.centers, Z_t));
            }
        }
        have_cache = false;

        // ---- mini-batch SGD ---------------------------------------------
        rng.shuffle(order_t);
        rng.shuffle(order_s);
        const Tensor lambda_tensor = Tensor::scalar(lambda);
        for (std::size_t it = 0; it < iters; ++it) {
            std::vector<std::pair<std::string, Tensor>> bindings =
                param_bindings(params);

            std::vector<std::size_t> batch_t(B), batch_s(B);
            if (terms.target) {
                for (std::size_t j = 0; j < B; ++j)
                    batch_t[j] = order_t[(it * B + j) % n_t];
                Tensor X_b = detail::gather_rows(target.X, batch_t);
                if (epoch == 1) {
                    bindings.emplace_back(
                        "q_out", detail::gather_rows(result.aux.q_out, batch_t));
                    if (terms.feature)
                        bindings.emplace_back(
                            "q_feat", detail::gather_rows(result.aux.q_feat, batch_t));
                } else {
                    Tensor Z_b = embed(params, X_b);
                    Tensor P_b = classify(params, Z_b);
                    bindings.emplace_back(
                        "q_out", cfg.aux_mode == AuxMode::full
                                     ? update_auxiliary(P_b, mass_out)
                                     : update_auxiliary(P_b));
                    if (terms.feature) {
                        Tensor Pf_b = soft_assign(params.centers, Z_b);
                        bindings.emplace_back(
                            "q_feat", cfg.aux_mode == AuxMode::full
                                          ? update_auxiliary(Pf_b, mass_feat)
                                          : update_auxiliary(Pf_b));
                    }
                }
                bindings.emplace_back("xt", std::move(X_b));
            }
            if (terms.source) {
                for (std::size_t j = 0; j < B; ++j)
                    batch_s[j] = order_s[(it * B + j) % n_s];
                bindings.emplace_back("xs", detail::gather_rows(source.X, batch_s));
                Tensor w_onehot({B, K});
                for (std::size_t j = 0; j < B; ++j) {
                    const std::size_t src = batch_s[j];
                    w_onehot.at(j, static_cast<std::size_t>(source.y[src] - 1)) =
                        result.aux.source_weights[src];
                }
                bindings.emplace_back("w_onehot", std::move(w_onehot));
                bindings.emplace_back("lambda", lambda_tensor);
            }

            loss_graph.g.evaluate(bindings);
            loss_graph.g.backward(loss_graph.total);

            std::size_t slot_index = 0;
            auto step = [&](NodeId node) {
                Slot& slot = slots[slot_index++];
                if (slot.is_mu && !terms.feature) return;  // centers unused
                sgd_step(*slot.param, slot.velocity, loss_graph.g.grad(node),
                         lr * slot.lr_scale, cfg.momentum, slot.decay);
            };
            for (std::size_t l = 0; l < loss_graph.params.phi_w.size(); ++l) {
                step(loss_graph.params.phi_w[l]);
                step(loss_graph.params.phi_b[l]);
            }
            step(loss_graph.params.clf_w);
            step(loss_graph.params.clf_b);
            step(loss_graph.params.mu);
        }

        // ---- end-of-epoch reporting and state refresh --------------------
        Tensor Z_t = embed(params, target.X);
        Tensor Z_s = embed(params, source.X);
        Tensor P_t = classify(params, Z_t);
        Tensor P_s = classify(params, Z_s);
        detail::check_rows_stochastic(P_t, "target probabilities");
        detail::check_rows_stochastic(P_s, "source probabilities");

        double t_out = 0.0, t_feat = 0.0, bal_out = 0.0, bal_feat = 0.0;
        if (terms.target) {
            const Tensor& Q_out =
                epoch == 1 ? result.aux.q_out
                           : (result.aux.q_out = update_auxiliary(P_t));
            detail::check_rows_stochastic(Q_out, "auxiliary distribution");
            t_out = target_ce(P_t, Q_out);
            bal_out = balance_entropy(Q_out);
            record.kl_out = kl_divergence(Q_out, P_t);
            if (terms.feature) {
                Tensor Pf_t = soft_assign(params.centers, Z_t);
                detail::check_rows_stochastic(Pf_t, "soft assignments");
                const Tensor& Q_feat =
                    epoch == 1 ? result.aux.q_feat
                               : (result.aux.q_feat = update_auxiliary(Pf_t));
                t_feat = target_ce(Pf_t, Q_feat);
                bal_feat = balance_entropy(Q_feat);
                record.kl_feat = kl_divergence(Q_feat, Pf_t);
            }
        }
        double s_out = 0.0, s_feat = 0.0;
        if (terms.source) {
            s_out = source_ce_weighted(P_s, source.y, result.aux.source_weights);
            if (terms.feature)
                s_feat = source_ce_weighted(soft_assign(params.centers, Z_s),
                                            source.y, result.aux.source_weights);
        }
        record.loss = srdc_total(t_out, t_feat, s_out, s_feat, bal_out, bal_feat,
                                 lambda);

        record.source_acc = detail::accuracy_against(P_s, source.y);
        if (have_target_eval)
            record.target_acc = detail::accuracy_against(P_t, target.eval_y);

        if (terms.target) {
            Tensor centroids = class_centroids(Z_s, source.y, K);
            KMeansResult km = kmeans(Z_t, K, centroids, cfg.kmeans_max_iters,
                                     cfg.kmeans_tol);
            record.kmeans_reseeds += km.reseeds;
            result.aux.target_centers = km.centers;
            if (terms.source && !cfg.no_soft_selection) {
                result.aux.source_weights =
                    source_weights(Z_s, source.y, result.aux.target_centers);
                for (double w : result.aux.source_weights)
                    if (w < 0.0 || w > 1.0)
                        throw NumericError("train: source weight outside [0,1]");
            }
        }
        Z_t_cache = std::move(Z_t);
        Z_s_cache = std::move(Z_s);
        have_cache = true;

        record.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        result.history.epochs.push_back(record);

        if (cfg.selection == Selection::best_target_acc &&
            record.target_acc > best_acc) {
            best_acc = record.target_acc;
            result.selected = params;
            result.history.selected_epoch = epoch;
        }
    }

    result.final_params = params;
    if (cfg.selection == Selection::final_epoch) {
        result.selected = params;
        result.history.selected_epoch = cfg.epochs;
    }
    return result;
}

}  // namespace srdc
