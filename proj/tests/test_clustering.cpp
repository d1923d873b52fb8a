#include <doctest.h>

#include <cmath>
#include <vector>

#include "srdc/srdc.hpp"
#include "test_util.hpp"

using namespace srdc;

namespace {

// Literal transcription of the closed-form auxiliary update, kept separate
// from the library implementation on purpose.
Tensor aux_oracle(const Tensor& P) {
    const std::size_t n = P.rows(), K = P.cols();
    std::vector<double> colsum(K, 0.0);
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t i = 0; i < n; ++i) colsum[k] += P.at(i, k);
    Tensor Q({n, K});
    for (std::size_t i = 0; i < n; ++i) {
        double denom = 0.0;
        for (std::size_t k = 0; k < K; ++k)
            denom += P.at(i, k) / std::sqrt(colsum[k]);
        for (std::size_t k = 0; k < K; ++k)
            Q.at(i, k) = (P.at(i, k) / std::sqrt(colsum[k])) / denom;
    }
    return Q;
}

// Brute-force Lloyd re-implementation following the documented rules:
// nearest center with lowest-index ties, empty clusters reseeded (ascending
// index) to the unclaimed point farthest from its assigned center, stop on
// max center shift < tol, final assignment pass against final centers.
KMeansResult lloyd_oracle(const Tensor& Z, std::size_t K, Tensor centers,
                          std::size_t max_iters, double tol) {
    const std::size_t n = Z.rows(), d = Z.cols();
    auto dist2 = [&](std::size_t i, const Tensor& C, std::size_t k) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            double diff = Z.at(i, j) - C.at(k, j);
            s += diff * diff;
        }
        return s;
    };
    auto nearest = [&](std::size_t i, const Tensor& C) {
        std::size_t best = 0;
        double bd = dist2(i, C, 0);
        for (std::size_t k = 1; k < K; ++k) {
            double dd = dist2(i, C, k);
            if (dd < bd) {
                bd = dd;
                best = k;
            }
        }
        return best;
    };
    std::vector<std::size_t> assign(n, 0);
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        for (std::size_t i = 0; i < n; ++i) assign[i] = nearest(i, centers);
        std::vector<std::size_t> counts(K, 0);
        for (std::size_t a : assign) ++counts[a];
        std::vector<bool> claimed(n, false);
        for (std::size_t k = 0; k < K; ++k) {
            if (counts[k] > 0) continue;
            std::size_t far = n;
            double fd = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (claimed[i]) continue;
                double dd = dist2(i, centers, assign[i]);
                if (dd > fd) {
                    fd = dd;
                    far = i;
                }
            }
            if (far == n) break;
            claimed[far] = true;
            --counts[assign[far]];
            assign[far] = k;
            ++counts[k];
            for (std::size_t j = 0; j < d; ++j) centers.at(k, j) = Z.at(far, j);
        }
        Tensor next({K, d});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) next.at(assign[i], j) += Z.at(i, j);
        double shift = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            if (counts[k] == 0) {
                for (std::size_t j = 0; j < d; ++j) next.at(k, j) = centers.at(k, j);
                continue;
            }
            double delta = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                next.at(k, j) /= static_cast<double>(counts[k]);
                double diff = next.at(k, j) - centers.at(k, j);
                delta += diff * diff;
            }
            if (delta > shift) shift = delta;
        }
        centers = next;
        if (std::sqrt(shift) < tol) break;
    }
    KMeansResult r;
    r.centers = centers;
    r.assignments.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        r.assignments[i] = nearest(i, centers);
        r.inertia += dist2(i, centers, r.assignments[i]);
    }
    return r;
}

}  // namespace

TEST_SUITE("clustering") {

TEST_CASE("uniform P is a fixed point of the auxiliary update") {
    Tensor P({4, 3});
    P.fill(1.0 / 3.0);
    Tensor Q = update_auxiliary(P);
    CHECK(Q.values() == P.values());
}

TEST_CASE("auxiliary update frozen example") {
    Tensor P = Tensor::row_major(2, 2, {0.8, 0.2, 0.4, 0.6});
    Tensor Q = update_auxiliary(P);
    CHECK(Q.at(0, 0) == doctest::Approx(0.766).epsilon(1e-3));
    CHECK(Q.at(0, 1) == doctest::Approx(0.234).epsilon(1e-3));
    CHECK(Q.at(1, 0) == doctest::Approx(0.352).epsilon(1e-3));
    CHECK(Q.at(1, 1) == doctest::Approx(0.648).epsilon(1e-3));
    Tensor expected = aux_oracle(P);
    for (std::size_t i = 0; i < Q.size(); ++i)
        CHECK(Q[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("equal column masses leave P unchanged exactly") {
    Tensor P = Tensor::row_major(2, 2, {0.3, 0.7, 0.7, 0.3});
    Tensor Q = update_auxiliary(P);
    CHECK(Q.values() == P.values());
}

TEST_CASE("auxiliary update matches the loop oracle on random inputs") {
    Rng rng(100);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.uniform_int(20);
        const std::size_t K = 2 + rng.uniform_int(4);
        Tensor P = testutil::random_stochastic(rng, n, K);
        Tensor Q = update_auxiliary(P);
        Tensor expected = aux_oracle(P);
        for (std::size_t i = 0; i < Q.size(); ++i)
            CHECK(std::fabs(Q[i] - expected[i]) < 1e-12);
        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                CHECK(Q.at(i, k) > 0.0);
                CHECK(Q.at(i, k) < 1.0);
                sum += Q.at(i, k);
            }
            CHECK(std::fabs(sum - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("heavier columns are discounted") {
    // With equal p on two columns, the one with the larger mass must end up
    // with the smaller auxiliary weight.
    Rng rng(101);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor P = testutil::random_stochastic(rng, 6, 3);
        P.at(0, 0) = P.at(0, 1);  // equalize the first row's first two entries
        std::vector<double> mass = column_masses(P);
        Tensor Q = update_auxiliary(P);
        if (mass[0] > mass[1]) CHECK(Q.at(0, 0) < Q.at(0, 1));
        if (mass[1] > mass[0]) CHECK(Q.at(0, 1) < Q.at(0, 0));
    }
}

TEST_CASE("column permutation of P permutes Q identically") {
    Rng rng(102);
    Tensor P = testutil::random_stochastic(rng, 5, 3);
    Tensor Q = update_auxiliary(P);
    const std::size_t perm[3] = {1, 2, 0};
    Tensor P2({5, 3});
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t k = 0; k < 3; ++k) P2.at(i, k) = P.at(i, perm[k]);
    Tensor Q2 = update_auxiliary(P2);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t k = 0; k < 3; ++k)
            CHECK(Q2.at(i, k) == doctest::Approx(Q.at(i, perm[k])).epsilon(1e-12));
}

TEST_CASE("a zero column mass is a degenerate-cluster error") {
    Tensor P = Tensor::row_major(2, 2, {1.0, 0.0, 1.0, 0.0});
    CHECK_THROWS_AS(update_auxiliary(P), NumericError);
}

TEST_CASE("kmeans on two separated pairs finds the pair means") {
    Tensor Z = Tensor::row_major(4, 2, {0.0, 0.0, 0.0, 2.0, 10.0, 0.0, 10.0, 2.0});
    Tensor init = Tensor::row_major(2, 2, {1.0, 1.0, 9.0, 1.0});
    KMeansResult r = kmeans(Z, 2, init);
    CHECK(r.centers.at(0, 0) == doctest::Approx(0.0));
    CHECK(r.centers.at(0, 1) == doctest::Approx(1.0));
    CHECK(r.centers.at(1, 0) == doctest::Approx(10.0));
    CHECK(r.centers.at(1, 1) == doctest::Approx(1.0));
    CHECK(r.assignments == std::vector<std::size_t>{0, 0, 1, 1});
}

TEST_CASE("n == K distinct points fit exactly") {
    Tensor Z = Tensor::row_major(3, 1, {0.0, 5.0, 9.0});
    Tensor init = Tensor::row_major(3, 1, {0.1, 4.0, 8.0});
    KMeansResult r = kmeans(Z, 3, init);
    CHECK(r.inertia == 0.0);
    CHECK(r.assignments == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("kmeans matches the brute-force Lloyd oracle") {
    Rng rng(103);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t K = 2 + rng.uniform_int(4);        // up to 5
        const std::size_t n = K + rng.uniform_int(50 - K + 1);
        const std::size_t d = 1 + rng.uniform_int(4);
        Tensor Z = testutil::random_matrix(rng, n, d, 2.0);
        Tensor init = testutil::random_matrix(rng, K, d, 2.0);
        KMeansResult ours = kmeans(Z, K, init, 100, 1e-9);
        KMeansResult oracle = lloyd_oracle(Z, K, init, 100, 1e-9);
        CHECK(ours.assignments == oracle.assignments);
        CHECK(ours.centers.values() == oracle.centers.values());
        CHECK(ours.inertia == doctest::Approx(oracle.inertia).epsilon(1e-12));
    }
}

TEST_CASE("empty clusters are reseeded deterministically") {
    // Two tight groups plus an init center that captures nothing.
    Tensor Z = Tensor::row_major(6, 1, {0.0, 0.1, 0.2, 10.0, 10.1, 10.2});
    Tensor init = Tensor::row_major(3, 1, {0.0, 10.0, 100.0});
    KMeansResult a = kmeans(Z, 3, init);
    KMeansResult b = kmeans(Z, 3, init);
    CHECK(a.reseeds > 0);
    CHECK(a.assignments == b.assignments);
    CHECK(a.centers.values() == b.centers.values());
    // Every cluster ends non-empty.
    std::vector<int> counts(3, 0);
    for (std::size_t x : a.assignments) counts[x]++;
    for (int c : counts) CHECK(c > 0);
}

TEST_CASE("returned assignments always index the nearest center") {
    Rng rng(109);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor Z = testutil::random_matrix(rng, 30, 2, 2.0);
        Tensor init = testutil::random_matrix(rng, 4, 2, 2.0);
        KMeansResult r = kmeans(Z, 4, init, 3, 0.0);  // stop early on purpose
        for (std::size_t i = 0; i < 30; ++i) {
            double assigned = 0.0, best = 1e300;
            std::size_t best_k = 0;
            for (std::size_t k = 0; k < 4; ++k) {
                double d = 0.0;
                for (std::size_t j = 0; j < 2; ++j) {
                    const double diff = Z.at(i, j) - r.centers.at(k, j);
                    d += diff * diff;
                }
                if (k == r.assignments[i]) assigned = d;
                if (d < best) {  // first minimum wins, the documented tie rule
                    best = d;
                    best_k = k;
                }
            }
            CHECK(assigned == best);
            CHECK(r.assignments[i] == best_k);
        }
    }
}

TEST_CASE("kmeans inertia is non-increasing across iteration budgets") {
    Rng rng(104);
    Tensor Z = testutil::random_matrix(rng, 40, 3);
    Tensor init = testutil::random_matrix(rng, 4, 3);
    double prev = 1e300;
    for (std::size_t iters = 1; iters <= 8; ++iters) {
        KMeansResult r = kmeans(Z, 4, init, iters, 0.0);
        CHECK(r.inertia <= prev + 1e-9);
        prev = r.inertia;
    }
}

TEST_CASE("class_centroids basics") {
    Tensor Z = Tensor::row_major(3, 2, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
    std::vector<int> y = {1, 2, 3};
    Tensor c = class_centroids(Z, y, 3);
    CHECK(c.values() == Z.values());  // one sample per class

    Tensor Z2 = Tensor::row_major(4, 1, {1.0, 1.0, 4.0, 4.0});
    Tensor c2 = class_centroids(Z2, {1, 1, 2, 2}, 2);
    CHECK(c2.at(0, 0) == 1.0);  // duplicated samples, same centroid
    CHECK(c2.at(1, 0) == 4.0);

    CHECK_THROWS_AS(class_centroids(Z2, {1, 1, 1, 1}, 2), NumericError);
}

TEST_CASE("class_centroids matches a loop oracle on random data") {
    Rng rng(105);
    const std::size_t n = 30, d = 4, K = 3;
    Tensor Z = testutil::random_matrix(rng, n, d);
    std::vector<int> y;
    for (std::size_t i = 0; i < n; ++i)
        y.push_back(static_cast<int>(i % K) + 1);
    Tensor c = class_centroids(Z, y, K);
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t j = 0; j < d; ++j) {
            double sum = 0.0;
            int count = 0;
            for (std::size_t i = 0; i < n; ++i)
                if (y[i] == static_cast<int>(k) + 1) {
                    sum += Z.at(i, j);
                    ++count;
                }
            CHECK(c.at(k, j) == doctest::Approx(sum / count).epsilon(1e-12));
        }
}

TEST_CASE("reinit_mu with matching one-hot assignments equals class centroids") {
    Tensor Z = Tensor::row_major(4, 2, {0.0, 0.0, 1.0, 1.0, 4.0, 4.0, 5.0, 5.0});
    std::vector<int> y = {1, 1, 2, 2};
    Tensor Q({4, 2});
    Q.at(0, 0) = Q.at(1, 0) = 1.0;
    Q.at(2, 1) = Q.at(3, 1) = 1.0;
    Tensor mu = reinit_mu(Z, y, Z, Q);  // target == source, same assignments
    Tensor c = class_centroids(Z, y, 2);
    for (std::size_t i = 0; i < mu.size(); ++i)
        CHECK(mu[i] == doctest::Approx(c[i]).epsilon(1e-12));
}

TEST_CASE("reinit_mu falls back to the source centroid for empty classes") {
    Tensor Z_s = Tensor::row_major(2, 1, {0.0, 10.0});
    std::vector<int> y = {1, 2};
    Tensor Z_t = Tensor::row_major(2, 1, {1.0, 2.0});
    Tensor Q({2, 2});
    Q.at(0, 0) = 1.0;  // both targets assigned to class 1
    Q.at(1, 0) = 1.0;
    Tensor mu = reinit_mu(Z_s, y, Z_t, Q);
    CHECK(mu.at(0, 0) == doctest::Approx(1.0));   // mean of {0, 1, 2}
    CHECK(mu.at(1, 0) == doctest::Approx(10.0));  // source centroid only
}

TEST_CASE("reinit_mu matches a loop oracle on mixed assignments") {
    Rng rng(106);
    const std::size_t K = 3, d = 2, n_s = 6, n_t = 12;
    Tensor Z_s = testutil::random_matrix(rng, n_s, d);
    std::vector<int> y = {1, 2, 3, 1, 2, 3};
    Tensor Z_t = testutil::random_matrix(rng, n_t, d);
    Tensor Q = testutil::random_stochastic(rng, n_t, K);
    Tensor mu = reinit_mu(Z_s, y, Z_t, Q);
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t j = 0; j < d; ++j) {
            double sum = 0.0;
            int count = 0;
            for (std::size_t i = 0; i < n_s; ++i)
                if (y[i] == static_cast<int>(k) + 1) {
                    sum += Z_s.at(i, j);
                    ++count;
                }
            for (std::size_t i = 0; i < n_t; ++i) {
                std::size_t best = 0;
                for (std::size_t c = 1; c < K; ++c)
                    if (Q.at(i, c) > Q.at(i, best)) best = c;
                if (best == k) {
                    sum += Z_t.at(i, j);
                    ++count;
                }
            }
            CHECK(mu.at(k, j) == doctest::Approx(sum / count).epsilon(1e-12));
        }
}

TEST_CASE("target_centers is a fixed point when target matches source classes") {
    Tensor Z = Tensor::row_major(6, 1, {0.0, 0.2, 5.0, 5.2, 10.0, 10.2});
    std::vector<int> y = {1, 1, 2, 2, 3, 3};
    Tensor centroids = class_centroids(Z, y, 3);
    Tensor c = target_centers(Z, 3, centroids);
    for (std::size_t i = 0; i < c.size(); ++i)
        CHECK(c[i] == doctest::Approx(centroids[i]).epsilon(1e-12));
}

TEST_CASE("target_centers follows a constant translation") {
    Rng rng(107);
    Tensor Z_s({12, 2});
    std::vector<int> y;
    for (std::size_t i = 0; i < 12; ++i) {
        const std::size_t k = i % 3;
        y.push_back(static_cast<int>(k) + 1);
        Z_s.at(i, 0) = 6.0 * static_cast<double>(k) + 0.2 * rng.normal();
        Z_s.at(i, 1) = 0.2 * rng.normal();
    }
    Tensor Z_t = Z_s;
    for (std::size_t i = 0; i < 12; ++i) {
        Z_t.at(i, 0) += 0.3;
        Z_t.at(i, 1) += 0.1;
    }
    Tensor centroids = class_centroids(Z_s, y, 3);
    Tensor c = target_centers(Z_t, 3, centroids);
    Tensor shifted = class_centroids(Z_t, y, 3);
    for (std::size_t i = 0; i < c.size(); ++i)
        CHECK(c[i] == doctest::Approx(shifted[i]).epsilon(1e-9));
}

TEST_CASE("source_weights endpoint values") {
    Tensor centers = Tensor::row_major(2, 2, {1.0, 0.0, 0.0, 1.0});
    Tensor Z = Tensor::row_major(3, 2, {2.0, 0.0, -3.0, 0.0, 0.0, 5.0});
    std::vector<int> y = {1, 1, 1};
    std::vector<double> w = source_weights(Z, y, centers);
    CHECK(w[0] == doctest::Approx(1.0).epsilon(1e-12));  // aligned
    CHECK(w[1] == doctest::Approx(0.0).epsilon(1e-12));  // opposite
    CHECK(w[2] == doctest::Approx(0.5).epsilon(1e-12));  // orthogonal
}

TEST_CASE("source_weights is invariant to positive rescaling") {
    Rng rng(108);
    Tensor centers = testutil::random_matrix(rng, 3, 4);
    Tensor Z = testutil::random_matrix(rng, 6, 4);
    std::vector<int> y = {1, 2, 3, 1, 2, 3};
    std::vector<double> w = source_weights(Z, y, centers);

    Tensor Z_scaled = Z;
    for (double& v : Z_scaled.values()) v *= 7.5;
    Tensor centers_scaled = centers;
    for (double& v : centers_scaled.values()) v *= 0.03;
    std::vector<double> w2 = source_weights(Z_scaled, y, centers_scaled);
    for (std::size_t i = 0; i < w.size(); ++i)
        CHECK(w[i] == doctest::Approx(w2[i]).epsilon(1e-12));
}

TEST_CASE("zero-norm vectors make the cosine undefined") {
    Tensor centers = Tensor::row_major(1, 2, {1.0, 0.0});
    Tensor Z = Tensor::row_major(1, 2, {0.0, 0.0});
    CHECK_THROWS_AS(source_weights(Z, {1}, centers), NumericError);
}

}  // TEST_SUITE
