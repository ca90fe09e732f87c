#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <random>

#include "ukt/attention.hpp"
#include "ukt/errors.hpp"
#include "ukt/gradcheck.hpp"

using namespace ukt;

namespace {

// General Gaussian W2^2 with full matrix square roots:
// |m1 - m2|^2 + tr(S1 + S2 - 2 (S2^1/2 S1 S2^1/2)^1/2).
double w2_general(const std::vector<double>& m1, const std::vector<double>& c1,
                  const std::vector<double>& m2, const std::vector<double>& c2) {
    const auto n = static_cast<Eigen::Index>(m1.size());
    Eigen::MatrixXd s1 = Eigen::MatrixXd::Zero(n, n), s2 = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd d(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        s1(i, i) = c1[i];
        s2(i, i) = c2[i];
        d(i) = m1[i] - m2[i];
    }
    auto msqrt = [](const Eigen::MatrixXd& m) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
        return Eigen::MatrixXd(es.eigenvectors() * es.eigenvalues().cwiseMax(0).cwiseSqrt().asDiagonal() *
                               es.eigenvectors().transpose());
    };
    const Eigen::MatrixXd r2 = msqrt(s2);
    const Eigen::MatrixXd cross = msqrt(r2 * s1 * r2);
    return d.squaredNorm() + (s1 + s2 - 2 * cross).trace();
}

GaussianSeq seq(std::size_t t, std::size_t d, std::vector<Real> mean, std::vector<Real> cov) {
    return GaussianSeq{Tensor::from(t, d, std::move(mean), true), Tensor::from(t, d, std::move(cov), true),
                       Mask(t, 1)};
}

GaussianSeq random_seq(std::size_t t, std::size_t d, std::mt19937_64& rng) {
    std::normal_distribution<Real> n(0, 1);
    std::uniform_real_distribution<Real> pos(0.2, 2.5);
    std::vector<Real> m(t * d), c(t * d);
    for (auto& x : m) x = n(rng);
    for (auto& x : c) x = pos(rng);
    return seq(t, d, m, c);
}

}  // namespace

TEST_CASE("w2_sq_diag closed form") {
    const std::vector<Real> m1{0}, c1{1}, m2{3}, c2{4};
    CHECK(w2_sq_diag(m1, c1, m2, c2) == doctest::Approx(10).epsilon(1e-15));
    CHECK(w2_sq_diag(m1, c1, m1, c1) == 0);
    const std::vector<Real> bad{0};
    CHECK_THROWS_AS(w2_sq_diag(m1, bad, m2, c2), DomainError);
}

TEST_CASE("w2_sq_diag agrees with the general trace expression") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> n(0, 2);
    std::uniform_real_distribution<double> pos(0.01, 5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t d = 1 + trial % 7;
        std::vector<double> m1(d), c1(d), m2(d), c2(d);
        for (std::size_t i = 0; i < d; ++i) {
            m1[i] = n(rng);
            m2[i] = n(rng);
            c1[i] = pos(rng);
            c2[i] = pos(rng);
        }
        CHECK(std::abs(w2_sq_diag(m1, c1, m2, c2) - w2_general(m1, c1, m2, c2)) <= 1e-9);
    }
}

TEST_CASE("attention config") {
    const AttentionConfig c = AttentionConfig::make(64, 4);
    CHECK(c.head_dim == 16);
    CHECK(c.scale == 4);
    CHECK(c.causal);
    CHECK_THROWS_AS(AttentionConfig::make(10, 4), ConfigError);
}

TEST_CASE("scores: identical key is maximal, equidistant keys tie, masking") {
    const GaussianSeq keys = seq(3, 1, {0, 1, -1}, {1, 1, 1});
    AttentionConfig cfg = AttentionConfig::make(1, 1, 1);
    const std::vector<Real> qm{0}, qc{1};
    const auto s = attention_scores(qm, qc, keys, 3, cfg);
    REQUIRE(s);
    CHECK((*s)[0] == 0);
    CHECK((*s)[1] == (*s)[2]);
    CHECK((*s)[0] > (*s)[1]);

    const auto partial = attention_scores(qm, qc, keys, 2, cfg);
    CHECK((*partial)[2] == -std::numeric_limits<Real>::infinity());
    CHECK_FALSE(attention_scores(qm, qc, keys, 0, cfg).has_value());

    // temperature changes sharpness, never the argmax
    AttentionConfig hot = AttentionConfig::make(1, 1, 1), cold = AttentionConfig::make(1, 1, 10);
    const GaussianSeq k2 = seq(3, 1, {2, 0.5, -3}, {1, 2, 0.5});
    const auto a = *attention_scores(qm, qc, k2, 3, hot), b = *attention_scores(qm, qc, k2, 3, cold);
    const auto arg = [](const std::vector<Real>& v) { return std::max_element(v.begin(), v.end()) - v.begin(); };
    CHECK(arg(a) == arg(b));
}

TEST_CASE("hand example with one masked position") {
    // query 2 sees keys 0 and 1 at squared distances 0 and 1; key 2 is its own (future) slot
    const GaussianSeq m = seq(3, 1, {0, 1, 0}, {1, 1, 1});
    const GaussianSeq e = seq(3, 1, {2, 5, 100}, {1, 3, 100});
    const GaussianSeq h = attend(m, m, e, AttentionConfig::make(1, 1, 1));
    const Real w0 = 1 / (1 + std::exp(-1.0)), w1 = 1 - w0;
    CHECK(w0 == doctest::Approx(0.7311).epsilon(1e-4));
    CHECK(h.mean(2, 0) == doctest::Approx(w0 * 2 + w1 * 5).epsilon(1e-12));
    CHECK(h.cov(2, 0) == doctest::Approx(w0 * 1 + w1 * 3).epsilon(1e-12));
    // single history item is copied exactly, empty history gets the prior
    CHECK(h.mean(1, 0) == 2);
    CHECK(h.cov(1, 0) == 1);
    CHECK(h.mean(0, 0) == 0);
    CHECK(h.cov(0, 0) == 1);
}

TEST_CASE("equidistant keys average the values") {
    const GaussianSeq m = seq(4, 2, {1, 1, 1, 1, 1, 1, 0, 0}, std::vector<Real>(8, 1));
    const GaussianSeq e = seq(4, 2, {1, 2, 3, 4, 5, 6, 7, 8}, {1, 2, 3, 4, 5, 6, 7, 8});
    const GaussianSeq h = attend(m, m, e, AttentionConfig::make(2, 1));
    CHECK(h.mean(3, 0) == doctest::Approx(3).epsilon(1e-12));
    CHECK(h.mean(3, 1) == doctest::Approx(4).epsilon(1e-12));
}

TEST_CASE("strict causality") {
    std::mt19937_64 rng(8);
    const GaussianSeq m = random_seq(6, 4, rng);
    const GaussianSeq e = random_seq(6, 4, rng);
    const AttentionConfig cfg = AttentionConfig::make(4, 2);
    const GaussianSeq base = attend(m, m, e, cfg);
    for (std::size_t j = 0; j < 6; ++j) {
        std::vector<Real> mean(e.mean.data().begin(), e.mean.data().end());
        std::vector<Real> cov(e.cov.data().begin(), e.cov.data().end());
        mean[j * 4 + 1] += 0.5;
        cov[j * 4 + 2] += 0.5;
        const GaussianSeq moved = attend(m, m, seq(6, 4, mean, cov), cfg);
        for (std::size_t t = 0; t < 6; ++t) {
            bool changed = false;
            for (std::size_t k = 0; k < 4; ++k)
                changed = changed || moved.mean(t, k) != base.mean(t, k) || moved.cov(t, k) != base.cov(t, k);
            CHECK(changed == (t > j));
        }
    }
}

TEST_CASE("heads work on separate column blocks") {
    // keys differ only in the second block: head 0 weights are uniform, head 1 prefers key 0
    const GaussianSeq m = seq(3, 2, {0, 0, 0, 3, 0, 0}, std::vector<Real>(6, 1));
    const GaussianSeq e = seq(3, 2, {2, 2, 4, 4, 0, 0}, std::vector<Real>(6, 1));
    const GaussianSeq h = attend(m, m, e, AttentionConfig::make(2, 2, 1));
    CHECK(h.mean(2, 0) == doctest::Approx(3).epsilon(1e-12));
    CHECK(h.mean(2, 1) == doctest::Approx(2 + 2 / (1 + std::exp(9.0))).epsilon(1e-12));
}

TEST_CASE("dot-product and mean-only scoring") {
    const GaussianSeq m = seq(3, 1, {1, 2, 1}, {1, 5, 1});
    const GaussianSeq e = seq(3, 1, {0, 1, 0}, {1, 1, 1});
    AttentionConfig dot = AttentionConfig::make(1, 1, 1);
    dot.kind = ScoreKind::DotProduct;
    const GaussianSeq h = attend(m, m, e, dot);
    const Real w1 = std::exp(2.0) / (std::exp(1.0) + std::exp(2.0));
    CHECK(h.mean(2, 0) == doctest::Approx(w1).epsilon(1e-12));

    AttentionConfig mo = AttentionConfig::make(1, 1, 1);
    mo.mean_only = true;
    const GaussianSeq g = attend(m, m, e, mo);
    const Real v1 = std::exp(-1.0) / (1 + std::exp(-1.0));
    CHECK(g.mean(2, 0) == doctest::Approx(v1).epsilon(1e-12));
}

TEST_CASE("outputs stay positive and gradients match") {
    std::mt19937_64 rng(9);
    const AttentionConfig cfg = AttentionConfig::make(4, 2);
    for (int i = 0; i < 50; ++i) {
        const GaussianSeq m = random_seq(7, 4, rng), e = random_seq(7, 4, rng);
        const GaussianSeq h = attend(m, m, e, cfg);
        for (Real c : h.cov.data()) CHECK(c > 0);
    }
    const GaussianSeq q = random_seq(5, 4, rng), k = random_seq(5, 4, rng), v = random_seq(5, 4, rng);
    const Tensor w = Tensor::from(5, 4, std::vector<Real>{0.3, -0.2, 0.5, 0.1, 0.7, -0.4, 0.2, 0.9, -0.1, 0.6,
                                                          0.3, -0.5, 0.8, 0.2, -0.3, 0.4, 0.1, -0.7, 0.6, 0.2});
    const CheckReport r = finite_diff_check(
        [&] {
            const GaussianSeq h = attend(q, k, v, cfg);
            return add(sum_all(mul(h.mean, w)), sum_all(mul(h.cov, w)));
        },
        {q.mean, q.cov, k.mean, k.cov, v.mean, v.cov});
    CHECK(r.passed);
}

TEST_CASE("causal mask") {
    const Mask m = causal_mask(Mask{1, 1, 0}, Mask{1, 1, 0});
    const Mask expect{0, 0, 0, 1, 0, 0, 0, 0, 0};
    CHECK(m == expect);
}
