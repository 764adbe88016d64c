#include "gps/disorder.hpp"
#include "gps/stats.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace gps;

namespace {

DisorderSpec three_point() {
    return DisorderSpec::product({-1.0, 0.0, 1.0}, {0.25, 0.5, 0.25});
}

DisorderSpec rademacher() { return DisorderSpec::product({-1.0, 1.0}, {0.5, 0.5}); }

DisorderSpec zero_two() { return DisorderSpec::product({0.0, 2.0}, {0.5, 0.5}); }

} // namespace

TEST_CASE("spec validation") {
    CHECK_THROWS_AS(DisorderSpec::product({1.0, 2.0}, {0.5, 0.6}), std::invalid_argument);
    CHECK_THROWS_AS(DisorderSpec::product({1.0, 2.0}, {1.0, -0.0}), std::invalid_argument);
    // constant interaction rejected
    CHECK_THROWS_AS(DisorderSpec::table({0.0, 1.0}, {0.5, 0.5}, {2.0, 2.0, 2.0, 2.0}),
                    std::invalid_argument);
    // asymmetric table rejected
    CHECK_THROWS_AS(DisorderSpec::table({0.0, 1.0}, {0.5, 0.5}, {0.0, 1.0, 2.0, 3.0}),
                    std::invalid_argument);
}

TEST_CASE("log mgf: zero point, Rademacher closed form, convexity") {
    DisorderSpec r = rademacher();
    CHECK(log_mgf(r, 0.0) == doctest::Approx(0.0).epsilon(1e-15));
    for (double b : {0.1, 0.5, 1.0, 2.5})
        CHECK(log_mgf(r, b) == doctest::Approx(std::log(std::cosh(b))).epsilon(1e-14));
    DisorderSpec t = three_point();
    for (double b1 : {0.2, 0.7, 1.3})
        for (double b2 : {0.4, 1.9}) {
            double lhs = 0.5 * (log_mgf(t, b1) + log_mgf(t, b2));
            double rhs = log_mgf(t, 0.5 * (b1 + b2));
            CHECK(lhs >= rhs - 1e-12);
        }
}

TEST_CASE("conditional moment variances by enumeration") {
    DisorderSpec t = three_point();
    CHECK(conditional_moment_variance(t, 1) == doctest::Approx(0.0).epsilon(1e-16));
    CHECK(conditional_moment_variance(t, 2) == doctest::Approx(1.0 / 16.0).epsilon(1e-14));
    DisorderSpec r = rademacher();
    for (int k = 1; k <= 8; ++k)
        CHECK(std::abs(conditional_moment_variance(r, k)) < 1e-14);
}

TEST_CASE("classification of the reference laws") {
    Classification c1 = classify_r(zero_two());
    CHECK(c1.r == 1);
    CHECK(c1.sigma_r_sq == doctest::Approx(1.0).epsilon(1e-12));

    Classification c2 = classify_r(three_point());
    CHECK(c2.r == 2);
    CHECK(c2.sigma_r_sq == doctest::Approx(1.0 / 64.0).epsilon(1e-10));

    Classification cinf = classify_r(rademacher());
    CHECK(cinf.infinity_certificate);

    // report fields
    CHECK(c2.variance_trace.size() == 12);
    CHECK(c2.sigma_sq == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(c2.to_json().find("sigma_r_sq") != std::string::npos);
}

TEST_CASE("appendix-style eight-atom law") {
    DisorderSpec s = appendix_c_law(0.5, 0.75);
    // u = a(2-a), v = b(2-b)
    CHECK(s.appendix_u() == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(s.appendix_v() == doctest::Approx(0.9375).epsilon(1e-15));
    // structural identities on every atom
    for (int i = 0; i < s.size(); ++i) {
        double x = s.atoms()[static_cast<std::size_t>(i)];
        double fx = s.atoms()[static_cast<std::size_t>(s.f_index(i))];
        CHECK(x * x + fx * fx == doctest::Approx(2.0).epsilon(1e-14));
        double ffx = s.atoms()[static_cast<std::size_t>(s.f_index(s.f_index(i)))];
        CHECK(ffx == doctest::Approx(-x).epsilon(1e-14));
    }
    // discriminant 8(u-v)(u+v-1)
    double disc = 8.0 * (s.appendix_u() - s.appendix_v()) *
                  (s.appendix_u() + s.appendix_v() - 1.0);
    CHECK(std::abs(disc) == doctest::Approx(1.03125).epsilon(1e-13));

    Classification c4 = classify_r(s);
    CHECK(c4.r == 4);

    // u + v = 1 kills the order-4 discriminant. For this pairing the whole
    // conditional law of V given an atom is then atom-independent (the value
    // multiset {+-2 sqrt(u), +-2 sqrt(1-u), ...} is symmetric under a <-> b),
    // so every conditional moment is constant and the classifier certifies
    // the infinite class.
    double a8 = 1.0 - std::sqrt(0.8), b8 = 1.0 - std::sqrt(0.2);
    DisorderSpec s8 = appendix_c_law(a8, b8);
    CHECK(s8.appendix_u() == doctest::Approx(0.2).epsilon(1e-14));
    CHECK(s8.appendix_v() == doctest::Approx(0.8).epsilon(1e-14));
    Classification c8 = classify_r(s8);
    CHECK(c8.infinity_certificate);
    for (int k = 1; k <= 12; ++k)
        CHECK(std::abs(c8.variance_trace[static_cast<std::size_t>(k) - 1]) < 1e-20);
    // conditional value multisets coincide across atoms
    {
        std::vector<double> ref;
        for (int j = 0; j < s8.size(); ++j) ref.push_back(s8.V(0, j));
        std::sort(ref.begin(), ref.end());
        for (int i = 1; i < s8.size(); ++i) {
            std::vector<double> vals;
            for (int j = 0; j < s8.size(); ++j) vals.push_back(s8.V(i, j));
            std::sort(vals.begin(), vals.end());
            for (int j = 0; j < s8.size(); ++j)
                CHECK(vals[static_cast<std::size_t>(j)] ==
                      doctest::Approx(ref[static_cast<std::size_t>(j)]).epsilon(1e-12));
        }
    }

    // odd conditional moments vanish
    for (int k = 0; k <= 3; ++k) {
        const int m = s.size();
        for (int i = 0; i < m; ++i) {
            KahanSum acc;
            for (int j = 0; j < m; ++j)
                acc.add(s.probs()[j] * std::pow(s.V(i, j), 2 * k + 1));
            CHECK(std::abs(acc.value()) < 1e-12);
        }
    }

    CHECK_THROWS_AS(appendix_c_law(0.75, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(appendix_c_law(-0.1, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(appendix_c_law(0.5, 1.2), std::invalid_argument);
}

TEST_CASE("centering of zeta under enumeration") {
    for (const DisorderSpec& s : {zero_two(), three_point(), appendix_c_law(0.5, 0.75)}) {
        for (double beta : {0.1, 0.5, 1.0}) {
            double lambda = log_mgf(s, beta);
            KahanSum acc;
            for (int i = 0; i < s.size(); ++i)
                for (int j = 0; j < s.size(); ++j)
                    acc.add(s.probs()[i] * s.probs()[j] *
                            std::expm1(beta * s.V(i, j) - lambda));
            CHECK(std::abs(acc.value()) < 1e-14);
        }
    }
}

TEST_CASE("two-point correlation: closed forms and series consistency") {
    DisorderSpec t = three_point();
    // equal points: closed form
    for (double b : {0.05, 0.3, 1.0}) {
        double expect = std::expm1(log_mgf(t, 2 * b) - 2 * log_mgf(t, b));
        CHECK(two_point_correlation(t, b, PairRelation::Equal) ==
              doctest::Approx(expect).epsilon(1e-13));
    }
    // non-aligned: exact zero
    CHECK(two_point_correlation(t, 0.7, PairRelation::NonAligned) == 0.0);

    // r = 2 law at beta = 1e-3: value / beta^4 within 0.5% of sigma_2^2
    double v = two_point_correlation(t, 1e-3, PairRelation::AlignedDistinct);
    CHECK(std::abs(v / 1e-12 - 1.0 / 64.0) / (1.0 / 64.0) < 5e-3);

    // r = 1 law
    DisorderSpec z = zero_two();
    double v1 = two_point_correlation(z, 1e-3, PairRelation::AlignedDistinct);
    CHECK(std::abs(v1 / 1e-6 - 1.0) < 1e-2);

    // infinity-certified law: aligned-distinct correlation vanishes
    DisorderSpec r = rademacher();
    for (double b : {0.1, 0.4, 1.0})
        CHECK(std::abs(two_point_correlation(r, b, PairRelation::AlignedDistinct)) < 1e-12);
}

TEST_CASE("two-point correlation: series against brute-force enumeration") {
    // brute force E[zeta_i zeta_j] for a shared coordinate by enumerating
    // (hat_i, shared_bar, hat_j)
    auto brute = [](const DisorderSpec& s, double beta) {
        double lambda = log_mgf(s, beta);
        KahanSum acc;
        for (int a = 0; a < s.size(); ++a)
            for (int y = 0; y < s.size(); ++y)
                for (int b = 0; b < s.size(); ++b)
                    acc.add(s.probs()[a] * s.probs()[y] * s.probs()[b] *
                            std::expm1(beta * s.V(a, y) - lambda) *
                            std::expm1(beta * s.V(b, y) - lambda));
        return acc.value();
    };
    for (const DisorderSpec& s : {zero_two(), three_point()})
        for (double beta : {0.2, 0.5, 0.9}) {
            double series = two_point_correlation(s, beta, PairRelation::AlignedDistinct);
            double direct = brute(s, beta);
            CHECK(series == doctest::Approx(direct).epsilon(1e-10));
        }
}

TEST_CASE("classification consistency: relative error shrinks along a beta grid") {
    DisorderSpec t = three_point();
    Classification c = classify_r(t);
    double prev = 1e9;
    for (double e : {-2.0, -2.25, -2.5, -2.75, -3.0}) {
        double beta = std::pow(10.0, e);
        double v = two_point_correlation(t, beta, PairRelation::AlignedDistinct);
        double rel = std::abs(v / std::pow(beta, 4) / c.sigma_r_sq - 1.0);
        CHECK(rel < prev);
        prev = rel;
    }
}

TEST_CASE("row/column alignment symmetry") {
    // invariance under which strand carries the shared coordinate: compare
    // shared-bar enumeration vs shared-hat enumeration
    for (const DisorderSpec& s : {three_point(), appendix_c_law(0.5, 0.75)}) {
        double beta = 0.4;
        double lambda = log_mgf(s, beta);
        KahanSum shared_bar, shared_hat;
        for (int a = 0; a < s.size(); ++a)
            for (int y = 0; y < s.size(); ++y)
                for (int b = 0; b < s.size(); ++b) {
                    double p = s.probs()[a] * s.probs()[y] * s.probs()[b];
                    shared_bar.add(p * std::expm1(beta * s.V(a, y) - lambda) *
                                   std::expm1(beta * s.V(b, y) - lambda));
                    shared_hat.add(p * std::expm1(beta * s.V(y, a) - lambda) *
                                   std::expm1(beta * s.V(y, b) - lambda));
                }
        CHECK(shared_bar.value() == doctest::Approx(shared_hat.value()).epsilon(1e-13));
    }
}

TEST_CASE("multi correlation: isolated points, FKG sign, chain bound") {
    DisorderSpec t = three_point();
    // isolated point factor kills the product exactly
    CHECK(multi_correlation(t, 0.3, {{1, 1}, {5, 7}}, {1, 1}) == 0.0);
    CHECK(multi_correlation(t, 0.3, {{1, 1}}, {1}) == 0.0);

    // pair on a row matches two_point_correlation
    double pair = multi_correlation(t, 0.3, {{1, 1}, {4, 1}}, {1, 1});
    CHECK(pair ==
          doctest::Approx(two_point_correlation(t, 0.3, PairRelation::AlignedDistinct))
              .epsilon(1e-12));

    // non-negativity over assorted aligned configurations
    std::vector<std::vector<Point2i>> configs = {
        {{1, 1}, {3, 1}, {3, 4}},
        {{1, 1}, {1, 5}, {4, 5}, {4, 8}},
        {{2, 2}, {2, 6}, {7, 6}},
        {{1, 1}, {4, 1}, {4, 4}, {1, 4}},
    };
    for (const auto& cfg : configs)
        for (double beta : {0.05, 0.2, 0.6}) {
            std::vector<int> q(cfg.size(), 1);
            double v = multi_correlation(t, beta, cfg, q);
            CHECK(v >= -1e-13);
        }

    // 3-chain: value >= 0 and <= C'^3 beta^(2r + ceil(r/2)) with C' fitted
    // once at beta = 1e-2 and frozen across smaller beta
    std::vector<Point2i> chain = {{1, 1}, {4, 1}, {4, 5}};
    std::vector<int> q = {1, 1, 1};
    double b0 = 1e-2;
    double v0 = multi_correlation(t, b0, chain, q);
    CHECK(v0 >= 0.0);
    double cprime = std::pow(v0 / std::pow(b0, 5.0), 1.0 / 3.0);
    for (double e : {-2.5, -3.0}) {
        double b = std::pow(10.0, e);
        double v = multi_correlation(t, b, chain, q);
        CHECK(v >= 0.0);
        CHECK(v <= std::pow(cprime, 3.0) * std::pow(b, 5.0) * 1.01);
    }

    // oversized instances rejected
    std::vector<Point2i> big;
    std::vector<int> bq;
    for (int i = 0; i < 7; ++i) {
        big.push_back({i + 1, i + 2});
        bq.push_back(1);
    }
    CHECK_THROWS_AS(multi_correlation(t, 0.1, big, bq), std::invalid_argument);
}

TEST_CASE("field sampling: determinism, centering, zero at beta=0") {
    DisorderSpec t = three_point();
    DisorderSample a = sample_fields(t, 50, 60, 0.3, 99);
    DisorderSample b = sample_fields(t, 50, 60, 0.3, 99);
    CHECK(a.hat_idx == b.hat_idx);
    CHECK(a.bar_idx == b.bar_idx);

    DisorderSample z = sample_fields(t, 20, 20, 0.0, 5);
    for (int i = 1; i <= 20; ++i)
        for (int j = 1; j <= 20; ++j) CHECK(z.zeta(i, j) == 0.0);

    // empirical mean of zeta over ~1e6 evaluations within 4 SE of 0
    DisorderSample s = sample_fields(t, 1000, 1000, 0.5, 21);
    KahanSum acc, acc2;
    for (int i = 1; i <= 1000; ++i)
        for (int j = 1; j <= 1000; ++j) {
            double v = s.zeta(i, j);
            acc.add(v);
            acc2.add(v * v);
        }
    double mean = acc.value() / 1e6;
    // row/column correlations inflate the variance of the grand mean: the
    // effective number of independent summands is ~n, not n^2
    double var = acc2.value() / 1e6;
    double se = std::sqrt(var / 1000.0);
    CHECK(std::abs(mean) < 4.0 * se);
}

TEST_CASE("spec file parsing") {
    DisorderSpec p = parse_disorder_spec("marginal = [[-1, 0.5], [1, 0.5]]\n"
                                         "interaction = \"product\"\n");
    CHECK(p.size() == 2);
    Classification c = classify_r(p);
    CHECK(c.infinity_certificate);

    DisorderSpec ac = parse_disorder_spec("marginal = [[0, 1.0]]\n"
                                          "interaction = {\"appendix_c\": [0.5, 0.75]}\n");
    CHECK(ac.size() == 8);

    DisorderSpec tb = parse_disorder_spec(
        "marginal = [[0, 0.5], [1, 0.5]]\n"
        "interaction = {\"table\": [[0.0, 1.0], [1.0, 0.5]]}\n");
    CHECK(tb.V(0, 1) == 1.0);

    CHECK_THROWS(parse_disorder_spec("marginal = [[0, 0.5], [1, 0.7]]\n"
                                     "interaction = \"product\"\n"));
    CHECK_THROWS(parse_disorder_spec("nonsense\n"));
}
