#include "gps/chaos.hpp"
#include "gps/field.hpp"
#include "gps/polymer.hpp"
#include "gps/quadrature.hpp"
#include "gps/rng.hpp"
#include "gps/stats.hpp"

#include <doctest.h>

#include <cmath>

using namespace gps;

namespace {

std::function<double(double, double)> power_g(double alpha) {
    return [alpha](double x, double y) {
        if (x <= 0.0 || y <= 0.0) return 0.0;
        return std::pow(x + y, alpha - 2.0);
    };
}

} // namespace

TEST_CASE("graded quadrature integrates power singularities") {
    // int_0^1 x^(-1/2) dx = 2 with grading toward 0
    Quad1D q = graded_both(0.0, 1.0, 20);
    KahanSum s;
    for (std::size_t i = 0; i < q.x.size(); ++i) s.add(q.w[i] / std::sqrt(q.x[i]));
    CHECK(s.value() == doctest::Approx(2.0).epsilon(2e-4));
    // total weight equals the interval length
    KahanSum w;
    for (double v : q.w) w.add(v);
    CHECK(w.value() == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("nu pair integral: constants, paper bound, divergence detection") {
    QuadSpec qs;
    qs.panels = 6;
    qs.max_levels = 4;
    // g = h = 1 on [0,(1,1)]: <1,1> = int (1 + 1) du = 2
    auto one = [](double, double) { return 1.0; };
    NuIntegral i1 = nu_pair_integral(one, one, 1.0, 1.0, qs);
    CHECK(!i1.diverged);
    CHECK(i1.value == doctest::Approx(2.0).epsilon(1e-10));

    // g = h = |s|^(alpha-2), alpha = 0.75: converges, below the closed bound 64
    NuIntegral i75 = nu_pair_integral(power_g(0.75), power_g(0.75), 1.0, 1.0, qs);
    CHECK(!i75.diverged);
    CHECK(i75.value > 0.0);
    CHECK(i75.value <= 64.0);
    CHECK(i75.refinement.size() >= 2);
    double last = i75.refinement.back();
    double prev = i75.refinement[i75.refinement.size() - 2];
    CHECK(std::abs(last - prev) / last < 0.01);

    // alpha = 0.45: the grid value grows without bound; the detector fires
    NuIntegral i45 = nu_pair_integral(power_g(0.45), power_g(0.45), 1.0, 1.0, qs);
    CHECK(i45.diverged);
}

TEST_CASE("321-avoiding permutations: Catalan counts and the excluded pattern") {
    CHECK(avoiding_permutations(1).permutations.size() == 1);
    CHECK(avoiding_permutations(2).permutations.size() == 2);
    PairingSet s3 = avoiding_permutations(3);
    CHECK(s3.permutations.size() == 5);
    // exactly (3,2,1) is missing
    for (const auto& p : s3.permutations)
        CHECK(!(p[0] == 2 && p[1] == 1 && p[2] == 0));
    CHECK(avoiding_permutations(4).permutations.size() == 14);
    CHECK(avoiding_permutations(5).permutations.size() == 42);
    CHECK_THROWS_AS(avoiding_permutations(9), std::invalid_argument);
}

TEST_CASE("the excluded k=3 pattern has an empty admissible domain") {
    // for sigma = (3,2,1) the alignment v_3 <-> u_1, v_2 <-> u_2, v_1 <-> u_3
    // is infeasible under both orderings: check by randomized search that no
    // configuration satisfies the constraints, while an admissible sigma finds
    // many
    Rng rng(31);
    auto feasible = [&](const std::vector<int>& sigma, int tries) {
        int found = 0;
        for (int t = 0; t < tries; ++t) {
            double uy[3], vx[3], vy[3];
            double cy = 0;
            for (int i = 0; i < 3; ++i) {
                cy += rng.uniform(0.01, 0.3);
                uy[i] = cy;
            }
            // v_i forced on the row of u_{sigma(i)}
            double px = 0;
            bool ok = true;
            for (int i = 0; i < 3 && ok; ++i) {
                vy[i] = uy[sigma[static_cast<std::size_t>(i)]];
                vx[i] = px + rng.uniform(0.01, 0.3);
                px = vx[i];
                if (i > 0 && !(vy[i] > vy[i - 1])) ok = false;
            }
            (void)vx;
            if (ok) ++found;
        }
        return found;
    };
    CHECK(feasible({0, 1, 2}, 2000) > 0);
    CHECK(feasible({2, 1, 0}, 2000) == 0);
}

TEST_CASE("kernel variants: cond scaling, free domination, within-block nullity") {
    PhiFn g = PhiFn::power_law(0.75);
    ChaosKernel q{g, 1.0, 1.0, 2, KernelVariant::Q, 0.0, nullptr, 16};
    ChaosKernel cond{g, 1.0, 1.0, 2, KernelVariant::Cond, 0.0, nullptr, 16};
    ChaosKernel free{g, 1.0, 1.0, 2, KernelVariant::Free, 0.0, nullptr, 16};
    ChaosKernel cond2t{g, 2.0, 2.0, 2, KernelVariant::Cond, 0.0, nullptr, 16};
    Rng rng(17);
    double phit = g(1.0, 1.0);
    for (int i = 0; i < 300; ++i) {
        double x1 = rng.uniform(0.0, 1.0), y1 = rng.uniform(0.0, 1.0);
        double x2 = rng.uniform(x1, 1.0), y2 = rng.uniform(y1, 1.0);
        double vq = q.value2(x1, y1, x2, y2);
        double vc = cond.value2(x1, y1, x2, y2);
        if (vq == 0.0) continue;
        CHECK(vc * phit == doctest::Approx(vq).epsilon(1e-14));
        // the doubled-box trick: psi_free(s) = psi_cond_{2t}(s) phi(2t)/phi(2t-s_k)
        // and phi(2t - s_k) >= phi(2t) for this decreasing kernel, so
        // psi_free <= psi_cond at scale 2t pointwise
        double vf = free.value2(x1, y1, x2, y2);
        double v2t = cond2t.value2(x1, y1, x2, y2);
        CHECK(vf <= v2t * (1.0 + 1e-12));
    }

    // within-block pairing content: the lambda-line integral of psi along the
    // alignment set of its own first argument vanishes identically, because
    // the kernel's strict-ordering indicator is zero on aligned pairs
    for (int i = 0; i < 50; ++i) {
        double x1 = rng.uniform(0.01, 0.9), y1 = rng.uniform(0.01, 0.9);
        Quad1D line = graded_both(0.0, 1.0, 5);
        KahanSum along_row, along_col;
        for (std::size_t j = 0; j < line.x.size(); ++j) {
            along_row.add(line.w[j] * q.value2(x1, y1, line.x[j], y1));
            along_col.add(line.w[j] * q.value2(x1, y1, x1, line.x[j]));
        }
        CHECK(along_row.value() == 0.0);
        CHECK(along_col.value() == 0.0);
    }
}

TEST_CASE("psi norms: cross-method agreement and monotonicity in t") {
    PhiFn g = PhiFn::power_law(0.75);
    ChaosKernel k1{g, 1.0, 1.0, 1, KernelVariant::Q, 0.0, nullptr, 16};
    QuadSpec qs;
    qs.panels = 8;
    qs.max_levels = 3;
    qs.conv_tol = 0.002;
    NuNorm closed = psi_norm_closed_grid(k1, qs, 2);
    NuNorm mc = psi_norm_mc(k1, 150000, 5, 2);
    CHECK(!closed.diverged);
    CHECK(std::abs(mc.value - closed.value) <
          std::max(0.01 * closed.value, 2.0 * (mc.abserr + closed.abserr)));

    // the free kernel drops the final gap factor, so a larger box only adds
    // support and its norm grows coordinatewise; the constrained kernel
    // instead scales like c^(4 alpha - 5) under diagonal dilation
    ChaosKernel f1{g, 1.0, 1.0, 1, KernelVariant::Free, 0.0, nullptr, 16};
    ChaosKernel f1big{g, 1.3, 1.2, 1, KernelVariant::Free, 0.0, nullptr, 16};
    QuadSpec q2;
    q2.panels = 6;
    q2.max_levels = 2;
    NuNorm big = psi_norm_closed_grid(f1big, q2, 2);
    NuNorm base = psi_norm_closed_grid(f1, q2, 2);
    CHECK(big.value > base.value);
    ChaosKernel q_scaled{g, 2.0, 2.0, 1, KernelVariant::Q, 0.0, nullptr, 16};
    NuNorm qs2 = psi_norm_closed_grid(q_scaled, q2, 2);
    NuNorm qs1 = psi_norm_closed_grid(k1, q2, 2);
    CHECK(qs2.value ==
          doctest::Approx(qs1.value * std::pow(2.0, 4.0 * 0.75 - 5.0)).epsilon(1e-6));

    // alpha <= 1/2 is rejected as divergent
    PhiFn glow = PhiFn::power_law(0.45);
    ChaosKernel klow{glow, 1.0, 1.0, 1, KernelVariant::Q, 0.0, nullptr, 16};
    NuNorm low = psi_norm_mc(klow, 1000, 3, 1);
    CHECK(low.diverged);
}

TEST_CASE("homogeneous continuum series: reduction, majorant, positivity") {
    PhiFn g = PhiFn::power_law(0.75);
    HomogSeries hs(g);
    // h_hat = 0 reduces to phi(t)
    CHECK(hs.value(1.0, 1.0, 0.0, 10, 1e-9) ==
          doctest::Approx(g(1.0, 1.0)).epsilon(1e-12));
    // term-ratio decay and majorant domination for alpha = 0.75, h_hat = 1
    double prev_ratio = 1e9;
    for (int k = 1; k <= 6; ++k) {
        double tk = hs.term(k, 1.0, 1.0, 1.0);
        CHECK(tk > 0.0);
        CHECK(tk <= hs.term_majorant(k, 1.0, 1.0, 1.0) * (1.0 + 1e-9));
        if (k >= 2) {
            double ratio = tk / hs.term(k - 1, 1.0, 1.0, 1.0);
            CHECK(ratio < prev_ratio * 1.2);
            prev_ratio = ratio;
        }
    }
    // eventually contracting term ratio
    CHECK(hs.term(6, 1.0, 1.0, 1.0) < hs.term(5, 1.0, 1.0, 1.0));
    // the tail bound shrinks below tol
    double tail = 0.0;
    double z = hs.value(1.0, 1.0, 1.0, 24, 1e-7, &tail);
    CHECK(z > g(1.0, 1.0));
    CHECK(tail < 1e-7 * z);
}

TEST_CASE("discrete iterated integral: telescoping and the named conversion") {
    RenewalLaw law = RenewalLaw::make(0.75, 1.0, 1e-12);
    DisorderSpec spec = DisorderSpec::product({-1.0, 1.0}, {0.75, 0.25});
    Classification cls = classify_r(spec);
    ScalingSchedule sch{0.75, 1.0, cls.r, 1.0, 0.0};
    int n = 32;
    double bn = sch.beta_n(n);
    DisorderSample smp = sample_fields(spec, n, n, bn, 5);

    // k=1 with psi == 1 telescopes to Mbar_n(t)
    auto one = [](const std::vector<double>&) { return 1.0; };
    double sum = discrete_iterated_integral(one, smp, sch, cls.sigma_r_sq, n, n, 1.0, 1.0, 1);
    FieldGrid f = partial_sum_field(smp, sch, n, 1.0, 1.0, n, cls.sigma_r_sq);
    CHECK(sum == doctest::Approx(f.at(static_cast<std::size_t>(n), static_cast<std::size_t>(n)))
                     .epsilon(1e-11));

    // m = n identity: the conversion reproduces the direct tilde-Z sum
    MassTable mass = mass_function(law, LatticeBox{n, n});
    auto psi_n = [&](const std::vector<double>& pt) {
        int a = static_cast<int>(std::lround(pt[0] * n));
        int b = static_cast<int>(std::lround(pt[1] * n));
        if (a < 1 || b < 1 || a >= n || b >= n) return 0.0;
        double scale = std::pow(static_cast<double>(n), 2.0 - 0.75);
        return scale * mass(a, b) * scale * mass(n - a, n - b);
    };
    double lhs = tilde_z_conversion_factor(sch, cls.sigma_r_sq, n) *
                 discrete_iterated_integral(psi_n, smp, sch, cls.sigma_r_sq, n, n, 1.0, 1.0, 1);
    double rhs = tilde_z1_direct(law, mass, smp, sch, n, 1.0, 1.0);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));

    CHECK_THROWS_AS(
        discrete_iterated_integral(one, smp, sch, cls.sigma_r_sq, n, 5, 1.0, 1.0, 1),
        std::invalid_argument);
}

TEST_CASE("chaos variance series: zero coupling, monotone partial sums, tail") {
    ChaosVarianceSeries z = chaos_variance_series(0.75, 1.0, 1.0, 1, 0.1875, 0.0, 3, 1000, 3, 1);
    for (double s : z.partial_sums) CHECK(s == 0.0);

    ChaosVarianceSeries s =
        chaos_variance_series(0.75, 1.0, 1.0, 1, 0.1875, 0.7, 3, 6000, 3, 2);
    CHECK(s.partial_sums.size() == 3);
    CHECK(s.terms[0] > 0.0);
    for (std::size_t i = 1; i < s.partial_sums.size(); ++i)
        CHECK(s.partial_sums[i] >= s.partial_sums[i - 1]);
    CHECK(s.tail_bound >= 0.0);
    CHECK_THROWS_AS(chaos_variance_series(0.45, 1.0, 1.0, 1, 1.0, 1.0, 2, 100, 1, 1),
                    std::invalid_argument);
}

TEST_CASE("isometry at simple functions and cross-order orthogonality") {
    // E[M(A) M(B)] within 4 SE of the closed-form nu measure
    std::vector<double> xs = {0.0, 0.2, 0.45, 0.7, 1.0};
    const int reps = 60000;
    struct Acc {
        KahanSum s1, s2, s12, s1122;
    } acc;
    std::vector<double> ortho(static_cast<std::size_t>(reps));
    PhiFn g = PhiFn::power_law(0.75);
    ChaosKernel k1{g, 1.0, 1.0, 1, KernelVariant::Q, 0.0, nullptr, 16};
    ChaosKernel k2{g, 1.0, 1.0, 2, KernelVariant::Q, 0.0, nullptr, 16};
    // precompute kernel values on cell midpoints for the orthogonality probe
    const int G = 4;
    for (int r = 0; r < reps; ++r) {
        FieldGrid f = sample_limit_field(xs, xs, 777 + static_cast<uint64_t>(r));
        double a = rectangle_increment(f, 0.2, 0.45, 0.2, 0.7);
        double b = rectangle_increment(f, 0.2, 0.45, 0.45, 1.0);
        acc.s1.add(a);
        acc.s2.add(b);
        acc.s12.add(a * b);
        acc.s1122.add(a * a * b * b);
        // I1 = sum psi dM ; I2 = sum psi dM dM over the coarse grid
        double i1 = 0.0, i2 = 0.0;
        double inc[G][G];
        for (int p = 0; p < G; ++p)
            for (int q = 0; q < G; ++q)
                inc[p][q] = f.at(static_cast<std::size_t>(p) + 1, static_cast<std::size_t>(q) + 1) -
                            f.at(static_cast<std::size_t>(p), static_cast<std::size_t>(q) + 1) -
                            f.at(static_cast<std::size_t>(p) + 1, static_cast<std::size_t>(q)) +
                            f.at(static_cast<std::size_t>(p), static_cast<std::size_t>(q));
        for (int p = 0; p < G; ++p)
            for (int q = 0; q < G; ++q) {
                double mx = 0.5 * (xs[static_cast<std::size_t>(p)] + xs[static_cast<std::size_t>(p) + 1]);
                double my = 0.5 * (xs[static_cast<std::size_t>(q)] + xs[static_cast<std::size_t>(q) + 1]);
                i1 += k1.value1(mx, my) * inc[p][q];
                for (int p2 = p + 1; p2 < G; ++p2)
                    for (int q2 = q + 1; q2 < G; ++q2) {
                        double mx2 = 0.5 * (xs[static_cast<std::size_t>(p2)] +
                                            xs[static_cast<std::size_t>(p2) + 1]);
                        double my2 = 0.5 * (xs[static_cast<std::size_t>(q2)] +
                                            xs[static_cast<std::size_t>(q2) + 1]);
                        i2 += k2.value2(mx, my, mx2, my2) * inc[p][q] * inc[p2][q2];
                    }
            }
        ortho[static_cast<std::size_t>(r)] = i1 * i2;
    }
    double m1 = acc.s1.value() / reps, m2 = acc.s2.value() / reps;
    double cov = acc.s12.value() / reps - m1 * m2;
    double cse = std::sqrt(std::max(acc.s1122.value() / reps - cov * cov, 0.0) / reps);
    double expect = nu_measure_rectangles(0.2, 0.45, 0.2, 0.7, 0.2, 0.45, 0.45, 1.0);
    CHECK(std::abs(cov - expect) < 4.0 * cse);

    MeanSe o = mean_se(ortho);
    CHECK(std::abs(o.mean) < 4.0 * o.se);
}

TEST_CASE("numeric phi profile vanishes on the axes and scales like a power") {
    RenewalLaw law = RenewalLaw::make(0.75, 1.0, 1e-12);
    PhiFn phin = make_numeric_phi(law, 128);
    CHECK(phin(1.0, 0.0) == 0.0);
    CHECK(phin(0.0, 1.0) == 0.0);
    // exact homogeneity of the representation
    double v1 = phin(0.6, 0.8);
    double v2 = phin(1.2, 1.6);
    CHECK(v2 == doctest::Approx(v1 * std::pow(2.0, 0.75 - 2.0)).epsilon(1e-12));
    CHECK(phin(1.0, 1.0) > 0.0);
}

TEST_CASE("h-dressed kernel uses the homogeneous series per gap") {
    PhiFn g = PhiFn::power_law(0.75);
    auto hs = std::make_shared<HomogSeries>(g);
    ChaosKernel kd{g, 1.0, 1.0, 1, KernelVariant::HDressed, 0.8, hs, 12};
    double v = kd.value1(0.4, 0.5);
    double expect = hs->value(0.4, 0.5, 0.8, 12, 1e-6) * hs->value(0.6, 0.5, 0.8, 12, 1e-6);
    CHECK(v == doctest::Approx(expect).epsilon(1e-9));
    // dressing with h_hat = 0 reduces to the plain kernel
    ChaosKernel k0{g, 1.0, 1.0, 1, KernelVariant::HDressed, 0.0, hs, 12};
    ChaosKernel kq{g, 1.0, 1.0, 1, KernelVariant::Q, 0.0, nullptr, 12};
    // agreement up to the angular interpolation of the level-1 profile
    CHECK(k0.value1(0.3, 0.7) == doctest::Approx(kq.value1(0.3, 0.7)).epsilon(1e-4));
}
