#include "gps/chaos.hpp"

#include "gps/quadrature.hpp"
#include "gps/rng.hpp"
#include "gps/stats.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <atomic>
#include <map>
#include <unordered_map>
#include <stdexcept>
#include <thread>

namespace gps {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

double AngularFn::eval(double th) const {
    if (theta.empty()) return 0.0;
    if (th <= theta.front()) return val.front();
    if (th >= theta.back()) return val.back();
    std::size_t hi = static_cast<std::size_t>(
        std::upper_bound(theta.begin(), theta.end(), th) - theta.begin());
    std::size_t lo = hi - 1;
    double f = (th - theta[lo]) / (theta[hi] - theta[lo]);
    return val[lo] + f * (val[hi] - val[lo]);
}

PhiFn PhiFn::power_law(double alpha) {
    PhiFn p;
    p.alpha_ = alpha;
    p.source_ = Source::PowerLaw;
    return p;
}

PhiFn PhiFn::numeric(double alpha, AngularFn a) {
    PhiFn p;
    p.alpha_ = alpha;
    p.source_ = Source::Numeric;
    p.a_ = std::make_shared<AngularFn>(std::move(a));
    return p;
}

double PhiFn::operator()(double s1, double s2) const {
    if (!(s1 > 0.0) || !(s2 > 0.0)) return 0.0;
    if (source_ == Source::PowerLaw)
        return std::pow(s1 + s2, alpha_ - 2.0);
    double r = std::hypot(s1, s2);
    double th = std::atan2(s2, s1);
    return std::pow(r, alpha_ - 2.0) * a_->eval(th);
}

// The mass function approaches its limit slowly for these heavy tails, so the
// profile is taken as a plain bin average at a single resolution over a radius
// window matched to the scales the callers compare against (effective lattice
// distance ~0.35m..0.95m).
PhiFn make_numeric_phi(const RenewalLaw& law, int m, int theta_bins) {
    const double alpha = law.alpha();
    MassTable t = mass_function_fast(law, LatticeBox{m, m});
    double scale = std::pow(static_cast<double>(m), 2.0 - alpha) * law.slow_constant();
    std::vector<double> binsum(static_cast<std::size_t>(theta_bins), 0.0);
    std::vector<double> bincnt(static_cast<std::size_t>(theta_bins), 0.0);
    for (int i1 = 1; i1 <= m; ++i1)
        for (int i2 = 1; i2 <= m; ++i2) {
            double x = static_cast<double>(i1) / m, y = static_cast<double>(i2) / m;
            double r = std::hypot(x, y);
            if (r < 0.35 || r > 0.95) continue;
            double th = std::atan2(y, x);
            int b = static_cast<int>(th / (0.5 * kPi) * (theta_bins - 1) + 0.5);
            b = std::clamp(b, 0, theta_bins - 1);
            binsum[static_cast<std::size_t>(b)] += std::pow(r, 2.0 - alpha) * scale * t(i1, i2);
            bincnt[static_cast<std::size_t>(b)] += 1.0;
        }
    AngularFn a;
    for (int b = 0; b < theta_bins; ++b) {
        double th = 0.5 * kPi * b / (theta_bins - 1);
        double est = bincnt[static_cast<std::size_t>(b)] > 0.0
                         ? binsum[static_cast<std::size_t>(b)] / bincnt[static_cast<std::size_t>(b)]
                         : 0.0;
        a.theta.push_back(th);
        a.val.push_back(std::max(0.0, est));
    }
    // the profile vanishes on the axes
    a.val.front() = 0.0;
    a.val.back() = 0.0;
    return PhiFn::numeric(alpha, std::move(a));
}

// ---------------------------------------------------------------------------
// homogeneous continuum series
// ---------------------------------------------------------------------------

HomogSeries::HomogSeries(PhiFn phi, int theta_nodes, int panels)
    : phi_(std::move(phi)), alpha_(phi_.alpha()), theta_nodes_(theta_nodes),
      panels_(panels) {
    // envelope phi <= C_a |s|_1^{alpha-2}
    double c = 0.0;
    for (int i = 0; i <= 256; ++i) {
        double th = 0.5 * kPi * i / 256;
        double x = std::cos(th), y = std::sin(th);
        if (x <= 0.0 || y <= 0.0) continue;
        double ratio = phi_(x, y) / std::pow(x + y, alpha_ - 2.0);
        c = std::max(c, ratio);
    }
    envelope_const_ = std::max(c, 1e-12);
    // level 1 = phi itself
    AngularFn g1;
    for (int i = 0; i < theta_nodes_; ++i) {
        double th = 0.5 * kPi * i / (theta_nodes_ - 1);
        double x = std::cos(th), y = std::sin(th);
        g1.theta.push_back(th);
        g1.val.push_back((x > 0.0 && y > 0.0) ? phi_(x, y) : 0.0);
    }
    levels_.push_back(std::move(g1));
}

void HomogSeries::ensure_levels(int j) const {
    while (static_cast<int>(levels_.size()) < j) {
        int cur = static_cast<int>(levels_.size()); // building level cur+1
        const AngularFn& prev = levels_.back();
        double deg_prev = cur * alpha_ - 2.0;
        AngularFn next;
        for (int i = 0; i < theta_nodes_; ++i) {
            double th = 0.5 * kPi * i / (theta_nodes_ - 1);
            double ex = std::cos(th), ey = std::sin(th);
            double v = 0.0;
            if (ex > 1e-14 && ey > 1e-14) {
                Quad1D qx = graded_both(0.0, ex, panels_);
                Quad1D qy = graded_both(0.0, ey, panels_);
                KahanSum acc;
                for (std::size_t a = 0; a < qx.x.size(); ++a) {
                    double ux = qx.x[a];
                    for (std::size_t b = 0; b < qy.x.size(); ++b) {
                        double uy = qy.x[b];
                        double ru = std::hypot(ux, uy);
                        double fu = std::pow(ru, deg_prev) * prev.eval(std::atan2(uy, ux));
                        double g = phi_(ex - ux, ey - uy);
                        acc.add(qx.w[a] * qy.w[b] * fu * g);
                    }
                }
                v = acc.value();
            }
            next.theta.push_back(th);
            next.val.push_back(v);
        }
        levels_.push_back(std::move(next));
    }
}

double HomogSeries::level(int j, double s1, double s2) const {
    if (!(s1 > 0.0) || !(s2 > 0.0)) return 0.0;
    ensure_levels(j);
    double r = std::hypot(s1, s2);
    double th = std::atan2(s2, s1);
    return std::pow(r, j * alpha_ - 2.0) *
           levels_[static_cast<std::size_t>(j) - 1].eval(th);
}

double HomogSeries::term(int k, double s1, double s2, double h_hat) const {
    return std::pow(h_hat, k) * level(k + 1, s1, s2);
}

double HomogSeries::term_majorant(int k, double s1, double s2, double h_hat) const {
    // Dirichlet reduction of the simplex integral: splitting each l1-gap
    // total across the two axes contributes a polytope volume bounded by
    // (k+1)^2 prod(tau_i) / T, whence
    // |term_k| <= |h|^k C_a^{k+1} (k+1)^2 Gamma(a)^{k+1}/Gamma((k+1)a) T^{(k+1)a-2}
    double nt = s1 + s2;
    double lg = k * std::log(std::abs(h_hat) > 0.0 ? std::abs(h_hat) : 1e-300) +
                (k + 1) * (std::log(envelope_const_) + std::lgamma(alpha_)) +
                2.0 * std::log(k + 1.0) - std::lgamma((k + 1) * alpha_) +
                ((k + 1) * alpha_ - 2.0) * std::log(nt);
    return std::exp(lg);
}

double HomogSeries::value(double s1, double s2, double h_hat, int k_max, double tol,
                          double* tail_bound) const {
    if (!(s1 > 0.0) || !(s2 > 0.0)) {
        if (tail_bound) *tail_bound = 0.0;
        return 0.0;
    }
    if (h_hat == 0.0) {
        if (tail_bound) *tail_bound = 0.0;
        return level(1, s1, s2);
    }
    KahanSum acc;
    double tb = 0.0;
    for (int k = 0; k <= k_max; ++k) {
        acc.add(term(k, s1, s2, h_hat));
        KahanSum ts; // explicit majorant tail; terms decay superexponentially
        for (int j = k + 1; j <= k + 40; ++j) ts.add(term_majorant(j, s1, s2, h_hat));
        tb = ts.value();
        if (k >= 1 && tb < tol * std::max(std::abs(acc.value()), 1e-300)) break;
    }
    if (tail_bound) *tail_bound = tb;
    return acc.value();
}

void HomogSeries::prewarm(int j) const { ensure_levels(j); }

double continuum_homogeneous(double t1, double t2, double h_hat, double alpha,
                             const PhiFn& phi, int k_max, double tol,
                             double* tail_bound) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("continuum_homogeneous: alpha in (0,1)");
    (void)alpha;
    HomogSeries series(phi);
    return series.value(t1, t2, h_hat, k_max, tol, tail_bound);
}

// ---------------------------------------------------------------------------
// kernels
// ---------------------------------------------------------------------------

double ChaosKernel::gap_factor(double g1, double g2) const {
    if (variant == KernelVariant::HDressed)
        return homog->value(g1, g2, h_hat, h_kmax, 1e-6);
    return phi(g1, g2);
}

double ChaosKernel::value(const std::vector<double>& s) const {
    if (static_cast<int>(s.size()) != 2 * k)
        throw std::invalid_argument("ChaosKernel::value: wrong point count");
    double px = 0.0, py = 0.0;
    double prod = 1.0;
    for (int i = 0; i < k; ++i) {
        double x = s[static_cast<std::size_t>(2 * i)];
        double y = s[static_cast<std::size_t>(2 * i) + 1];
        if (!(x > px && y > py)) return 0.0;
        prod *= gap_factor(x - px, y - py);
        px = x;
        py = y;
    }
    if (!(px < t1 && py < t2)) return 0.0;
    if (variant != KernelVariant::Free) prod *= gap_factor(t1 - px, t2 - py);
    if (variant == KernelVariant::Cond) prod /= phi(t1, t2);
    return prod;
}

double ChaosKernel::value1(double x, double y) const {
    if (!(x > 0.0 && y > 0.0 && x < t1 && y < t2)) return 0.0;
    double prod = gap_factor(x, y);
    if (variant != KernelVariant::Free) prod *= gap_factor(t1 - x, t2 - y);
    if (variant == KernelVariant::Cond) prod /= phi(t1, t2);
    return prod;
}

double ChaosKernel::value2(double x1, double y1, double x2, double y2) const {
    if (!(x1 > 0.0 && y1 > 0.0 && x2 > x1 && y2 > y1 && x2 < t1 && y2 < t2)) return 0.0;
    double prod = gap_factor(x1, y1) * gap_factor(x2 - x1, y2 - y1);
    if (variant != KernelVariant::Free) prod *= gap_factor(t1 - x2, t2 - y2);
    if (variant == KernelVariant::Cond) prod /= phi(t1, t2);
    return prod;
}

// ---------------------------------------------------------------------------
// nu pairing integral (k = 1 covariance-measure quadrature)
// ---------------------------------------------------------------------------

namespace {

double nu_pair_once(const std::function<double(double, double)>& g,
                    const std::function<double(double, double)>& h, double t1, double t2,
                    int panels) {
    Quad1D qx = graded_both(0.0, t1, panels);
    Quad1D qy = graded_both(0.0, t2, panels);
    // inner integrals depend on one coordinate of u only
    std::vector<double> inner_row(qy.x.size(), 0.0); // int h(x, u2) dx as fn of u2
    for (std::size_t b = 0; b < qy.x.size(); ++b) {
        Quad1D qi = graded_both(0.0, t1, panels);
        KahanSum s;
        for (std::size_t i = 0; i < qi.x.size(); ++i)
            s.add(qi.w[i] * h(qi.x[i], qy.x[b]));
        inner_row[b] = s.value();
    }
    std::vector<double> inner_col(qx.x.size(), 0.0); // int h(u1, y) dy as fn of u1
    for (std::size_t a = 0; a < qx.x.size(); ++a) {
        Quad1D qi = graded_both(0.0, t2, panels);
        KahanSum s;
        for (std::size_t i = 0; i < qi.x.size(); ++i)
            s.add(qi.w[i] * h(qx.x[a], qi.x[i]));
        inner_col[a] = s.value();
    }
    KahanSum acc;
    for (std::size_t a = 0; a < qx.x.size(); ++a)
        for (std::size_t b = 0; b < qy.x.size(); ++b)
            acc.add(qx.w[a] * qy.w[b] * g(qx.x[a], qy.x[b]) * (inner_row[b] + inner_col[a]));
    return acc.value();
}

} // namespace

NuIntegral nu_pair_integral(const std::function<double(double, double)>& g,
                            const std::function<double(double, double)>& h,
                            double t1, double t2, const QuadSpec& spec) {
    NuIntegral out;
    int panels = spec.panels;
    for (int level = 0; level < spec.max_levels; ++level) {
        out.refinement.push_back(nu_pair_once(g, h, t1, t2, panels));
        panels *= 2;
        std::size_t m = out.refinement.size();
        if (m >= 2) {
            double prev = out.refinement[m - 2], cur = out.refinement[m - 1];
            out.value = cur;
            out.abserr = std::abs(cur - prev);
            double rel = (cur - prev) / std::max(std::abs(cur), 1e-300);
            if (rel > 0.10) {
                out.diverged = true; // value still growing by >10% per level
            } else {
                out.diverged = false;
                if (std::abs(rel) < spec.conv_tol && m >= 3) break;
            }
        }
    }
    if (out.refinement.size() < 2) {
        out.value = out.refinement.empty() ? 0.0 : out.refinement.back();
    }
    return out;
}

// ---------------------------------------------------------------------------
// 321-avoiding permutations
// ---------------------------------------------------------------------------

namespace {

bool has_decreasing_triple(const std::vector<int>& p) {
    const int n = static_cast<int>(p.size());
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            if (p[static_cast<std::size_t>(j)] >= p[static_cast<std::size_t>(i)]) continue;
            for (int l = j + 1; l < n; ++l)
                if (p[static_cast<std::size_t>(l)] < p[static_cast<std::size_t>(j)]) return true;
        }
    return false;
}

} // namespace

PairingSet avoiding_permutations(int k) {
    if (k < 1 || k > 8) throw std::invalid_argument("avoiding_permutations: 1 <= k <= 8");
    PairingSet out;
    out.k = k;
    std::vector<int> p(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) p[static_cast<std::size_t>(i)] = i;
    do {
        if (!has_decreasing_triple(p)) out.permutations.push_back(p);
    } while (std::next_permutation(p.begin(), p.end()));
    return out;
}

std::string NuNorm::to_json() const {
    nlohmann::json j;
    j["k"] = k;
    j["value"] = value;
    j["abserr"] = abserr;
    j["method"] = method;
    j["diverged"] = diverged;
    j["budget_flag"] = budget_flag;
    if (gamma_bound > 0.0) {
        j["gamma_bound"] = gamma_bound;
        j["pass"] = value <= gamma_bound;
    }
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// closed-grid psi norms, k <= 2
// ---------------------------------------------------------------------------

namespace {

// one-dimensional kernel slice: psi evaluated with one point on a line
double norm_k1_once(const ChaosKernel& ker, int panels) {
    Quad1D qx = graded_both(0.0, ker.t1, panels);
    Quad1D qy = graded_both(0.0, ker.t2, panels);
    std::vector<double> inner_row(qy.x.size(), 0.0);
    for (std::size_t b = 0; b < qy.x.size(); ++b) {
        KahanSum s;
        for (std::size_t i = 0; i < qx.x.size(); ++i)
            s.add(qx.w[i] * ker.value1(qx.x[i], qy.x[b]));
        inner_row[b] = s.value();
    }
    std::vector<double> inner_col(qx.x.size(), 0.0);
    for (std::size_t a = 0; a < qx.x.size(); ++a) {
        KahanSum s;
        for (std::size_t i = 0; i < qy.x.size(); ++i)
            s.add(qy.w[i] * ker.value1(qx.x[a], qy.x[i]));
        inner_col[a] = s.value();
    }
    KahanSum acc;
    for (std::size_t a = 0; a < qx.x.size(); ++a)
        for (std::size_t b = 0; b < qy.x.size(); ++b)
            acc.add(qx.w[a] * qy.w[b] * ker.value1(qx.x[a], qy.x[b]) *
                    (inner_row[b] + inner_col[a]));
    return acc.value();
}

// k = 2: for each admissible permutation and row/column mask, integrate
// psi(u1,u2) psi(v1,v2) with v_i on the line of u_{sigma(i)}. The u-integral
// is a nested graded tensor (u2 meshes anchored at u1 so every singular face
// is a mesh face); the v-double-integral is memoized over the two pinned
// u-coordinates.
struct VKey {
    int a = 0, b = 0;
    bool operator<(const VKey& o) const { return a < o.a || (a == o.a && b < o.b); }
};

double norm_k2_term(const ChaosKernel& ker, int panels, const std::vector<int>& sigma,
                    int mask, int threads) {
    const double T1 = ker.t1, T2 = ker.t2;
    const int pv = std::max(3, panels - 1);

    Quad1D q1x = graded_both(0.0, T1, panels);
    Quad1D q1y = graded_both(0.0, T2, panels);
    // nested second-point meshes, one per first-point node
    std::vector<Quad1D> q2x(q1x.x.size()), q2y(q1y.x.size());
    for (std::size_t a = 0; a < q1x.x.size(); ++a) q2x[a] = graded_both(q1x.x[a], T1, panels);
    for (std::size_t b = 0; b < q1y.x.size(); ++b) q2y[b] = graded_both(q1y.x[b], T2, panels);

    const bool v1_row = (mask & 1) == 0; // free coordinate along axis 1
    const bool v2_row = (mask & 2) == 0;
    const double Ta1 = v1_row ? T1 : T2;
    const double Ta2 = v2_row ? T1 : T2;
    // prebuilt inner meshes: z1-mesh, and z2-meshes (nested over z1 when
    // both v's run along the same axis)
    Quad1D w1 = graded_both(0.0, Ta1, pv);
    Quad1D w2_flat = graded_both(0.0, Ta2, pv);
    std::vector<Quad1D> w2_nested;
    if (v1_row == v2_row) {
        w2_nested.resize(w1.x.size());
        for (std::size_t i = 0; i < w1.x.size(); ++i)
            w2_nested[i] = graded_both(w1.x[i], Ta2, pv);
    }

    auto v_integral_compute = [&](double p1, double p2) {
        KahanSum acc;
        for (std::size_t i = 0; i < w1.x.size(); ++i) {
            double z1 = w1.x[i];
            double v1x = v1_row ? z1 : p1;
            double v1y = v1_row ? p1 : z1;
            const Quad1D& w2 = (v1_row == v2_row) ? w2_nested[i] : w2_flat;
            KahanSum inner;
            for (std::size_t j = 0; j < w2.x.size(); ++j) {
                double z2 = w2.x[j];
                double v2x = v2_row ? z2 : p2;
                double v2y = v2_row ? p2 : z2;
                inner.add(w2.w[j] * ker.value2(v1x, v1y, v2x, v2y));
            }
            acc.add(w1.w[i] * inner.value());
        }
        return acc.value();
    };

    auto pins_of = [&](std::size_t a1, std::size_t b1, std::size_t a2, std::size_t b2,
                       const Quad1D& qx2, const Quad1D& qy2, double& pin1, double& pin2,
                       long& ka, long& kb) {
        double u1x = q1x.x[a1], u1y = q1y.x[b1];
        double u2x = qx2.x[a2], u2y = qy2.x[b2];
        if (sigma[0] == 0) {
            pin1 = v1_row ? u1y : u1x;
            ka = static_cast<long>(v1_row ? b1 : a1) * 2 + (v1_row ? 1 : 0);
        } else {
            pin1 = v1_row ? u2y : u2x;
            ka = 1000000 +
                 static_cast<long>(v1_row ? (b1 * qy2.x.size() + b2)
                                          : (a1 * qx2.x.size() + a2)) *
                     2 +
                 (v1_row ? 1 : 0);
        }
        if (sigma[1] == 0) {
            pin2 = v2_row ? u1y : u1x;
            kb = static_cast<long>(v2_row ? b1 : a1) * 2 + (v2_row ? 1 : 0);
        } else {
            pin2 = v2_row ? u2y : u2x;
            kb = 1000000 +
                 static_cast<long>(v2_row ? (b1 * qy2.x.size() + b2)
                                          : (a1 * qx2.x.size() + a2)) *
                     2 +
                 (v2_row ? 1 : 0);
        }
    };

    // pass 1: collect the distinct pinned-coordinate keys
    std::unordered_map<uint64_t, std::pair<double, double>> keys;
    keys.reserve(1 << 20);
    for (std::size_t a1 = 0; a1 < q1x.x.size(); ++a1) {
        const Quad1D& qx2 = q2x[a1];
        for (std::size_t b1 = 0; b1 < q1y.x.size(); ++b1) {
            const Quad1D& qy2 = q2y[b1];
            for (std::size_t a2 = 0; a2 < qx2.x.size(); ++a2)
                for (std::size_t b2 = 0; b2 < qy2.x.size(); ++b2) {
                    double pin1, pin2;
                    long ka, kb;
                    pins_of(a1, b1, a2, b2, qx2, qy2, pin1, pin2, ka, kb);
                    keys.emplace((static_cast<uint64_t>(ka) << 32) |
                                     static_cast<uint64_t>(kb),
                                 std::make_pair(pin1, pin2));
                }
        }
    }

    // pass 2: evaluate the inner v-integrals in parallel
    std::vector<uint64_t> key_list;
    std::vector<std::pair<double, double>> pin_list;
    key_list.reserve(keys.size());
    for (auto& kv : keys) {
        key_list.push_back(kv.first);
        pin_list.push_back(kv.second);
    }
    std::vector<double> iv(key_list.size(), 0.0);
    {
        std::atomic<std::size_t> next{0};
        auto worker = [&]() {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= key_list.size()) break;
                iv[i] = v_integral_compute(pin_list[i].first, pin_list[i].second);
            }
        };
        std::vector<std::thread> pool;
        int T = std::max(1, threads);
        for (int t = 0; t < T; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    std::unordered_map<uint64_t, double> memo;
    memo.reserve(key_list.size() * 2);
    for (std::size_t i = 0; i < key_list.size(); ++i) memo[key_list[i]] = iv[i];

    // pass 3: outer quadrature with lookups
    KahanSum outer;
    for (std::size_t a1 = 0; a1 < q1x.x.size(); ++a1) {
        double u1x = q1x.x[a1];
        const Quad1D& qx2 = q2x[a1];
        for (std::size_t b1 = 0; b1 < q1y.x.size(); ++b1) {
            double u1y = q1y.x[b1];
            const Quad1D& qy2 = q2y[b1];
            double wu1 = q1x.w[a1] * q1y.w[b1];
            for (std::size_t a2 = 0; a2 < qx2.x.size(); ++a2) {
                double u2x = qx2.x[a2];
                for (std::size_t b2 = 0; b2 < qy2.x.size(); ++b2) {
                    double u2y = qy2.x[b2];
                    double pu = ker.value2(u1x, u1y, u2x, u2y);
                    if (pu == 0.0) continue;
                    double pin1, pin2;
                    long ka, kb;
                    pins_of(a1, b1, a2, b2, qx2, qy2, pin1, pin2, ka, kb);
                    outer.add(wu1 * qx2.w[a2] * qy2.w[b2] * pu *
                              memo.find((static_cast<uint64_t>(ka) << 32) |
                                        static_cast<uint64_t>(kb))
                                  ->second);
                }
            }
        }
    }
    return outer.value();
}

double norm_k2_once(const ChaosKernel& ker, int panels, int threads) {
    PairingSet perms = avoiding_permutations(2);
    const bool square = ker.t1 == ker.t2;
    KahanSum total;
    for (const auto& sigma : perms.permutations)
        for (int mask = 0; mask < 4; ++mask) {
            if (square && (mask & 1) == 1) continue; // axis-swap pairs with mask^3
            double w = square ? 2.0 : 1.0;
            total.add(w * norm_k2_term(ker, panels, sigma, mask, threads));
        }
    return total.value();
}

} // namespace

NuNorm psi_norm_closed_grid(const ChaosKernel& kernel, const QuadSpec& spec, int threads) {
    NuNorm out;
    out.k = kernel.k;
    out.method = "closed-grid";
    if (kernel.k > 2)
        throw std::invalid_argument("psi_norm_closed_grid: k <= 2 only");
    std::vector<double> vals;
    int panels = spec.panels;
    for (int level = 0; level < spec.max_levels; ++level) {
        double v = kernel.k == 1 ? norm_k1_once(kernel, panels)
                                 : norm_k2_once(kernel, panels, threads);
        vals.push_back(v);
        if (vals.size() >= 2) {
            double prev = vals[vals.size() - 2], cur = vals.back();
            out.value = cur;
            out.abserr = std::abs(cur - prev);
            double rel = (cur - prev) / std::max(std::abs(cur), 1e-300);
            if (rel > 0.10) {
                out.diverged = true;
            } else {
                out.diverged = false;
                if (std::abs(rel) < spec.conv_tol) break;
            }
        }
        panels = kernel.k == 1 ? panels * 2 : panels + 2;
    }
    if (vals.size() == 1) out.value = vals[0];
    return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo psi norms
// ---------------------------------------------------------------------------

namespace {

struct DirichletMix {
    double a_heavy; // alpha/2 per axis: the two-axis product matches |g|^(alpha-2)
    int parts;
    double total;

    double log_density(const double* g, double shape) const {
        double lg = std::lgamma(shape * parts) - parts * std::lgamma(shape);
        for (int i = 0; i < parts; ++i)
            lg += (shape - 1.0) * std::log(std::max(g[i] / total, 1e-300));
        lg -= (parts - 1) * std::log(total);
        return lg;
    }

    double density(const double* g) const {
        return 0.6 * std::exp(log_density(g, a_heavy)) + 0.4 * std::exp(log_density(g, 1.0));
    }

    void sample(Rng& rng, double* g) const {
        double shape = rng.uniform() < 0.6 ? a_heavy : 1.0;
        double s = 0.0;
        for (int i = 0; i < parts; ++i) {
            g[i] = rng.gamma(shape);
            s += g[i];
        }
        for (int i = 0; i < parts; ++i) g[i] *= total / s;
    }
};

// Nested graded quadrature of psi over the v-lines for a fixed u-sample:
// v_i lives on the row/column of u_{sigma(i)}; free coordinates are
// integrated with meshes graded toward the ordering anchor and the far end.
struct LineIntegrator {
    const ChaosKernel* ker;
    const std::vector<int>* sigma;
    int mask;
    double T1, T2;
    Quad1D unit; // graded mesh on [0,1], scaled per anchor

    double recurse(const double* u, int level, double px, double py, double prod) const {
        const int k = ker->k;
        bool row = ((mask >> level) & 1) == 0;
        int target = (*sigma)[static_cast<std::size_t>(level)];
        double pin = row ? u[2 * target + 1] : u[2 * target];
        double prev_other = row ? py : px;
        double prev_axis = row ? px : py;
        double Taxis = row ? T1 : T2;
        if (pin <= prev_other) return 0.0;
        double len = Taxis - prev_axis;
        if (len <= 0.0) return 0.0;
        KahanSum acc;
        for (std::size_t i = 0; i < unit.x.size(); ++i) {
            double z = prev_axis + len * unit.x[i];
            double w = len * unit.w[i];
            double vx = row ? z : pin;
            double vy = row ? pin : z;
            if (!(vx > px && vy > py)) continue;
            double gap = ker->gap_factor(vx - px, vy - py);
            if (gap == 0.0) continue;
            if (level + 1 == k) {
                double tail = 1.0;
                if (ker->variant != KernelVariant::Free) {
                    if (!(vx < T1 && vy < T2)) continue;
                    tail = ker->gap_factor(T1 - vx, T2 - vy);
                }
                acc.add(w * prod * gap * tail);
            } else {
                acc.add(w * recurse(u, level + 1, vx, vy, prod * gap));
            }
        }
        return acc.value();
    }

    double integrate(const double* u) const {
        double v = recurse(u, 0, 0.0, 0.0, 1.0);
        if (ker->variant == KernelVariant::Cond) v /= ker->phi(ker->t1, ker->t2);
        return v;
    }
};

} // namespace

NuNorm psi_norm_mc(const ChaosKernel& kernel, long samples, uint64_t seed, int threads) {
    NuNorm out;
    out.k = kernel.k;
    out.method = "mc-importance";
    if (kernel.k > 4) throw std::invalid_argument("psi_norm_mc: k <= 4 only");
    const int k = kernel.k;
    const double alpha = kernel.phi.alpha();
    if (!(alpha > 0.5)) {
        out.diverged = true;
        return out;
    }
    const double T[2] = {kernel.t1, kernel.t2};
    if (kernel.variant == KernelVariant::HDressed && kernel.homog)
        kernel.homog->prewarm(kernel.h_kmax + 2);
    PairingSet perms = avoiding_permutations(k);

    struct Term {
        const std::vector<int>* sigma;
        int mask;
    };
    std::vector<Term> terms;
    for (const auto& s : perms.permutations)
        for (int mask = 0; mask < (1 << k); ++mask) terms.push_back({&s, mask});

    // v-line quadrature resolution: cost per draw is (8 pv)^k
    const int pv = k == 1 ? 10 : (k == 2 ? 6 : 3);
    Quad1D unit = graded_both(0.0, 1.0, pv);

    const double a_heavy = 0.5 * alpha;
    DirichletMix mix1{a_heavy, k + 1, T[0]};
    DirichletMix mix2{a_heavy, k + 1, T[1]};

    KahanSum total;
    KahanSum total_var;
    threads = std::max(1, threads);
    std::vector<double> term_vals(terms.size(), 0.0), term_errs(terms.size(), 0.0);
    for (std::size_t ti = 0; ti < terms.size(); ++ti) {
        const auto& term = terms[ti];
        LineIntegrator li{&kernel, term.sigma, term.mask, T[0], T[1], unit};
        std::vector<double> thread_mean(static_cast<std::size_t>(threads), 0.0);
        std::vector<double> thread_m2(static_cast<std::size_t>(threads), 0.0);
        std::vector<long> thread_n(static_cast<std::size_t>(threads), 0);
        auto worker = [&](int t0) {
            Rng rng = make_stream(seed, "chaos/mcnorm", ti * 1000 + static_cast<uint64_t>(t0));
            double g1[8], g2[8], u[8];
            KahanSum s1, s2;
            long n = 0;
            for (long it = t0; it < samples; it += threads) {
                mix1.sample(rng, g1);
                mix2.sample(rng, g2);
                double q_u = mix1.density(g1) * mix2.density(g2);
                double cx = 0.0, cy = 0.0;
                for (int i = 0; i < k; ++i) {
                    cx += g1[i];
                    cy += g2[i];
                    u[2 * i] = cx;
                    u[2 * i + 1] = cy;
                }
                double psi_u = 1.0;
                {
                    double px = 0.0, py = 0.0;
                    for (int i = 0; i < k && psi_u != 0.0; ++i) {
                        psi_u *= kernel.gap_factor(u[2 * i] - px, u[2 * i + 1] - py);
                        px = u[2 * i];
                        py = u[2 * i + 1];
                    }
                    if (psi_u != 0.0 && kernel.variant != KernelVariant::Free)
                        psi_u *= kernel.gap_factor(T[0] - px, T[1] - py);
                    if (kernel.variant == KernelVariant::Cond)
                        psi_u /= kernel.phi(T[0], T[1]);
                }
                double w = 0.0;
                if (psi_u != 0.0 && q_u > 0.0) {
                    double iv = li.integrate(u);
                    w = psi_u * iv / q_u;
                }
                s1.add(w);
                s2.add(w * w);
                ++n;
            }
            thread_mean[static_cast<std::size_t>(t0)] = s1.value();
            thread_m2[static_cast<std::size_t>(t0)] = s2.value();
            thread_n[static_cast<std::size_t>(t0)] = n;
        };
        if (threads == 1) {
            worker(0);
        } else {
            std::vector<std::thread> pool;
            for (int t0 = 0; t0 < threads; ++t0) pool.emplace_back(worker, t0);
            for (auto& th : pool) th.join();
        }
        double sum = 0.0, sum2 = 0.0;
        long n = 0;
        for (int t0 = 0; t0 < threads; ++t0) {
            sum += thread_mean[static_cast<std::size_t>(t0)];
            sum2 += thread_m2[static_cast<std::size_t>(t0)];
            n += thread_n[static_cast<std::size_t>(t0)];
        }
        double mean = sum / static_cast<double>(n);
        double var = std::max(0.0, sum2 / n - mean * mean);
        term_vals[ti] = mean;
        term_errs[ti] = std::sqrt(var / static_cast<double>(n));
        total.add(mean);
        total_var.add(term_errs[ti] * term_errs[ti]);
    }
    out.value = total.value();
    out.abserr = std::sqrt(total_var.value());
    return out;
}

// ---------------------------------------------------------------------------
// chaos variance series
// ---------------------------------------------------------------------------

ChaosVarianceSeries chaos_variance_series(double alpha, double t1, double t2, int r,
                                          double sigma_r_sq, double beta_hat, int k_max,
                                          long mc_budget, uint64_t seed, int threads) {
    if (!(alpha > 0.5 && alpha < 1.0))
        throw std::invalid_argument("chaos_variance_series: alpha in (1/2,1)");
    ChaosVarianceSeries out;
    if (beta_hat == 0.0) {
        out.partial_sums.assign(static_cast<std::size_t>(k_max), 0.0);
        out.terms.assign(static_cast<std::size_t>(k_max), 0.0);
        return out;
    }
    PhiFn phi = PhiFn::power_law(alpha);
    double coupling = sigma_r_sq * std::pow(beta_hat, 2 * r);
    std::vector<double> norms;
    for (int k = 1; k <= k_max; ++k) {
        ChaosKernel ker{phi, t1, t2, k, KernelVariant::Q, 0.0, nullptr, 16};
        NuNorm nn;
        if (k <= 2) {
            QuadSpec qs;
            qs.panels = 5;
            qs.max_levels = k == 1 ? 4 : 2;
            nn = psi_norm_closed_grid(ker, qs, threads);
        } else {
            nn = psi_norm_mc(ker, mc_budget, seed + static_cast<uint64_t>(k), threads);
        }
        norms.push_back(nn.value);
    }
    // fit the Gamma-bound constant at k = 1 and use it for the tail
    double c_fit = std::sqrt(std::max(norms[0], 1e-300) * std::tgamma(alpha - 0.5));
    out.fitted_constant = c_fit;
    KahanSum s;
    for (int k = 1; k <= k_max; ++k) {
        double term = std::pow(coupling, k) * norms[static_cast<std::size_t>(k) - 1];
        out.terms.push_back(term);
        s.add(term);
        out.partial_sums.push_back(s.value());
    }
    KahanSum tail;
    for (int k = k_max + 1; k <= k_max + 60; ++k) {
        double lg = k * std::log(coupling) + (k + 1) * std::log(c_fit) -
                    std::lgamma(k * (alpha - 0.5));
        tail.add(std::exp(lg));
    }
    out.tail_bound = tail.value();
    return out;
}

// ---------------------------------------------------------------------------
// discrete iterated integrals
// ---------------------------------------------------------------------------

namespace {

struct PrefixField {
    int m1 = 0, m2 = 0;
    std::vector<double> prefix; // (m1+1) x (m2+1)
    double norm = 1.0;

    double rect(int a1, int b1, int a2, int b2) const {
        // sum over lattice i1 in (a1, b1], i2 in (a2, b2]
        const std::size_t stride = static_cast<std::size_t>(m2) + 1;
        auto P = [&](int i, int j) {
            i = std::clamp(i, 0, m1);
            j = std::clamp(j, 0, m2);
            return prefix[static_cast<std::size_t>(i) * stride + j];
        };
        return (P(b1, b2) - P(a1, b2) - P(b1, a2) + P(a1, a2)) / norm;
    }
};

PrefixField build_prefix(const DisorderSample& sample, const ScalingSchedule& schedule,
                         double sigma_r_sq, int n, double t1, double t2) {
    PrefixField f;
    f.m1 = static_cast<int>(std::floor(n * t1));
    f.m2 = static_cast<int>(std::floor(n * t2));
    const std::size_t stride = static_cast<std::size_t>(f.m2) + 1;
    f.prefix.assign(static_cast<std::size_t>(f.m1 + 1) * stride, 0.0);
    for (int i1 = 1; i1 <= f.m1; ++i1) {
        KahanSum row;
        for (int i2 = 1; i2 <= f.m2; ++i2) {
            row.add(sample.zeta(i1, i2));
            f.prefix[static_cast<std::size_t>(i1) * stride + i2] =
                f.prefix[static_cast<std::size_t>(i1 - 1) * stride + i2] + row.value();
        }
    }
    f.norm = std::sqrt(sigma_r_sq) * std::pow(static_cast<double>(n), 1.5) *
             std::pow(sample.beta, schedule.r);
    return f;
}

} // namespace

double discrete_iterated_integral(
    const std::function<double(const std::vector<double>&)>& psi_m,
    const DisorderSample& sample, const ScalingSchedule& schedule, double sigma_r_sq,
    int n, int m, double t1, double t2, int k) {
    if (n % m != 0) throw std::invalid_argument("discrete_iterated_integral: m must divide n");
    if (k < 1 || k > 2)
        throw std::invalid_argument("discrete_iterated_integral: k <= 2 supported");
    PrefixField f = build_prefix(sample, schedule, sigma_r_sq, n, t1, t2);
    const int step = n / m;
    const int c1 = static_cast<int>(std::floor(m * t1));
    const int c2 = static_cast<int>(std::floor(m * t2));
    // increment of Mbar_n on u - 1/n + [0, 1/m)^2 for u = (a/m, b/m):
    // lattice window i1 in [a step, a step + step - 1] = (a step - 1, a step + step - 1]
    auto incr = [&](int a, int b) {
        return f.rect(a * step - 1, a * step + step - 1, b * step - 1, b * step + step - 1);
    };
    KahanSum acc;
    if (k == 1) {
        std::vector<double> pt(2);
        for (int a = 0; a <= c1; ++a)
            for (int b = 0; b <= c2; ++b) {
                pt[0] = static_cast<double>(a) / m;
                pt[1] = static_cast<double>(b) / m;
                double w = psi_m(pt);
                if (w != 0.0) acc.add(w * incr(a, b));
            }
    } else {
        std::vector<double> pt(4);
        for (int a1 = 0; a1 <= c1; ++a1)
            for (int b1 = 0; b1 <= c2; ++b1) {
                double inc1 = incr(a1, b1);
                if (inc1 == 0.0) continue;
                for (int a2 = 0; a2 <= c1; ++a2)
                    for (int b2 = 0; b2 <= c2; ++b2) {
                        pt[0] = static_cast<double>(a1) / m;
                        pt[1] = static_cast<double>(b1) / m;
                        pt[2] = static_cast<double>(a2) / m;
                        pt[3] = static_cast<double>(b2) / m;
                        double w = psi_m(pt);
                        if (w != 0.0) acc.add(w * inc1 * incr(a2, b2));
                    }
            }
    }
    return acc.value();
}

double tilde_z_conversion_factor(const ScalingSchedule& schedule, double sigma_r_sq, int n) {
    double beta_n = schedule.beta_n(n);
    return std::sqrt(sigma_r_sq) * std::pow(static_cast<double>(n), 1.5) *
           std::pow(beta_n, schedule.r) /
           (std::pow(static_cast<double>(n), 2.0 - schedule.alpha) * schedule.slow_constant);
}

double tilde_z1_direct(const RenewalLaw& /*law*/, const MassTable& mass,
                       const DisorderSample& sample, const ScalingSchedule& schedule,
                       int n, double t1, double t2) {
    const int m1 = static_cast<int>(std::floor(n * t1));
    const int m2 = static_cast<int>(std::floor(n * t2));
    if (mass.box.n1 < m1 || mass.box.n2 < m2)
        throw std::invalid_argument("tilde_z1_direct: mass table too small");
    KahanSum acc;
    for (int i1 = 1; i1 < m1; ++i1)
        for (int i2 = 1; i2 < m2; ++i2)
            acc.add(sample.zeta(i1, i2) * mass(i1, i2) * mass(m1 - i1, m2 - i2));
    double scale = std::pow(static_cast<double>(n), 2.0 - schedule.alpha) *
                   schedule.slow_constant;
    return scale * acc.value();
}

} // namespace gps
