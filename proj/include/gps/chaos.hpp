#pragma once

#include "gps/disorder.hpp"
#include "gps/field.hpp"
#include "gps/polymer.hpp"
#include "gps/renewal.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace gps {

// piecewise-linear angular profile on [0, pi/2]
struct AngularFn {
    std::vector<double> theta;
    std::vector<double> val;
    double eval(double th) const;
};

// phi(s): either the pure power-law surrogate |s|_1^(alpha-2) or the
// renewal limit in polar form r^(alpha-2) a(theta) with a extracted from
// finite-n mass tables.
class PhiFn {
public:
    enum class Source { PowerLaw, Numeric };

    static PhiFn power_law(double alpha);
    static PhiFn numeric(double alpha, AngularFn a);

    double alpha() const { return alpha_; }
    Source source() const { return source_; }
    double operator()(double s1, double s2) const;

private:
    double alpha_ = 0.0;
    Source source_ = Source::PowerLaw;
    std::shared_ptr<const AngularFn> a_;
};

// Extract a(theta) from mass tables at resolutions m/4, m/2, m with a
// per-bin geometric (Richardson) extrapolation.
PhiFn make_numeric_phi(const RenewalLaw& law, int m, int theta_bins = 129);

// Continuum homogeneous series: Z_{t,h} = sum_k h^k F_{k+1}(t) where
// F_1 = phi and F_{j+1} = increasing convolution of F_j with phi. Each
// F_j is homogeneous of degree j*alpha - 2 and carried as an angular
// profile.
class HomogSeries {
public:
    HomogSeries(PhiFn phi, int theta_nodes = 193, int panels = 13);

    // value of F_{j}(s), j >= 1 (F_1 = phi)
    double level(int j, double s1, double s2) const;
    // Z_{s, h_hat} truncated at k_max terms with Gamma-decay tail bound
    double value(double s1, double s2, double h_hat, int k_max, double tol,
                 double* tail_bound = nullptr) const;
    // k-th series term h^k F_{k+1}(t)
    double term(int k, double s1, double s2, double h_hat) const;
    // majorant of |term_k| from the power-law envelope
    double term_majorant(int k, double s1, double s2, double h_hat) const;
    double alpha() const { return alpha_; }
    // build angular profiles up to level j (needed before sharing across threads)
    void prewarm(int j) const;

private:
    void ensure_levels(int j) const;

    PhiFn phi_;
    double alpha_;
    int theta_nodes_;
    int panels_;
    double envelope_const_; // C_a with phi <= C_a |s|_1^(alpha-2)
    mutable std::vector<AngularFn> levels_; // levels_[j-1] = angular profile of F_j
};

double continuum_homogeneous(double t1, double t2, double h_hat, double alpha,
                             const PhiFn& phi, int k_max, double tol,
                             double* tail_bound = nullptr);

enum class KernelVariant { Q, Cond, Free, HDressed };

// psi_{t,k} and variants; evaluated on ordered k-tuples.
struct ChaosKernel {
    PhiFn phi;
    double t1 = 1.0, t2 = 1.0;
    int k = 1;
    KernelVariant variant = KernelVariant::Q;
    double h_hat = 0.0;                      // for HDressed
    std::shared_ptr<HomogSeries> homog;      // for HDressed
    int h_kmax = 16;

    // points must satisfy 0 < s_1 < ... < s_k < t; returns 0 otherwise
    double value(const std::vector<double>& s) const; // s = (x1,y1,x2,y2,...)
    double value1(double x, double y) const;
    double value2(double x1, double y1, double x2, double y2) const;
    double gap_factor(double g1, double g2) const;
};

struct QuadSpec {
    int panels = 6;       // graded panels per half-interval
    double conv_tol = 0.01;
    int max_levels = 5;
};

struct NuIntegral {
    double value = 0.0;
    double abserr = 0.0;
    bool diverged = false;
    std::vector<double> refinement; // value at each refinement level
};

// <g,h>_nu = int g(u) [ int h(x,u2) dx + int h(u1,y) dy ] du over [0,t]
NuIntegral nu_pair_integral(const std::function<double(double, double)>& g,
                            const std::function<double(double, double)>& h,
                            double t1, double t2, const QuadSpec& spec);

// permutations of {1..k} avoiding the pattern 321
struct PairingSet {
    int k = 0;
    std::vector<std::vector<int>> permutations;
};
PairingSet avoiding_permutations(int k);

struct NuNorm {
    int k = 0;
    double value = 0.0;
    double abserr = 0.0;
    std::string method;
    bool diverged = false;
    bool budget_flag = false;
    double gamma_bound = 0.0; // filled by callers that track the fitted constant
    std::string to_json() const;
};

// ||psi_{t,k}||^2_{nu_k} by tensor graded quadrature (k <= 2)
NuNorm psi_norm_closed_grid(const ChaosKernel& kernel, const QuadSpec& spec, int threads = 1);

// ||psi_{t,k}||^2_{nu_k} by importance sampling (k <= 4, alpha > 2/3 for a
// finite-variance proposal)
NuNorm psi_norm_mc(const ChaosKernel& kernel, long samples, uint64_t seed,
                   int threads = 1);

struct ChaosVarianceSeries {
    std::vector<double> partial_sums; // S_1..S_K
    std::vector<double> terms;
    double tail_bound = 0.0;
    double fitted_constant = 0.0;
};

ChaosVarianceSeries chaos_variance_series(double alpha, double t1, double t2, int r,
                                          double sigma_r_sq, double beta_hat, int k_max,
                                          long mc_budget, uint64_t seed, int threads = 1);

// k-iterated discrete integral of a piecewise-constant kernel against the
// rescaled partial-sum field of `sample` (resolution m must divide n).
double discrete_iterated_integral(
    const std::function<double(const std::vector<double>&)>& psi_m,
    const DisorderSample& sample, const ScalingSchedule& schedule, double sigma_r_sq,
    int n, int m, double t1, double t2, int k);

// tilde Z_{n,k} = (sigma_r n^{3/2} beta_n^r / (n^{2-alpha} L))^k (psi_n .^k Mbar_n)
double tilde_z_conversion_factor(const ScalingSchedule& schedule, double sigma_r_sq, int n);

// direct evaluation tilde Z_{n,1} = n^{2-alpha} L sum_i zeta_i u(i) u(nt - i)
double tilde_z1_direct(const RenewalLaw& law, const MassTable& mass,
                       const DisorderSample& sample, const ScalingSchedule& schedule,
                       int n, double t1, double t2);

} // namespace gps
