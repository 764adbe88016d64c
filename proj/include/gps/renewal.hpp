#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace gps {

struct LatticeBox {
    int n1 = 0;
    int n2 = 0;
    int diameter() const { return n1 + n2; }
};

// Bivariate renewal law: P(tau_1 = (l1,l2)) = K(l1+l2) with
// K(s) = normalizer * L / s^(2+alpha), L a positive constant.
// The normalizer makes sum_{s>=2} (s-1) K(s) = 1.
class RenewalLaw {
public:
    static RenewalLaw make(double alpha, double slow_constant, double tol = 1e-12);

    double alpha() const { return alpha_; }
    double slow_constant() const { return slow_constant_; }
    double normalizer() const { return normalizer_; }
    double tol() const { return tol_; }
    // pieces of the normalization series, kept for reproducibility reports
    long cutoff() const { return cutoff_; }
    double series_part() const { return series_part_; }
    double tail_part() const { return tail_part_; }

    // K(s) for total loop length s >= 2 (0 for s < 2)
    double pmf_total(int s) const;
    // K(l1+l2); rejects l1 <= 0 or l2 <= 0
    double interarrival_pmf(int l1, int l2) const;
    // table of K(s) for s = 0..smax (entries 0 and 1 are zero)
    std::vector<double> pmf_upto(int smax) const;
    // marginal inter-arrival mass of the first coordinate:
    // K1(l) = P(tau_1^{(1)} = l) = sum_{s > l} K(s)
    double marginal_pmf(int l) const;
    // P(|tau_1| > s) = sum_{s' > s} (s'-1) K(s')
    double total_length_tail(int s) const;

private:
    double alpha_ = 0.0;
    double slow_constant_ = 1.0;
    double normalizer_ = 0.0;
    double tol_ = 0.0;
    long cutoff_ = 0;
    double series_part_ = 0.0;
    double tail_part_ = 0.0;
};

// Renewal mass function u(i) = P(i in tau) on a box, u(0,0) = 1.
struct MassTable {
    LatticeBox box;
    std::vector<double> values; // (n1+1) x (n2+1), row-major over i1

    double operator()(int i1, int i2) const {
        return values[static_cast<std::size_t>(i1) * (box.n2 + 1) + i2];
    }
    double& at(int i1, int i2) {
        return values[static_cast<std::size_t>(i1) * (box.n2 + 1) + i2];
    }
};

// Forward DP over anti-diagonals; inner sums are compensated and run in a
// fixed order independent of the box, so enlarging the box reproduces the
// smaller table bit-exactly on the overlap.
MassTable mass_function(const RenewalLaw& law, LatticeBox box);

// O(n^3) variant using running anti-diagonal prefix sums. Values agree with
// mass_function to ~1e-12 relative but are not bit-identical; used for the
// large tables behind phi extraction.
MassTable mass_function_fast(const RenewalLaw& law, LatticeBox box);

// phi_n(s) = n^(2-alpha) L(n) u(floor(n s)); needs table to cover floor(n s)
double phi_estimate(const RenewalLaw& law, const MassTable& table,
                    double s1, double s2, int n);
// convenience: builds the table internally (fast DP)
double phi_estimate(const RenewalLaw& law, double s1, double s2, int n);

// 1-dim renewal mass of the first-coordinate projection, u1(0..n)
std::vector<double> marginal_mass(const RenewalLaw& law, int n);

struct Trajectory {
    std::vector<std::pair<int, int>> points; // strictly increasing, in-box
};

Trajectory sample_renewal(const RenewalLaw& law, LatticeBox box, uint64_t seed);

struct IntersectionStats {
    int reps = 0;
    LatticeBox box;
    // tail of |tau cap tau' cap box|: counts[k] = #replicas with >= k+1 points
    std::vector<long> intersection_tail_counts;
    double geometric_fit_slope = 0.0;
    double geometric_fit_r2 = 0.0;
    // occupation of rho^(a) = tau^(a) cap tau'^(a), per axis
    double occupation_mean[2] = {0.0, 0.0};
    double occupation_se[2] = {0.0, 0.0};
    double expected_occupation[2] = {0.0, 0.0}; // U_n from squared marginals
    // raw moments of occupation / U_n for k = 1..6, per axis
    std::vector<double> occupation_moments[2];
    std::vector<double> occupation_moments_se[2];
};

IntersectionStats intersection_stats(const RenewalLaw& law, LatticeBox box,
                                     int reps, uint64_t seed, int threads = 1);

// CSV export, header i1,i2,u, row-major, 17 significant digits
void write_mass_csv(const MassTable& table, const std::string& path);

} // namespace gps
