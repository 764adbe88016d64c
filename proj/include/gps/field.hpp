#pragma once

#include "gps/disorder.hpp"
#include "gps/polymer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gps {

// K(u,v) = (u1^v1)(u2^v2)(u1 v v1 + u2 v v2)
double cov_K(double u1, double u2, double v1, double v2);
// algebraically equal product form u1 v1 (u2^v2) + u2 v2 (u1^v1)
double cov_K_product_form(double u1, double u2, double v1, double v2);

struct FieldGrid {
    enum class Kind { Discrete, Limit };
    Kind kind = Kind::Limit;
    std::vector<double> xs; // sorted axis-1 coordinates
    std::vector<double> ys; // sorted axis-2 coordinates
    std::vector<double> values; // node values, row-major over xs
    // discrete metadata
    int n = 0;
    double beta_n = 0.0;
    double sigma_r = 0.0;

    double at(std::size_t ix, std::size_t iy) const { return values[ix * ys.size() + iy]; }
    double& at(std::size_t ix, std::size_t iy) { return values[ix * ys.size() + iy]; }
};

// Mbar_n read off 2-d prefix sums of zeta over floor(n t); grid nodes are the
// multiples of t/resolution. sigma_r_sq is the law's sigma_r^2.
FieldGrid partial_sum_field(const DisorderSample& sample, const ScalingSchedule& schedule,
                            int n, double t1, double t2, int grid_resolution,
                            double sigma_r_sq);

// Exact sampler of the limit field via M(x,y) = y B1(x) + x B2(y).
FieldGrid sample_limit_field(const std::vector<double>& xs, const std::vector<double>& ys,
                             uint64_t seed);

// Dense Cholesky fallback on the same grid (small grids only).
FieldGrid sample_limit_field_cholesky(const std::vector<double>& xs,
                                      const std::vector<double>& ys, uint64_t seed);

// four-corner inclusion-exclusion increment over [x0,x1) x [y0,y1)
double rectangle_increment(const FieldGrid& grid, double x0, double x1, double y0, double y1);

// E[N(0,K_ss)^ell]
double gaussian_moment(int ell, double K_ss);

// nu_M(A x B) for axis-aligned rectangles, closed form
double nu_measure_rectangles(double a1, double b1, double a2, double b2,
                             double c1, double d1, double c2, double d2);

// Deterministic lattice enumeration of E[Mbar_n(t)^2] from exact pair
// correlations (diagnostic companion to the Monte Carlo estimates).
double discrete_second_moment_exact(const DisorderSpec& spec, const ScalingSchedule& schedule,
                                    int n, double sigma_r_sq);

struct FieldMomentEstimate {
    int ell = 0;
    double value = 0.0;
    double se = 0.0; // jackknife
};

// Monte Carlo moments of Mbar_n(t) over replicas (count-vector evaluation).
std::vector<FieldMomentEstimate> discrete_field_moments(const DisorderSpec& spec,
                                                        const ScalingSchedule& schedule,
                                                        int n, double t1, double t2,
                                                        double sigma_r_sq,
                                                        const std::vector<int>& ells,
                                                        int reps, uint64_t seed,
                                                        int threads = 1);

// CSV dump s1,s2,value; binary dump with a 32-byte header.
void write_field_csv(const FieldGrid& grid, const std::string& path, bool timestamp = true);
void write_field_binary(const FieldGrid& grid, const std::string& path);
FieldGrid read_field_binary(const std::string& path);

} // namespace gps
