#pragma once

#include "gps/disorder.hpp"
#include "gps/renewal.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gps {

enum class Variant { Constrained, Conditioned, Free };

std::string variant_name(Variant v);

struct PartitionValue {
    double value = 0.0;     // linear-domain value (exp(log_value) when log-domain)
    double log_value = 0.0;
    bool log_domain = false;
    Variant variant = Variant::Constrained;
    double rescale = 1.0;   // n^{2-alpha} L when applied, 1 otherwise
    LatticeBox box;
    double beta = 0.0;
    double h = 0.0;
};

// beta_n = beta_hat (n^{1/2-alpha} L)^{1/r},  h_n = h_hat L n^{-alpha}
struct ScalingSchedule {
    double alpha = 0.0;
    double slow_constant = 1.0;
    int r = 1;
    double beta_hat = 0.0;
    double h_hat = 0.0;

    double beta_n(int n) const;
    double h_n(int n) const;
    // beta_n decreases with n only for alpha > 1/2
    bool vanishing_beta() const { return alpha > 0.5; }
};

PartitionValue homogeneous_partition(const RenewalLaw& law, LatticeBox box, double h,
                                     Variant variant,
                                     const MassTable* mass = nullptr);

PartitionValue quenched_partition(const RenewalLaw& law, const DisorderSample& sample,
                                  LatticeBox box, double beta, double h, Variant variant,
                                  bool log_domain = false,
                                  const MassTable* mass = nullptr);

struct RescaledResult {
    double value = 0.0;     // n^{2-alpha} L(n) Z^q_{floor(n t), h_n}
    double beta_n = 0.0;
    double h_n = 0.0;
    bool degenerate_regime = false; // alpha <= 1/2
};

RescaledResult rescaled_partition(const RenewalLaw& law, const DisorderSpec& spec,
                                  const ScalingSchedule& schedule, int n,
                                  double t1, double t2, uint64_t seed,
                                  const MassTable* mass = nullptr);

// Exact E[(Z^q)^2] on a small box by path-pair enumeration with the disorder
// expectation evaluated by column-factorized support enumeration.
double second_moment_exact(const RenewalLaw& law, const DisorderSpec& spec,
                           LatticeBox box, double beta, double h);

// Exact replica form valid for infinity-certified laws:
// E^{x2}[ exp((lambda(2b)-2 lambda(b)) |tau cap tau' cap box|) 1_{endpoints} ]
double second_moment_replica(const RenewalLaw& law, const DisorderSpec& spec,
                             LatticeBox box, double beta);

struct NBetaResult {
    bool exceeds = false;
    int n_beta = 0;
    std::vector<int> grid;
    std::vector<double> second_moment;
    std::vector<double> second_moment_se;
};

NBetaResult n_beta_estimate(const RenewalLaw& law, const DisorderSpec& spec, double beta,
                            double C, int n_max, int reps, uint64_t seed, int threads = 1);

struct FreeEnergyPoint {
    int n = 0;
    double value = 0.0;
    double se = 0.0;
};

std::vector<FreeEnergyPoint> free_energy_estimate(const RenewalLaw& law,
                                                  const DisorderSpec& spec, double beta,
                                                  double h, const std::vector<int>& n_list,
                                                  int reps, uint64_t seed, int threads = 1);

} // namespace gps
