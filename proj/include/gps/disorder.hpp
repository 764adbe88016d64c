#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace gps {

// Finite-support disorder marginal plus a symmetric interaction V.
// Every moment quantity downstream has an exact enumeration oracle.
class DisorderSpec {
public:
    enum class Interaction { Product, AppendixC, Table };

    static DisorderSpec product(std::vector<double> atoms, std::vector<double> probs);
    static DisorderSpec table(std::vector<double> atoms, std::vector<double> probs,
                              std::vector<double> symmetric_table);

    int size() const { return static_cast<int>(atoms_.size()); }
    const std::vector<double>& atoms() const { return atoms_; }
    const std::vector<double>& probs() const { return probs_; }
    Interaction interaction() const { return kind_; }
    double appendix_a() const { return ac_a_; }
    double appendix_b() const { return ac_b_; }
    double appendix_u() const { return ac_u_; }
    double appendix_v() const { return ac_v_; }

    // V on support atoms, by index
    double V(int i, int j) const;
    // the pairing f of the eight-atom construction (index-to-index)
    int f_index(int i) const { return f_idx_[static_cast<std::size_t>(i)]; }

    double mean_omega() const;     // E[omega]
    double var_omega() const;      // Var(omega)
    double max_abs_V() const;

    friend DisorderSpec appendix_c_law(double a, double b);

private:
    DisorderSpec() = default;
    void validate() const;

    std::vector<double> atoms_;
    std::vector<double> probs_;
    Interaction kind_ = Interaction::Product;
    std::vector<double> table_;
    std::vector<int> f_idx_;
    double ac_a_ = 0.0, ac_b_ = 0.0, ac_u_ = 0.0, ac_v_ = 0.0;
};

// Uniform law on {±sqrt(a), ±sqrt(b), ±sqrt(2-a), ±sqrt(2-b)} with
// V(x,y) = x f(y) + y f(x); requires 0 < a < b < 1.
DisorderSpec appendix_c_law(double a, double b);

// lambda(beta) = log E[e^{beta omega}] via stabilized log-sum-exp
double log_mgf(const DisorderSpec& spec, double beta);

// Var(E[omega^k | omega_hat]) by exact double enumeration
double conditional_moment_variance(const DisorderSpec& spec, int k);

struct Classification {
    // r >= 1 when determinate; 0 encodes infinity-certificate; -1 undetermined
    int r = -1;
    bool infinity_certificate = false;
    bool undetermined = false;
    double sigma_r_sq = 0.0; // Var(E[omega^r | omega_hat]) / (r!)^2, raw scale
    double sigma_sq = 0.0;   // Var(omega)
    std::vector<double> variance_trace;            // raw Var(E[omega^k|hat]), k=1..r_max
    std::vector<double> variance_trace_normalized; // after scaling omega to unit variance
    std::string to_json() const;
};

Classification classify_r(const DisorderSpec& spec, int r_max = 12, double tol = 1e-10);

enum class PairRelation { Equal, AlignedDistinct, NonAligned };

// Exact E[zeta_i zeta_j]; the aligned-distinct case runs the centered
// binomial series so the sigma_r^2 beta^{2r} scale survives in doubles.
double two_point_correlation(const DisorderSpec& spec, double beta, PairRelation rel);

struct Point2i {
    int x = 0, y = 0;
};

// Exact E[prod_p zeta_{i_p}^{q_p}] over the joint finite support.
// Factorizes over alignment components; components reduced to a single
// centred factor return exactly 0.
double multi_correlation(const DisorderSpec& spec, double beta,
                         const std::vector<Point2i>& points,
                         const std::vector<int>& exponents);

class DisorderSample {
public:
    std::vector<int> hat_idx;  // omega_hat as support indices, length n1
    std::vector<int> bar_idx;  // omega_bar, length n2
    double beta = 0.0;
    double lambda_beta = 0.0;
    std::shared_ptr<const DisorderSpec> spec; // owned; samples outlive caller specs
    std::vector<double> zeta_table; // e^{beta V(x,y) - lambda} - 1 on support pairs
    std::vector<double> weight_table; // e^{beta V(x,y) - lambda}

    double omega(int i1, int i2) const {
        return spec->V(hat_idx[static_cast<std::size_t>(i1) - 1],
                       bar_idx[static_cast<std::size_t>(i2) - 1]);
    }
    double zeta(int i1, int i2) const {
        int m = spec->size();
        return zeta_table[static_cast<std::size_t>(hat_idx[i1 - 1]) * m + bar_idx[i2 - 1]];
    }
    double weight(int i1, int i2) const {
        int m = spec->size();
        return weight_table[static_cast<std::size_t>(hat_idx[i1 - 1]) * m + bar_idx[i2 - 1]];
    }
};

DisorderSample sample_fields(const DisorderSpec& spec, int n1, int n2,
                             double beta, uint64_t seed);

// Spec-file I/O: keys  marginal = [[atom, prob], ...]
//                      interaction = "product" | {"appendix_c":[a,b]} | {"table":[[...]]}
DisorderSpec parse_disorder_spec(const std::string& text);
DisorderSpec load_disorder_spec(const std::string& path);

} // namespace gps
