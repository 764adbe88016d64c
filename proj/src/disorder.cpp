#include "gps/disorder.hpp"

#include "gps/rng.hpp"
#include "gps/stats.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace gps {

void DisorderSpec::validate() const {
    if (atoms_.empty() || atoms_.size() != probs_.size())
        throw std::invalid_argument("DisorderSpec: atoms/probs size mismatch");
    KahanSum s;
    for (double p : probs_) {
        if (!(p > 0.0)) throw std::invalid_argument("DisorderSpec: probabilities must be positive");
        s.add(p);
    }
    if (std::abs(s.value() - 1.0) > 1e-14)
        throw std::invalid_argument("DisorderSpec: probabilities must sum to 1 within 1e-14");
    if (kind_ == Interaction::Table) {
        const int m = size();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j)
                if (table_[static_cast<std::size_t>(i) * m + j] !=
                    table_[static_cast<std::size_t>(j) * m + i])
                    throw std::invalid_argument("DisorderSpec: interaction table must be symmetric");
    }
    // V must not be constant on the support
    double v0 = V(0, 0);
    bool constant = true;
    for (int i = 0; i < size() && constant; ++i)
        for (int j = 0; j < size() && constant; ++j)
            if (V(i, j) != v0) constant = false;
    if (constant) throw std::invalid_argument("DisorderSpec: interaction is constant on the support");
}

DisorderSpec DisorderSpec::product(std::vector<double> atoms, std::vector<double> probs) {
    DisorderSpec s;
    s.atoms_ = std::move(atoms);
    s.probs_ = std::move(probs);
    s.kind_ = Interaction::Product;
    s.validate();
    return s;
}

DisorderSpec DisorderSpec::table(std::vector<double> atoms, std::vector<double> probs,
                                 std::vector<double> symmetric_table) {
    DisorderSpec s;
    s.atoms_ = std::move(atoms);
    s.probs_ = std::move(probs);
    s.kind_ = Interaction::Table;
    s.table_ = std::move(symmetric_table);
    if (s.table_.size() != s.atoms_.size() * s.atoms_.size())
        throw std::invalid_argument("DisorderSpec: table must be m x m");
    s.validate();
    return s;
}

double DisorderSpec::V(int i, int j) const {
    switch (kind_) {
        case Interaction::Product:
            return atoms_[static_cast<std::size_t>(i)] * atoms_[static_cast<std::size_t>(j)];
        case Interaction::AppendixC: {
            double x = atoms_[static_cast<std::size_t>(i)];
            double y = atoms_[static_cast<std::size_t>(j)];
            double fx = atoms_[static_cast<std::size_t>(f_idx_[i])];
            double fy = atoms_[static_cast<std::size_t>(f_idx_[j])];
            return x * fy + y * fx;
        }
        case Interaction::Table:
            return table_[static_cast<std::size_t>(i) * atoms_.size() + j];
    }
    return 0.0;
}

double DisorderSpec::mean_omega() const {
    KahanSum s;
    for (int i = 0; i < size(); ++i)
        for (int j = 0; j < size(); ++j) s.add(probs_[i] * probs_[j] * V(i, j));
    return s.value();
}

double DisorderSpec::var_omega() const {
    double m = mean_omega();
    KahanSum s;
    for (int i = 0; i < size(); ++i)
        for (int j = 0; j < size(); ++j) {
            double d = V(i, j) - m;
            s.add(probs_[i] * probs_[j] * d * d);
        }
    return s.value();
}

double DisorderSpec::max_abs_V() const {
    double m = 0.0;
    for (int i = 0; i < size(); ++i)
        for (int j = 0; j < size(); ++j) m = std::max(m, std::abs(V(i, j)));
    return m;
}

DisorderSpec appendix_c_law(double a, double b) {
    if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("appendix_c_law: need 0 < a < 1");
    if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("appendix_c_law: need 0 < b < 1");
    if (!(a < b)) throw std::invalid_argument("appendix_c_law: need a < b");
    DisorderSpec s;
    double ra = std::sqrt(a), rb = std::sqrt(b);
    double ca = std::sqrt(2.0 - a), cb = std::sqrt(2.0 - b);
    // order: +ra, -ra, +rb, -rb, +ca, -ca, +cb, -cb
    s.atoms_ = {ra, -ra, rb, -rb, ca, -ca, cb, -cb};
    s.probs_.assign(8, 0.125);
    // f(+-sqrt(a)) = +-sqrt(2-a), f(+-sqrt(2-a)) = -+sqrt(a); same for b
    s.f_idx_ = {4, 5, 6, 7, 1, 0, 3, 2};
    s.kind_ = DisorderSpec::Interaction::AppendixC;
    s.ac_a_ = a;
    s.ac_b_ = b;
    s.ac_u_ = a * (2.0 - a);
    s.ac_v_ = b * (2.0 - b);
    s.validate();
    return s;
}

double log_mgf(const DisorderSpec& spec, double beta) {
    const int m = spec.size();
    double mx = -1e300;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) mx = std::max(mx, beta * spec.V(i, j));
    KahanSum s;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            s.add(spec.probs()[i] * spec.probs()[j] * std::exp(beta * spec.V(i, j) - mx));
    return mx + std::log(s.value());
}

double conditional_moment_variance(const DisorderSpec& spec, int k) {
    if (k < 1) throw std::invalid_argument("conditional_moment_variance: k >= 1");
    const int m = spec.size();
    std::vector<double> inner(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        KahanSum s;
        for (int j = 0; j < m; ++j)
            s.add(spec.probs()[j] * std::pow(spec.V(i, j), k));
        inner[static_cast<std::size_t>(i)] = s.value();
    }
    KahanSum ms;
    for (int i = 0; i < m; ++i) ms.add(spec.probs()[i] * inner[i]);
    double mean = ms.value();
    KahanSum vs;
    for (int i = 0; i < m; ++i) {
        double d = inner[i] - mean;
        vs.add(spec.probs()[i] * d * d);
    }
    return vs.value();
}

namespace {

double factorial(int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

} // namespace

Classification classify_r(const DisorderSpec& spec, int r_max, double tol) {
    if (r_max < 1) throw std::invalid_argument("classify_r: r_max >= 1");
    Classification c;
    c.sigma_sq = spec.var_omega();
    if (!(c.sigma_sq > 0.0))
        throw std::invalid_argument("classify_r: degenerate (constant) interaction");

    int found = 0;
    for (int k = 1; k <= r_max; ++k) {
        double raw = conditional_moment_variance(spec, k);
        double norm = raw / std::pow(c.sigma_sq, k);
        c.variance_trace.push_back(raw);
        c.variance_trace_normalized.push_back(norm);
        if (found == 0 && norm > tol) found = k;
    }
    if (found > 0) {
        c.r = found;
        double f = factorial(found);
        c.sigma_r_sq = c.variance_trace[static_cast<std::size_t>(found) - 1] / (f * f);
        return c;
    }
    // infinity certificate: E[e^{beta omega} | hat] constant over atoms
    bool certified = true;
    for (double beta : {0.1, 0.2, 0.5}) {
        std::vector<double> g(static_cast<std::size_t>(spec.size()));
        for (int i = 0; i < spec.size(); ++i) {
            KahanSum s;
            for (int j = 0; j < spec.size(); ++j)
                s.add(spec.probs()[j] * std::exp(beta * spec.V(i, j)));
            g[static_cast<std::size_t>(i)] = s.value();
        }
        double gmin = *std::min_element(g.begin(), g.end());
        double gmax = *std::max_element(g.begin(), g.end());
        if ((gmax - gmin) / gmax > 1e-10) {
            certified = false;
            break;
        }
    }
    if (certified) {
        c.r = 0;
        c.infinity_certificate = true;
    } else {
        c.r = -1;
        c.undetermined = true;
    }
    return c;
}

std::string Classification::to_json() const {
    nlohmann::json j;
    if (infinity_certificate)
        j["r"] = "infinity-certificate";
    else if (undetermined)
        j["r"] = "undetermined";
    else
        j["r"] = r;
    j["sigma_r_sq"] = sigma_r_sq;
    j["sigma_sq"] = sigma_sq;
    j["variance_trace"] = variance_trace;
    j["variance_trace_normalized"] = variance_trace_normalized;
    j["certificate"] = infinity_certificate;
    return j.dump(2);
}

double two_point_correlation(const DisorderSpec& spec, double beta, PairRelation rel) {
    if (beta < 0.0) throw std::invalid_argument("two_point_correlation: beta >= 0");
    switch (rel) {
        case PairRelation::NonAligned:
            return 0.0;
        case PairRelation::Equal:
            return std::expm1(log_mgf(spec, 2.0 * beta) - 2.0 * log_mgf(spec, beta));
        case PairRelation::AlignedDistinct:
            break;
    }
    // centred binomial series: e^{2 lambda} E[zz] =
    //   sum_k beta^k/k! sum_j C(k,j) Cov(m_j(Y), m_{k-j}(Y))
    // with m_j(y) = E[V(X,y)^j]; the covariance form avoids cancellation.
    const int m = spec.size();
    const int KMAX = 80;
    // cond[j][y] = m_j(y); mbar[j] = E[V^j]
    std::vector<std::vector<double>> cond(KMAX + 1, std::vector<double>(static_cast<std::size_t>(m)));
    std::vector<double> mbar(KMAX + 1);
    for (int j = 0; j <= KMAX; ++j) {
        KahanSum mb;
        for (int y = 0; y < m; ++y) {
            KahanSum s;
            for (int x = 0; x < m; ++x)
                s.add(spec.probs()[x] * std::pow(spec.V(x, y), j));
            cond[j][static_cast<std::size_t>(y)] = s.value();
            mb.add(spec.probs()[y] * s.value());
        }
        mbar[j] = mb.value();
    }
    auto cov_jk = [&](int j, int kj) {
        KahanSum s;
        for (int y = 0; y < m; ++y)
            s.add(spec.probs()[y] * (cond[j][static_cast<std::size_t>(y)] - mbar[j]) *
                  (cond[kj][static_cast<std::size_t>(y)] - mbar[kj]));
        return s.value();
    };

    const double vmax = spec.max_abs_V();
    KahanSum total;
    double leading = 0.0;
    double beta_pow = beta; // beta^k
    double kfact = 1.0;
    for (int k = 2; k <= KMAX; ++k) {
        beta_pow = std::pow(beta, k);
        kfact *= k;
        // binomial coefficients C(k, j)
        double binom = 1.0;
        KahanSum inner;
        for (int j = 0; j <= k; ++j) {
            if (j > 0) binom = binom * (k - j + 1) / j;
            inner.add(binom * cov_jk(j, k - j));
        }
        double term = beta_pow / kfact * inner.value();
        total.add(term);
        if (leading == 0.0 && std::abs(term) > 0.0) leading = std::abs(term);
        // geometric remainder bound in beta * max|V|; the terms are cheap, so
        // run well past the spec floor of 1e-3 of the leading term
        if (leading > 0.0) {
            double a = 2.0 * beta * vmax;
            double rem = std::pow(a, k + 1) / (kfact * (k + 1)) * std::exp(a) * 2.0;
            if (k >= 6 && rem < 1e-14 * std::max(std::abs(total.value()), leading)) break;
        }
    }
    return std::exp(-2.0 * log_mgf(spec, beta)) * total.value();
}

namespace {

// connected components of the alignment graph
std::vector<std::vector<int>> alignment_components(const std::vector<Point2i>& pts) {
    const int n = static_cast<int>(pts.size());
    std::vector<int> parent(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) parent[static_cast<std::size_t>(i)] = i;
    std::function<int(int)> find = [&](int a) {
        while (parent[static_cast<std::size_t>(a)] != a) {
            parent[static_cast<std::size_t>(a)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
            a = parent[static_cast<std::size_t>(a)];
        }
        return a;
    };
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (pts[i].x == pts[j].x || pts[i].y == pts[j].y) {
                int a = find(i), b = find(j);
                if (a != b) parent[static_cast<std::size_t>(a)] = b;
            }
    std::map<int, std::vector<int>> comp;
    for (int i = 0; i < n; ++i) comp[find(i)].push_back(i);
    std::vector<std::vector<int>> out;
    for (auto& kv : comp) out.push_back(kv.second);
    return out;
}

} // namespace

double multi_correlation(const DisorderSpec& spec, double beta,
                         const std::vector<Point2i>& points,
                         const std::vector<int>& exponents) {
    if (points.size() != exponents.size())
        throw std::invalid_argument("multi_correlation: points/exponents size mismatch");
    if (points.size() > 6) throw std::invalid_argument("multi_correlation: at most 6 points");
    const double lambda = log_mgf(spec, beta);
    const int m = spec.size();

    auto comps = alignment_components(points);
    double product = 1.0;
    for (const auto& comp : comps) {
        if (comp.size() == 1 && exponents[static_cast<std::size_t>(comp[0])] == 1)
            return 0.0; // E[zeta] = 0 exactly
        // distinct rows and columns of this component
        std::vector<int> rows, cols;
        for (int idx : comp) {
            if (std::find(rows.begin(), rows.end(), points[static_cast<std::size_t>(idx)].x) == rows.end())
                rows.push_back(points[static_cast<std::size_t>(idx)].x);
            if (std::find(cols.begin(), cols.end(), points[static_cast<std::size_t>(idx)].y) == cols.end())
                cols.push_back(points[static_cast<std::size_t>(idx)].y);
        }
        const int nr = static_cast<int>(rows.size());
        const int nc = static_cast<int>(cols.size());
        if (nr + nc > 8)
            throw std::invalid_argument("multi_correlation: more than 8 distinct rows+columns");
        // enumerate support^(nr+nc)
        std::vector<int> assign(static_cast<std::size_t>(nr + nc), 0);
        KahanSum acc;
        for (;;) {
            double p = 1.0;
            for (int v = 0; v < nr + nc; ++v) p *= spec.probs()[assign[static_cast<std::size_t>(v)]];
            double val = 1.0;
            for (int idx : comp) {
                const auto& pt = points[static_cast<std::size_t>(idx)];
                int ri = static_cast<int>(std::find(rows.begin(), rows.end(), pt.x) - rows.begin());
                int ci = static_cast<int>(std::find(cols.begin(), cols.end(), pt.y) - cols.begin());
                double om = spec.V(assign[static_cast<std::size_t>(ri)],
                                   assign[static_cast<std::size_t>(nr + ci)]);
                double z = std::expm1(beta * om - lambda);
                int q = exponents[static_cast<std::size_t>(idx)];
                for (int e = 0; e < q; ++e) val *= z;
            }
            acc.add(p * val);
            int pos = 0;
            while (pos < nr + nc) {
                if (++assign[static_cast<std::size_t>(pos)] < m) break;
                assign[static_cast<std::size_t>(pos)] = 0;
                ++pos;
            }
            if (pos == nr + nc) break;
        }
        product *= acc.value();
    }
    return product;
}

DisorderSample sample_fields(const DisorderSpec& spec, int n1, int n2,
                             double beta, uint64_t seed) {
    if (beta < 0.0) throw std::invalid_argument("sample_fields: beta >= 0");
    DisorderSample out;
    out.spec = std::make_shared<DisorderSpec>(spec);
    out.beta = beta;
    out.lambda_beta = log_mgf(spec, beta);
    const int m = spec.size();
    // cumulative marginal for inverse-CDF draws
    std::vector<double> cdf(static_cast<std::size_t>(m));
    {
        KahanSum s;
        for (int i = 0; i < m; ++i) {
            s.add(spec.probs()[i]);
            cdf[static_cast<std::size_t>(i)] = s.value();
        }
        cdf[static_cast<std::size_t>(m) - 1] = 1.0;
    }
    auto draw = [&](Rng& rng) {
        double u = rng.uniform();
        int lo = 0;
        while (cdf[static_cast<std::size_t>(lo)] <= u && lo + 1 < m) ++lo;
        return lo;
    };
    Rng rh = make_stream(seed, "disorder/hat");
    Rng rb = make_stream(seed, "disorder/bar");
    out.hat_idx.resize(static_cast<std::size_t>(n1));
    out.bar_idx.resize(static_cast<std::size_t>(n2));
    for (int i = 0; i < n1; ++i) out.hat_idx[static_cast<std::size_t>(i)] = draw(rh);
    for (int j = 0; j < n2; ++j) out.bar_idx[static_cast<std::size_t>(j)] = draw(rb);
    out.zeta_table.resize(static_cast<std::size_t>(m) * m);
    out.weight_table.resize(static_cast<std::size_t>(m) * m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            double e = beta * spec.V(i, j) - out.lambda_beta;
            out.weight_table[static_cast<std::size_t>(i) * m + j] = std::exp(e);
            out.zeta_table[static_cast<std::size_t>(i) * m + j] = std::expm1(e);
        }
    return out;
}

namespace {

std::string strip(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

} // namespace

DisorderSpec parse_disorder_spec(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    nlohmann::json marginal, interaction;
    while (std::getline(in, line)) {
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = strip(line);
        if (line.empty() || line.front() == '[') continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("spec file: expected key = value, got: " + line);
        std::string key = strip(line.substr(0, eq));
        std::string val = strip(line.substr(eq + 1));
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(val);
        } catch (const std::exception&) {
            throw std::invalid_argument("spec file: malformed value for key " + key);
        }
        if (key == "marginal")
            marginal = j;
        else if (key == "interaction")
            interaction = j;
        else
            throw std::invalid_argument("spec file: unknown key " + key);
    }
    if (!marginal.is_array()) throw std::invalid_argument("spec file: missing marginal");
    std::vector<double> atoms, probs;
    for (const auto& pair : marginal) {
        if (!pair.is_array() || pair.size() != 2)
            throw std::invalid_argument("spec file: marginal entries must be [atom, prob]");
        atoms.push_back(pair[0].get<double>());
        probs.push_back(pair[1].get<double>());
    }
    if (interaction.is_string() && interaction.get<std::string>() == "product")
        return DisorderSpec::product(atoms, probs);
    if (interaction.is_object() && interaction.contains("appendix_c")) {
        auto ab = interaction["appendix_c"];
        return appendix_c_law(ab[0].get<double>(), ab[1].get<double>());
    }
    if (interaction.is_object() && interaction.contains("table")) {
        std::vector<double> flat;
        for (const auto& row : interaction["table"])
            for (const auto& v : row) flat.push_back(v.get<double>());
        return DisorderSpec::table(atoms, probs, flat);
    }
    throw std::invalid_argument("spec file: missing or unknown interaction");
}

DisorderSpec load_disorder_spec(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open disorder spec: " + path);
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_disorder_spec(buf.str());
}

} // namespace gps
