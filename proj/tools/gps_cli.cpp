// Experiment runner for the disordered generalized Poland-Scheraga lab.
#include "gps/chaos.hpp"
#include "gps/config.hpp"
#include "gps/disorder.hpp"
#include "gps/field.hpp"
#include "gps/polymer.hpp"
#include "gps/renewal.hpp"
#include "gps/rng.hpp"
#include "gps/stats.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

namespace fs = std::filesystem;
using namespace gps;

namespace {

struct Global {
    uint64_t seed = 1;
    int threads = 1;
    std::string out = ".";
    std::string config_path;
};

Config load_config_or_empty(const Global& g) {
    if (g.config_path.empty()) return Config::parse("");
    return Config::load(g.config_path);
}

DisorderSpec spec_from_config(const Config& cfg) {
    std::string inline_spec = cfg.get_string("disorder.spec", "");
    if (!inline_spec.empty()) return load_disorder_spec(inline_spec);
    std::string marg = cfg.get_string("disorder.marginal", "");
    if (!marg.empty()) {
        std::string text = "marginal = " + cfg.at("disorder.marginal").dump() +
                           "\ninteraction = " + cfg.at("disorder.interaction").dump() + "\n";
        return parse_disorder_spec(text);
    }
    // default: the r = 1 biased two-point law
    return DisorderSpec::product({-1.0, 1.0}, {0.75, 0.25});
}

RenewalLaw law_from_config(const Config& cfg) {
    double alpha = cfg.get_double("model.alpha", 0.75);
    double L = cfg.get_double("model.slow_constant", 1.0);
    return RenewalLaw::make(alpha, L, 1e-12);
}

ScalingSchedule schedule_from_config(const Config& cfg, const DisorderSpec& spec,
                                     Classification* cls_out = nullptr) {
    ScalingSchedule s;
    s.alpha = cfg.get_double("model.alpha", 0.75);
    s.slow_constant = cfg.get_double("model.slow_constant", 1.0);
    s.beta_hat = cfg.get_double("schedule.beta_hat", 1.0);
    s.h_hat = cfg.get_double("schedule.h_hat", 0.0);
    std::string r = cfg.get_string("schedule.r", "auto");
    Classification c = classify_r(spec);
    if (cls_out) *cls_out = c;
    if (r == "auto") {
        if (c.r >= 1)
            s.r = c.r;
        else
            s.r = 1; // infinity-certified laws have no finite r; keep r = 1 scaling
    } else {
        s.r = static_cast<int>(std::stol(r));
    }
    return s;
}

std::string out_path(const Global& g, const std::string& name) {
    fs::create_directories(g.out);
    return (fs::path(g.out) / name).string();
}

void write_csv_line(std::ofstream& f, const char* fmt, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, fmt);
    std::vsnprintf(buf, sizeof(buf), fmt, ap);
    va_end(ap);
    f << buf;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"numerical lab for the disordered generalized Poland-Scheraga model"};
    app.require_subcommand(1);

    Global g;
    app.add_option("--seed", g.seed, "root seed");
    app.add_option("--threads", g.threads, "worker threads");
    app.add_option("--out", g.out, "output directory");
    app.add_option("--config", g.config_path, "experiment config file");

    // ---- classify ----
    auto* cmd_classify = app.add_subcommand("classify", "classify a disorder spec into P_r");
    std::string classify_path;
    cmd_classify->add_option("spec", classify_path, "disorder spec file")->required();

    // ---- renewal-mass ----
    auto* cmd_mass = app.add_subcommand("renewal-mass", "renewal mass function table as CSV");
    int mass_n1 = 32, mass_n2 = 32;
    double mass_alpha = 0.75, mass_L = 1.0;
    cmd_mass->add_option("--n1", mass_n1);
    cmd_mass->add_option("--n2", mass_n2);
    cmd_mass->add_option("--alpha", mass_alpha);
    cmd_mass->add_option("--slow-constant", mass_L);

    // ---- partition ----
    auto* cmd_partition = app.add_subcommand("partition", "Monte Carlo partition functions");
    bool log_domain = false;
    cmd_partition->add_flag("--log-domain", log_domain, "run the DP in log space");

    // ---- second-moment ----
    auto* cmd_second = app.add_subcommand("second-moment", "exact replica second moment");

    // ---- field-dump ----
    auto* cmd_field = app.add_subcommand("field-dump", "dump discrete and limit field grids");

    // ---- chaos-norm ----
    auto* cmd_norm = app.add_subcommand("chaos-norm", "psi kernel nu-norms");

    // ---- scaling-experiment ----
    auto* cmd_scaling = app.add_subcommand("scaling-experiment",
                                           "rescaled partition vs chaos prediction");

    // ---- intersections ----
    auto* cmd_inter = app.add_subcommand("intersections", "two-replica intersection statistics");

    // ---- free-energy ----
    auto* cmd_fe = app.add_subcommand("free-energy", "free-energy estimates");

    // ---- n-beta ----
    auto* cmd_nbeta = app.add_subcommand("n-beta", "second-moment horizon estimate");

    CLI11_PARSE(app, argc, argv);

    auto t_start = std::chrono::steady_clock::now();
    auto elapsed = [&]() {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
            .count();
    };

    try {
        if (cmd_classify->parsed()) {
            DisorderSpec spec = load_disorder_spec(classify_path);
            Classification c = classify_r(spec);
            std::cout << c.to_json() << "\n";
            return c.undetermined ? 2 : 0;
        }

        Config cfg = load_config_or_empty(g);
        RunManifest manifest(argv[1] ? argv[1] : "?", cfg.resolved(), g.seed);

        if (cmd_mass->parsed()) {
            RenewalLaw law = RenewalLaw::make(mass_alpha, mass_L, 1e-12);
            MassTable t = mass_function(law, LatticeBox{mass_n1, mass_n2});
            std::string path = out_path(g, "mass.csv");
            write_mass_csv(t, path);
            manifest.record_output(path);
        } else if (cmd_partition->parsed()) {
            RenewalLaw law = law_from_config(cfg);
            DisorderSpec spec = spec_from_config(cfg);
            double beta = cfg.get_double("run.beta", 0.5);
            double h = cfg.get_double("run.h", 0.0);
            long reps = cfg.get_long("run.reps", 100);
            std::vector<long> ns = cfg.get_long_list("run.n_list");
            if (ns.empty()) ns = {8};
            std::string variant_s = cfg.get_string("run.variant", "q");
            Variant variant = variant_s == "free"   ? Variant::Free
                              : variant_s == "cond" ? Variant::Conditioned
                                                    : Variant::Constrained;
            std::string path = out_path(g, "partition.csv");
            std::ofstream f(path);
            f << "n,variant,beta,h,value,se,reps,seed\n";
            for (long n : ns) {
                LatticeBox box{static_cast<int>(n), static_cast<int>(n)};
                MassTable mass = mass_function(law, box);
                std::vector<double> vals(static_cast<std::size_t>(reps));
                int T = std::max(1, g.threads);
                std::vector<std::thread> pool;
                for (int t0 = 0; t0 < T; ++t0)
                    pool.emplace_back([&, t0]() {
                        for (long i = t0; i < reps; i += T) {
                            DisorderSample s = sample_fields(
                                spec, box.n1, box.n2, beta,
                                g.seed + static_cast<uint64_t>(n) * 7919u +
                                    static_cast<uint64_t>(i));
                            PartitionValue z = quenched_partition(law, s, box, beta, h,
                                                                  variant, log_domain, &mass);
                            vals[static_cast<std::size_t>(i)] =
                                log_domain ? z.log_value : z.value;
                        }
                    });
                for (auto& th : pool) th.join();
                MeanSe m = mean_se(vals);
                write_csv_line(f, "%ld,%s,%.17g,%.17g,%.17g,%.17g,%ld,%llu\n", n,
                               variant_name(variant).c_str(), beta, h, m.mean, m.se, reps,
                               static_cast<unsigned long long>(g.seed));
                manifest.record_stream("partition/n=" + std::to_string(n),
                                       g.seed + static_cast<uint64_t>(n) * 7919u, reps);
            }
            manifest.record_output(path);
        } else if (cmd_second->parsed()) {
            RenewalLaw law = law_from_config(cfg);
            DisorderSpec spec = spec_from_config(cfg);
            double beta = cfg.get_double("run.beta", 0.5);
            double h = cfg.get_double("run.h", 0.0);
            long n = cfg.get_long("run.n", 3);
            LatticeBox box{static_cast<int>(n), static_cast<int>(n)};
            double exact = second_moment_exact(law, spec, box, beta, h);
            double replica = second_moment_replica(law, spec, box, beta);
            nlohmann::json j;
            j["n"] = n;
            j["beta"] = beta;
            j["h"] = h;
            j["second_moment_exact"] = exact;
            j["replica_form"] = replica;
            std::cout << j.dump(2) << "\n";
        } else if (cmd_field->parsed()) {
            DisorderSpec spec = spec_from_config(cfg);
            Classification cls;
            ScalingSchedule sched = schedule_from_config(cfg, spec, &cls);
            long n = cfg.get_long("run.n", 128);
            long res = cfg.get_long("run.grid", 32);
            manifest.set("classification", nlohmann::json::parse(cls.to_json()));
            double t1 = cfg.get_double("run.t1", 1.0), t2 = cfg.get_double("run.t2", 1.0);
            double beta_n = sched.beta_n(static_cast<int>(n));
            DisorderSample s = sample_fields(spec, static_cast<int>(n * t1),
                                             static_cast<int>(n * t2), beta_n, g.seed);
            double s2 = cls.r >= 1 ? cls.sigma_r_sq : 1.0;
            FieldGrid discrete = partial_sum_field(s, sched, static_cast<int>(n), t1, t2,
                                                   static_cast<int>(res), s2);
            std::vector<double> xs, ys;
            for (long i = 0; i <= res; ++i) {
                xs.push_back(t1 * i / res);
                ys.push_back(t2 * i / res);
            }
            FieldGrid limit = sample_limit_field(xs, ys, g.seed);
            std::string p1 = out_path(g, "field_discrete.csv");
            std::string p2 = out_path(g, "field_limit.csv");
            std::string p3 = out_path(g, "field_limit.bin");
            write_field_csv(discrete, p1);
            write_field_csv(limit, p2);
            write_field_binary(limit, p3);
            manifest.record_output(p1);
            manifest.record_output(p2);
            manifest.record_output(p3);
        } else if (cmd_norm->parsed()) {
            double alpha = cfg.get_double("model.alpha", 0.75);
            double t1 = cfg.get_double("run.t1", 1.0), t2 = cfg.get_double("run.t2", 1.0);
            long kmax = cfg.get_long("run.k_max", 2);
            long budget = cfg.get_long("run.mc_budget", 200000);
            QuadSpec qs;
            qs.panels = static_cast<int>(cfg.get_long("quad.levels", 6));
            PhiFn phi = PhiFn::power_law(alpha);
            double c_fit = 0.0;
            for (int k = 1; k <= kmax; ++k) {
                ChaosKernel ker{phi, t1, t2, k, KernelVariant::Q, 0.0, nullptr, 16};
                NuNorm nn = k <= 2 ? psi_norm_closed_grid(ker, qs, g.threads)
                                   : psi_norm_mc(ker, budget, g.seed, g.threads);
                if (k == 1) c_fit = std::sqrt(std::max(nn.value, 0.0) * std::tgamma(alpha - 0.5));
                nn.gamma_bound = std::pow(c_fit, k + 1) / std::tgamma(k * (alpha - 0.5));
                std::cout << nn.to_json() << "\n";
            }
        } else if (cmd_scaling->parsed()) {
            RenewalLaw law = law_from_config(cfg);
            DisorderSpec spec = spec_from_config(cfg);
            Classification cls;
            ScalingSchedule sched = schedule_from_config(cfg, spec, &cls);
            manifest.set("classification", nlohmann::json::parse(cls.to_json()));
            manifest.set("schedule_r", sched.r);
            if (!(sched.alpha > 0.5))
                std::cerr << "# warning: alpha <= 1/2, disordered limit degenerates\n";
            std::vector<long> ns = cfg.get_long_list("run.n_list");
            if (ns.empty()) ns = {16, 32};
            long reps = cfg.get_long("run.reps", 200);
            double t1 = cfg.get_double("run.t1", 1.0), t2 = cfg.get_double("run.t2", 1.0);
            std::string path = out_path(g, "scaling.csv");
            std::ofstream f(path);
            f << "n,mean,var,se_mean,se_var\n";
            for (long n : ns) {
                LatticeBox box{static_cast<int>(std::floor(n * t1)),
                               static_cast<int>(std::floor(n * t2))};
                MassTable mass = mass_function(law, box);
                std::vector<double> vals(static_cast<std::size_t>(reps));
                int T = std::max(1, g.threads);
                std::vector<std::thread> pool;
                for (int t0 = 0; t0 < T; ++t0)
                    pool.emplace_back([&, t0]() {
                        for (long i = t0; i < reps; i += T)
                            vals[static_cast<std::size_t>(i)] =
                                rescaled_partition(law, spec, sched, static_cast<int>(n), t1,
                                                   t2,
                                                   g.seed + static_cast<uint64_t>(n) * 104729u +
                                                       static_cast<uint64_t>(i),
                                                   &mass)
                                    .value;
                    });
                for (auto& th : pool) th.join();
                MomentSummary m = moment_summary(vals);
                write_csv_line(f, "%ld,%.17g,%.17g,%.17g,%.17g\n", n, m.mean, m.var,
                               m.se_mean, m.se_var);
                manifest.record_stream("scaling/n=" + std::to_string(n),
                                       g.seed + static_cast<uint64_t>(n) * 104729u, reps);
            }
            // chaos-side predictions
            PhiFn phi = make_numeric_phi(law, 256);
            double zhom = continuum_homogeneous(t1, t2, sched.h_hat, sched.alpha, phi, 24, 1e-6);
            f << "# prediction_mean," << zhom << "\n";
            if (cls.r >= 1 && sched.alpha > 0.5) {
                ChaosVarianceSeries s =
                    chaos_variance_series(sched.alpha, t1, t2, sched.r, cls.sigma_r_sq,
                                          sched.beta_hat, 2, 50000, g.seed, g.threads);
                f << "# prediction_var," << s.partial_sums.back() << "\n";
            }
            manifest.record_output(path);
        } else if (cmd_inter->parsed()) {
            RenewalLaw law = law_from_config(cfg);
            long n = cfg.get_long("run.n", 256);
            long reps = cfg.get_long("run.reps", 2000);
            IntersectionStats st =
                intersection_stats(law, LatticeBox{static_cast<int>(n), static_cast<int>(n)},
                                   static_cast<int>(reps), g.seed, g.threads);
            nlohmann::json j;
            j["reps"] = st.reps;
            j["geometric_fit_slope"] = st.geometric_fit_slope;
            j["geometric_fit_r2"] = st.geometric_fit_r2;
            j["expected_occupation"] = {st.expected_occupation[0], st.expected_occupation[1]};
            j["occupation_mean"] = {st.occupation_mean[0], st.occupation_mean[1]};
            j["occupation_moments_axis1"] = st.occupation_moments[0];
            std::cout << j.dump(2) << "\n";
        } else if (cmd_fe->parsed()) {
            RenewalLaw law = law_from_config(cfg);
            DisorderSpec spec = spec_from_config(cfg);
            double beta = cfg.get_double("run.beta", 0.5);
            double h = cfg.get_double("run.h", 0.5);
            long reps = cfg.get_long("run.reps", 50);
            std::vector<long> ns = cfg.get_long_list("run.n_list");
            if (ns.empty()) ns = {8, 16, 32};
            std::vector<int> nsi(ns.begin(), ns.end());
            auto pts = free_energy_estimate(law, spec, beta, h, nsi, static_cast<int>(reps),
                                            g.seed, g.threads);
            std::string path = out_path(g, "free_energy.csv");
            std::ofstream f(path);
            f << "n,fhat,se,reps,seed\n";
            for (auto& p : pts)
                write_csv_line(f, "%d,%.17g,%.17g,%ld,%llu\n", p.n, p.value, p.se, reps,
                               static_cast<unsigned long long>(g.seed));
            manifest.record_output(path);
        } else if (cmd_nbeta->parsed()) {
            RenewalLaw law = law_from_config(cfg);
            DisorderSpec spec = spec_from_config(cfg);
            double beta = cfg.get_double("run.beta", 0.2);
            double C = cfg.get_double("run.C", 10.0);
            long n_max = cfg.get_long("run.n_max", 32);
            long reps = cfg.get_long("run.reps", 400);
            NBetaResult r = n_beta_estimate(law, spec, beta, C, static_cast<int>(n_max),
                                            static_cast<int>(reps), g.seed, g.threads);
            nlohmann::json j;
            j["exceeds"] = r.exceeds;
            j["n_beta"] = r.exceeds ? nlohmann::json("exceeds n_max") : nlohmann::json(r.n_beta);
            j["grid"] = r.grid;
            j["second_moment"] = r.second_moment;
            std::cout << j.dump(2) << "\n";
        }

        manifest.finish(elapsed());
        manifest.write(out_path(g, "manifest.json"));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
