// fkdiag: command-line front end for the f-k diagram estimation pipeline.
//
// Exit codes: 0 success, 1 usage/config error, 2 solver did not converge
// (outputs still written), 3 I/O error.
//
// Environment: FKSPARSE_SEED overrides io.seed, FKSPARSE_THREADS overrides
// io.threads. Precedence: config file < environment < --set / --seed / flags.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fkdiag/fkdiag.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNotConverged = 2;
constexpr int kExitIo = 3;

struct GlobalOptions {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
};

fkdiag::ExperimentConfig load(const GlobalOptions& g, std::vector<std::string> extra = {}) {
    if (g.config_path.empty()) throw fkdiag::ConfigError("this command needs --config");
    std::vector<std::string> overrides;
    if (const char* s = std::getenv("FKSPARSE_SEED")) overrides.push_back(std::string("io.seed=") + s);
    if (const char* t = std::getenv("FKSPARSE_THREADS")) overrides.push_back(std::string("io.threads=") + t);
    overrides.insert(overrides.end(), g.overrides.begin(), g.overrides.end());
    if (g.seed) overrides.push_back("io.seed=" + std::to_string(*g.seed));
    overrides.insert(overrides.end(), extra.begin(), extra.end());
    return fkdiag::load_config(g.config_path, overrides);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse f-k diagram estimation with a structured RBM prior"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions g;
    app.add_option("-c,--config", g.config_path, "Experiment configuration (INI)");
    app.add_option("--set", g.overrides, "Override a config key: section.key=value (repeatable)");
    app.add_option("--seed", g.seed, "Override io.seed");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Simulate a measurement and its true support");
    std::string sim_out;
    std::optional<double> snr_db;
    sim->add_option("-o,--out", sim_out, "Output prefix")->required();
    sim->add_option("--snr-db", snr_db, "Set the noise level from a target SNR in dB");

    // make-dataset
    auto* mk = app.add_subcommand("make-dataset", "Generate training supports from sampled environments");
    std::size_t count = 0;
    std::string mk_out, mk_csv;
    mk->add_option("-n,--count", count, "Number of supports (default: dataset.count)");
    mk->add_option("-o,--out", mk_out, "Output dataset file")->required();
    mk->add_option("--csv", mk_csv, "Also write a CSV export");

    // train
    auto* tr = app.add_subcommand("train", "Train the RBM prior with contrastive divergence");
    std::string tr_data, tr_out, tr_log;
    tr->add_option("-d,--dataset", tr_data, "Dataset file")->required();
    tr->add_option("-o,--out", tr_out, "Output parameter file")->required();
    tr->add_option("--log", tr_log, "Training log CSV (default: <out>.log.csv)");

    // estimate
    auto* est = app.add_subcommand("estimate", "Estimate the f-k diagram of a measurement");
    std::string est_meas, est_rbm, est_out;
    std::optional<double> bernoulli;
    est->add_option("-m,--measurement", est_meas, "Measurement file")->required();
    auto* rbm_opt = est->add_option("--rbm", est_rbm, "RBM parameter file");
    auto* bern_opt = est->add_option("--bernoulli", bernoulli, "Use the Bernoulli(p) baseline prior instead");
    rbm_opt->excludes(bern_opt);
    est->add_option("-o,--out", est_out, "Output prefix")->required();

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Score an estimated support against the truth");
    fkdiag::pipeline::EvaluateInputs ev_in;
    std::string ev_out;
    ev->add_option("--truth", ev_in.truth_support, "True support file")->required();
    ev->add_option("--estimate", ev_in.estimate_support, "Estimated support file")->required();
    ev->add_option("--truth-z", ev_in.truth_coefficients, "True coefficient file (enables NMSE)");
    ev->add_option("--estimate-z", ev_in.estimate_coefficients, "Estimated coefficient file (enables NMSE)");
    ev->add_option("-o,--out", ev_out, "Metrics CSV")->required();

    // compare
    auto* cmp = app.add_subcommand("compare", "Aggregate metrics over a manifest of runs");
    std::string cmp_manifest, cmp_out;
    cmp->add_option("--manifest", cmp_manifest, "Manifest CSV")->required();
    cmp->add_option("-o,--out", cmp_out, "Summary CSV")->required();

    // render
    auto* rd = app.add_subcommand("render", "Render an f-k map as a PGM image and CSV");
    std::string rd_in, rd_img, rd_csv;
    bool rd_db = false;
    double rd_range = 40.0;
    rd->add_option("-i,--input", rd_in, "Coefficient (.zhat/.ztrue) or support file")->required();
    rd->add_option("--image", rd_img, "Output PGM image")->required();
    rd->add_option("--csv", rd_csv, "Output magnitude CSV");
    rd->add_flag("--db", rd_db, "Decibel scale");
    rd->add_option("--range", rd_range, "Dynamic range in dB for --db");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*sim) {
            std::vector<std::string> extra;
            if (snr_db) extra.push_back("simulation.snr_db=" + std::to_string(*snr_db));
            const auto c = load(g, extra);
            const auto out = fkdiag::pipeline::cmd_simulate(c, sim_out);
            std::cout << "wrote " << out.measurement << " (noise variance " << out.noise_variance << ")\n";
        } else if (*mk) {
            const auto c = load(g);
            const auto d = fkdiag::pipeline::cmd_make_dataset(c, count ? count : c.dataset_count, mk_out, mk_csv);
            std::cout << "wrote " << d.count() << " supports to " << mk_out << "\n";
        } else if (*tr) {
            const auto c = load(g);
            fkdiag::pipeline::cmd_train(c, tr_data, tr_out, tr_log.empty() ? tr_out + ".log.csv" : tr_log, &std::cout);
        } else if (*est) {
            const auto c = load(g);
            if (est_rbm.empty() && !bernoulli && c.params_file.empty()) {
                throw fkdiag::ConfigError("estimate needs --rbm, --bernoulli or rbm.params_file");
            }
            fkdiag::pipeline::PriorChoice prior;
            if (bernoulli) {
                prior.bernoulli_p = *bernoulli;
            } else {
                prior.rbm_path = est_rbm.empty() ? c.params_file : est_rbm;
            }
            const auto r = fkdiag::pipeline::cmd_estimate(c, est_meas, prior, est_out);
            std::cout << (r.converged ? "converged" : "did not converge") << " after " << r.sweeps_used
                      << " sweeps; " << r.s_hat.sum() << " active bins\n";
            if (!r.converged) return kExitNotConverged;
        } else if (*ev) {
            const auto m = fkdiag::pipeline::cmd_evaluate(ev_in, ev_out);
            std::cout << "precision " << m.precision << " recall " << m.recall << " f1 " << m.f1 << "\n";
        } else if (*cmp) {
            const auto rows = fkdiag::pipeline::cmd_compare(cmp_manifest, cmp_out);
            std::cout << "wrote " << rows.size() << " summary rows to " << cmp_out << "\n";
        } else if (*rd) {
            fkdiag::pipeline::cmd_render(rd_in, rd_img, rd_csv,
                                         rd_db ? fkdiag::RenderScale::Decibel : fkdiag::RenderScale::Linear, rd_range);
        }
    } catch (const fkdiag::IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitOk;
}
