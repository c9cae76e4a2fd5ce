#pragma once

// Pipeline stages behind the command-line tool:
// simulate -> make-dataset -> train -> estimate -> evaluate / compare -> render.
// Each stage reads and writes files only; given the same config and seed the
// outputs are byte-identical.

#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fkdiag/config.hpp"
#include "fkdiag/dictionary.hpp"
#include "fkdiag/errors.hpp"
#include "fkdiag/eval.hpp"
#include "fkdiag/io.hpp"
#include "fkdiag/pursuit.hpp"
#include "fkdiag/rbm.hpp"
#include "fkdiag/waveguide.hpp"

namespace fkdiag::pipeline {

namespace detail {

inline std::ofstream open_text(const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    return out;
}

inline void close_text(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) throw IoError("write failed: " + path);
}

inline bool same_axis(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::abs(a[i] - b[i]) > 1e-9 * std::max(1.0, std::abs(a[i]))) return false;
    }
    return true;
}

inline void check_grid(const WavenumberGrid& expected, std::uint64_t points, std::uint64_t freqs, double k_min,
                       double k_max, std::size_t num_freqs, const std::string& what) {
    if (points != expected.points || freqs != num_freqs || std::abs(k_min - expected.k_min) > 1e-12 ||
        std::abs(k_max - expected.k_max) > 1e-12) {
        std::ostringstream msg;
        msg << what << " layout (N=" << points << ", F=" << freqs << ", k=[" << k_min << ", " << k_max
            << "]) differs from config (N=" << expected.points << ", F=" << num_freqs << ", k=[" << expected.k_min
            << ", " << expected.k_max << "])";
        throw DimensionError(msg.str());
    }
}

}  // namespace detail

struct SimulateOutputs {
    std::string measurement;  // <prefix>.meas
    std::string support;      // <prefix>.support
    std::string coefficients; // <prefix>.ztrue
    std::string csv;          // <prefix>.meas.csv
    double noise_variance = 0.0;
};

inline SimulateOutputs simulate_paths(const std::string& prefix) {
    return {prefix + ".meas", prefix + ".support", prefix + ".ztrue", prefix + ".meas.csv", 0.0};
}

/// Writes the measurement, its true support and true grid coefficients.
/// With snr_db set, σ_w² is chosen so that 10 log10(||y0||² / (LF σ_w²)) = snr_db.
inline SimulateOutputs cmd_simulate(const ExperimentConfig& c, const std::string& prefix) {
    // dictionary build validates grid/array consistency before any heavy work
    (void)BlockDictionary::build(c.grid, c.array, c.freqs, c.inner_product);
    const ModeSet modes = compute_modes(c.environment, c.source.depth, c.array.receiver_depth, c.freqs);
    const FkSupport support = support_from_modes(modes, c.grid, c.freqs);

    double noise = c.noise_variance;
    if (c.snr_db) {
        const Measurement clean = synthesize_field(modes, c.source, c.array, c.freqs, 0.0, 0);
        noise = noise_variance_for_snr(clean.y, *c.snr_db);
    }
    const Measurement m = synthesize_field(modes, c.source, c.array, c.freqs, noise, c.simulation_seed());

    SimulateOutputs out = simulate_paths(prefix);
    out.noise_variance = noise;
    save_measurement(m, out.measurement);
    save_support(support, c.grid, out.support);
    save_fk_field({grid_coefficients(modes, c.source, c.grid), c.freqs, c.grid}, out.coefficients);
    auto csv = detail::open_text(out.csv);
    write_measurement_csv(csv, m);
    detail::close_text(csv, out.csv);
    return out;
}

inline SupportDataset cmd_make_dataset(const ExperimentConfig& c, std::size_t count, const std::string& out_path,
                                       const std::string& csv_path = {}) {
    const SupportDataset d = gen_training_supports(c.sampler, c.freqs, c.grid, count, c.dataset_seed());
    save_dataset(d, out_path);
    if (!csv_path.empty()) {
        auto csv = detail::open_text(csv_path);
        write_dataset_csv(csv, d);
        detail::close_text(csv, csv_path);
    }
    return d;
}

/// Trains the RBM prior; writes parameters to `out_path` and the epoch log to `log_path`.
inline TrainingResult cmd_train(const ExperimentConfig& c, const std::string& dataset_path, const std::string& out_path,
                                const std::string& log_path, std::ostream* progress = nullptr) {
    const SupportDataset d = load_dataset(dataset_path);
    detail::check_grid(c.grid, d.num_points, d.num_freqs, d.k_min, d.k_max, c.freqs.size(), "dataset " + dataset_path);
    const TrainingResult result = train(d, static_cast<Eigen::Index>(c.hidden_units()), c.training);
    save_rbm(result.params, {c.grid.points, c.freqs.size(), c.grid.k_min, c.grid.k_max}, out_path);
    auto log = detail::open_text(log_path);
    write_training_log_csv(log, result.log);
    detail::close_text(log, log_path);
    if (progress != nullptr) write_training_log_csv(*progress, result.log);
    return result;
}

struct EstimateOutputs {
    std::string coefficients;  // <prefix>.zhat
    std::string support;       // <prefix>.shat
    std::string qs_csv;        // <prefix>.qs.csv
    std::string qh_csv;        // <prefix>.qh.csv
    std::string trace_csv;     // <prefix>.trace.csv
};

inline EstimateOutputs estimate_paths(const std::string& prefix) {
    return {prefix + ".zhat", prefix + ".shat", prefix + ".qs.csv", prefix + ".qh.csv", prefix + ".trace.csv"};
}

/// Prior for the estimate stage: an RBM parameter file, or a Bernoulli(p) baseline when rbm_path is empty.
struct PriorChoice {
    std::string rbm_path;
    double bernoulli_p = 0.0;
};

inline EstimateResult cmd_estimate(const ExperimentConfig& c, const std::string& measurement_path,
                                   const PriorChoice& prior_choice, const std::string& prefix) {
    const Measurement m = load_measurement(measurement_path);
    if (!detail::same_axis(m.freqs, c.freqs)) {
        throw DimensionError("measurement frequencies differ from config (" + std::to_string(m.freqs.size()) + " vs " +
                             std::to_string(c.freqs.size()) + " entries)");
    }
    if (!detail::same_axis(m.ranges, c.array.ranges)) {
        throw DimensionError("measurement sensor ranges differ from config (" + std::to_string(m.ranges.size()) +
                             " vs " + std::to_string(c.array.ranges.size()) + " sensors)");
    }
    const BlockDictionary dict = BlockDictionary::build(c.grid, c.array, c.freqs, c.inner_product);

    RbmParams prior;
    if (prior_choice.rbm_path.empty()) {
        prior = RbmParams::bernoulli(dict.atoms(), prior_choice.bernoulli_p);
    } else {
        const LoadedRbm loaded = load_rbm(prior_choice.rbm_path, c.grid.points, c.freqs.size());
        detail::check_grid(c.grid, loaded.meta.num_points, loaded.meta.num_freqs, loaded.meta.k_min, loaded.meta.k_max,
                           c.freqs.size(), "RBM file " + prior_choice.rbm_path);
        prior = loaded.params;
    }

    ModelHyper hyper{c.sigma_w_sq.value_or(m.noise_variance), c.sigma_x_sq};
    if (!(hyper.sigma_w_sq > 0.0)) {
        throw ConfigError("solver.sigma_w_sq is 'auto' but the measurement records zero noise variance; set it explicitly");
    }
    const EstimateResult r = run(m.y, dict, prior, hyper, c.solver);

    const EstimateOutputs out = estimate_paths(prefix);
    save_fk_field({r.z_hat, c.freqs, c.grid}, out.coefficients);
    save_support(FkSupport::from_vector(r.s_hat, c.freqs.size(), c.grid.points), c.grid, out.support);

    auto qs = detail::open_text(out.qs_csv);
    qs << "index,freq_index,k_index,qs,z_re,z_im\n";
    for (Eigen::Index n = 0; n < r.qs.size(); ++n) {
        qs << n << ',' << dict.freq_index(n) << ',' << dict.grid_index(n) << ',';
        fkdiag::detail::write_double(qs, r.qs[n]);
        qs << ',';
        fkdiag::detail::write_double(qs, r.z_hat[n].real());
        qs << ',';
        fkdiag::detail::write_double(qs, r.z_hat[n].imag());
        qs << '\n';
    }
    detail::close_text(qs, out.qs_csv);

    auto qh = detail::open_text(out.qh_csv);
    qh << "index,qh\n";
    for (Eigen::Index l = 0; l < r.qh.size(); ++l) {
        qh << l << ',';
        fkdiag::detail::write_double(qh, r.qh[l]);
        qh << '\n';
    }
    detail::close_text(qh, out.qh_csv);

    auto trace = detail::open_text(out.trace_csv);
    trace << "sweep,free_energy\n";
    for (std::size_t i = 0; i < r.free_energy_trace.size(); ++i) {
        trace << i << ',';
        fkdiag::detail::write_double(trace, r.free_energy_trace[i]);
        trace << '\n';
    }
    detail::close_text(trace, out.trace_csv);
    return r;
}

struct EvaluateInputs {
    std::string truth_support;
    std::string estimate_support;
    std::string truth_coefficients;     // optional, enables NMSE
    std::string estimate_coefficients;  // optional, enables NMSE
};

inline RecoveryMetrics evaluate_files(const EvaluateInputs& in) {
    const SupportFile truth = load_support(in.truth_support);
    const SupportFile est = load_support(in.estimate_support);
    detail::check_grid(truth.grid, est.grid.points, est.support.num_freqs(), est.grid.k_min, est.grid.k_max,
                       truth.support.num_freqs(), "estimate support " + in.estimate_support);
    RecoveryMetrics m = support_metrics(est.support, truth.support, &truth.grid);
    if (!in.truth_coefficients.empty() && !in.estimate_coefficients.empty()) {
        m.nmse = nmse(load_fk_field(in.estimate_coefficients).z, load_fk_field(in.truth_coefficients).z);
    }
    return m;
}

inline void write_metrics_csv(std::ostream& os, const RecoveryMetrics& m) {
    os << "precision,recall,f1,hamming,tolerant_precision,tolerant_recall,tolerant_f1,nmse,wavenumber_error\n";
    for (double v : {m.precision, m.recall, m.f1}) {
        fkdiag::detail::write_double(os, v);
        os << ',';
    }
    os << m.hamming;
    for (double v : {m.tolerant_precision, m.tolerant_recall, m.tolerant_f1, m.nmse, m.wavenumber_error}) {
        os << ',';
        fkdiag::detail::write_double(os, v);
    }
    os << '\n';
}

inline RecoveryMetrics cmd_evaluate(const EvaluateInputs& in, const std::string& out_path) {
    const RecoveryMetrics m = evaluate_files(in);
    auto out = detail::open_text(out_path);
    write_metrics_csv(out, m);
    detail::close_text(out, out_path);
    return m;
}

/// Manifest CSV columns: method,snr_db,truth_support,estimate_support[,truth_coefficients,estimate_coefficients].
/// Relative paths resolve against the manifest's directory.
inline std::vector<SummaryRow> cmd_compare(const std::string& manifest_path, const std::string& out_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open manifest " + manifest_path);
    const auto slash = manifest_path.find_last_of('/');
    const std::string base = slash == std::string::npos ? std::string() : manifest_path.substr(0, slash + 1);
    auto resolve = [&](const std::string& p) { return p.empty() || p.front() == '/' ? p : base + p; };

    std::vector<RunRecord> runs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 || fkdiag::detail::trim(line).empty()) continue;  // header
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cols.push_back(fkdiag::detail::trim(cell));
        if (cols.size() != 4 && cols.size() != 6) {
            throw ConfigError(manifest_path + ":" + std::to_string(line_no) + ": expected 4 or 6 columns");
        }
        EvaluateInputs ev{resolve(cols[2]), resolve(cols[3]), {}, {}};
        if (cols.size() == 6) {
            ev.truth_coefficients = resolve(cols[4]);
            ev.estimate_coefficients = resolve(cols[5]);
        }
        runs.push_back({cols[0], fkdiag::detail::parse_double("snr_db", cols[1]), evaluate_files(ev)});
    }
    const auto rows = compare_runs(runs);
    auto out = detail::open_text(out_path);
    write_summary_csv(out, rows);
    detail::close_text(out, out_path);
    return rows;
}

/// F x N magnitude map of an f-k coefficient file (|z|) or support bitmap (0/1).
inline Eigen::MatrixXd load_magnitude_map(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw IoError("cannot open " + path);
    char magic[4] = {};
    probe.read(magic, 4);
    const std::string tag(magic, 4);
    if (tag == "FKZH") {
        const FkField f = load_fk_field(path);
        const auto F = static_cast<Eigen::Index>(f.freqs.size());
        const auto N = static_cast<Eigen::Index>(f.grid.points);
        Eigen::MatrixXd m(F, N);
        for (Eigen::Index r = 0; r < F; ++r) {
            for (Eigen::Index c = 0; c < N; ++c) m(r, c) = std::abs(f.z[r * N + c]);
        }
        return m;
    }
    if (tag == "FKSB") {
        const SupportFile s = load_support(path);
        Eigen::MatrixXd m(static_cast<Eigen::Index>(s.support.num_freqs()),
                          static_cast<Eigen::Index>(s.support.num_points()));
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                m(r, c) = s.support(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) ? 1.0 : 0.0;
            }
        }
        return m;
    }
    throw IoError(path + ": not an f-k coefficient (FKZH) or support (FKSB) file");
}

inline void cmd_render(const std::string& input, const std::string& out_image, const std::string& out_csv,
                       RenderScale scale = RenderScale::Linear, double dynamic_range_db = 40.0) {
    const Eigen::MatrixXd mag = load_magnitude_map(input);
    write_pgm(out_image, render_levels(mag, scale, dynamic_range_db), static_cast<std::size_t>(mag.cols()),
              static_cast<std::size_t>(mag.rows()));
    if (!out_csv.empty()) {
        auto csv = detail::open_text(out_csv);
        write_magnitude_csv(csv, mag);
        detail::close_text(csv, out_csv);
    }
}

}  // namespace fkdiag::pipeline
