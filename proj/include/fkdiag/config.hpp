#pragma once

// Experiment configuration: an INI file ([section] / key = value) with a fixed
// schema. Unknown sections or keys are rejected. Overrides "section.key=value"
// are applied on top of the file before validation.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "fkdiag/dictionary.hpp"
#include "fkdiag/errors.hpp"
#include "fkdiag/eval.hpp"
#include "fkdiag/grid.hpp"
#include "fkdiag/pursuit.hpp"
#include "fkdiag/random.hpp"
#include "fkdiag/rbm.hpp"
#include "fkdiag/waveguide.hpp"

namespace fkdiag {

struct ExperimentConfig {
    // [io]
    std::uint64_t seed = 1;
    std::size_t threads = 1;

    EnvironmentSpec environment;
    SourceSpec source;  // spectrum expanded to one entry per frequency
    ArrayGeometry array;
    std::vector<double> freqs;

    WavenumberGrid grid;
    InnerProduct inner_product = InnerProduct::Hermitian;

    // [simulation]
    double noise_variance = 0.0;
    std::optional<double> snr_db;

    // [dataset]
    EnvironmentSampler sampler;
    std::size_t dataset_count = 200;

    // [rbm]
    std::size_t hidden = 0;  // 0 means one hidden unit per frequency
    TrainingConfig training;
    std::string params_file;

    // [solver]
    std::optional<double> sigma_w_sq;  // unset: use the measurement's recorded noise variance
    double sigma_x_sq = 1.0;
    SolverOptions solver;
    double bernoulli_p = 0.05;

    std::size_t hidden_units() const noexcept { return hidden == 0 ? freqs.size() : hidden; }

    // Independent seeds per pipeline stage.
    std::uint64_t simulation_seed() const noexcept { return mix_seed(seed, 1); }
    std::uint64_t dataset_seed() const noexcept { return mix_seed(seed, 2); }
    std::uint64_t training_seed() const noexcept { return mix_seed(seed, 3); }
    std::uint64_t solver_seed() const noexcept { return mix_seed(seed, 4); }
};

namespace detail {

// section -> allowed keys
inline const std::map<std::string, std::set<std::string>>& config_schema() {
    static const std::map<std::string, std::set<std::string>> schema = {
        {"io", {"seed", "threads"}},
        {"environment", {"kind", "depth", "water_speed", "bottom_speed", "water_density", "bottom_density"}},
        {"source", {"depth", "scale", "spectrum_re", "spectrum_im"}},
        {"array", {"receiver_depth", "ranges", "first_range", "spacing", "sensors"}},
        {"frequencies", {"list", "f_min", "f_max", "count"}},
        {"grid", {"k_min", "k_max", "points", "inner_product"}},
        {"simulation", {"noise_variance", "snr_db"}},
        {"dataset",
         {"count", "kind", "depth_min", "depth_max", "water_speed_min", "water_speed_max", "bottom_speed_min",
          "bottom_speed_max", "water_density", "bottom_density_min", "bottom_density_max"}},
        {"rbm",
         {"hidden", "cd_steps", "learning_rate", "epochs", "minibatch", "weight_decay", "momentum", "init_weight_std",
          "params_file"}},
        {"solver",
         {"sigma_w_sq", "sigma_x_sq", "max_sweeps", "tol", "damping", "normalization", "order", "threshold",
          "bernoulli_p"}},
    };
    return schema;
}

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + text + "'");
    }
    return v;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
        throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + text + "'");
    }
    return v;
}

inline std::vector<double> parse_list(const std::string& key, const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(key, item));
    if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
    return out;
}

template <typename Enum>
Enum parse_choice(const std::string& key, const std::string& text,
                  std::initializer_list<std::pair<std::string_view, Enum>> choices) {
    const std::string t = trim(text);
    std::string allowed;
    for (const auto& [name, value] : choices) {
        if (t == name) return value;
        allowed += (allowed.empty() ? "" : "|") + std::string(name);
    }
    throw ConfigError("config key '" + key + "': expected one of " + allowed + ", got '" + text + "'");
}

class ConfigReader {
public:
    explicit ConfigReader(const boost::property_tree::ptree& tree) : tree_(tree) {}

    std::optional<std::string> raw(const std::string& section, const std::string& key) const {
        const auto sec = tree_.get_child_optional(section);
        if (!sec) return std::nullopt;
        const auto v = sec->get_optional<std::string>(key);
        if (!v) return std::nullopt;
        return *v;
    }

    bool has(const std::string& section, const std::string& key) const { return raw(section, key).has_value(); }

    double number(const std::string& section, const std::string& key, double fallback) const {
        const auto v = raw(section, key);
        return v ? parse_double(section + "." + key, *v) : fallback;
    }

    std::optional<double> optional_number(const std::string& section, const std::string& key) const {
        const auto v = raw(section, key);
        if (!v || trim(*v) == "auto") return std::nullopt;
        return parse_double(section + "." + key, *v);
    }

    std::uint64_t count(const std::string& section, const std::string& key, std::uint64_t fallback) const {
        const auto v = raw(section, key);
        return v ? parse_uint(section + "." + key, *v) : fallback;
    }

    std::string text(const std::string& section, const std::string& key, const std::string& fallback) const {
        const auto v = raw(section, key);
        return v ? trim(*v) : fallback;
    }

    double required(const std::string& section, const std::string& key) const {
        const auto v = raw(section, key);
        if (!v) throw ConfigError("config is missing required key '" + section + "." + key + "'");
        return parse_double(section + "." + key, *v);
    }

private:
    const boost::property_tree::ptree& tree_;
};

inline void check_schema(const boost::property_tree::ptree& tree) {
    const auto& schema = config_schema();
    for (const auto& [section, body] : tree) {
        const auto it = schema.find(section);
        if (it == schema.end()) {
            if (body.empty() && !body.data().empty()) {
                throw ConfigError("config key '" + section + "' must be inside a [section]");
            }
            throw ConfigError("unknown config section [" + section + "]");
        }
        for (const auto& [key, value] : body) {
            if (!it->second.contains(key)) throw ConfigError("unknown config key '" + section + "." + key + "'");
        }
    }
}

inline WaveguideKind parse_kind(const std::string& key, const std::string& text) {
    return parse_choice<WaveguideKind>(key, text, {{"ideal", WaveguideKind::Ideal}, {"pekeris", WaveguideKind::Pekeris}});
}

}  // namespace detail

/// Apply "section.key=value" overrides to a parsed tree.
inline void apply_overrides(boost::property_tree::ptree& tree, const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        const auto dot = o.find('.');
        if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
            throw ConfigError("override '" + o + "' must look like section.key=value");
        }
        const std::string section = detail::trim(o.substr(0, dot));
        const std::string key = detail::trim(o.substr(dot + 1, eq - dot - 1));
        auto& sec = tree.get_child_optional(section) ? tree.get_child(section) : tree.add_child(section, {});
        sec.put(boost::property_tree::ptree::path_type(key, '\0'), detail::trim(o.substr(eq + 1)));
    }
}

inline ExperimentConfig build_config(const boost::property_tree::ptree& tree) {
    detail::check_schema(tree);
    const detail::ConfigReader r(tree);
    ExperimentConfig c;

    c.seed = r.count("io", "seed", c.seed);
    c.threads = r.count("io", "threads", c.threads);

    // frequencies
    if (r.has("frequencies", "list")) {
        c.freqs = detail::parse_list("frequencies.list", *r.raw("frequencies", "list"));
    } else {
        const double f_min = r.required("frequencies", "f_min");
        const double f_max = r.number("frequencies", "f_max", f_min);
        const auto count = r.count("frequencies", "count", 1);
        detail::require_config(count >= 1, "frequencies.count must be >= 1");
        for (std::uint64_t i = 0; i < count; ++i) {
            c.freqs.push_back(count == 1 ? f_min
                                         : f_min + (f_max - f_min) * static_cast<double>(i) / static_cast<double>(count - 1));
        }
    }
    for (std::size_t i = 0; i < c.freqs.size(); ++i) {
        detail::require_config(c.freqs[i] > 0.0, "frequencies must be > 0");
        if (i) detail::require_config(c.freqs[i] > c.freqs[i - 1], "frequencies must be strictly increasing");
    }

    // environment
    auto& env = c.environment;
    env.kind = detail::parse_kind("environment.kind", r.text("environment", "kind", "pekeris"));
    env.depth = r.number("environment", "depth", env.depth);
    env.water_speed = r.number("environment", "water_speed", env.water_speed);
    env.bottom_speed = r.number("environment", "bottom_speed", env.bottom_speed);
    env.water_density = r.number("environment", "water_density", env.water_density);
    env.bottom_density = r.number("environment", "bottom_density", env.bottom_density);
    env.validate();

    // source
    c.source.depth = r.number("source", "depth", c.source.depth);
    c.source.scale = r.number("source", "scale", c.source.scale);
    auto expand = [&](const std::string& key, double fallback) {
        const auto v = r.raw("source", key);
        std::vector<double> values = v ? detail::parse_list("source." + key, *v) : std::vector<double>{fallback};
        if (values.size() == 1) values.assign(c.freqs.size(), values.front());
        detail::require_dim(values.size() == c.freqs.size(),
                            "source." + key + " has " + std::to_string(values.size()) + " entries but there are " +
                                std::to_string(c.freqs.size()) + " frequencies");
        return values;
    };
    const auto re = expand("spectrum_re", 1.0);
    const auto im = expand("spectrum_im", 0.0);
    c.source.spectrum.clear();
    for (std::size_t i = 0; i < re.size(); ++i) c.source.spectrum.emplace_back(re[i], im[i]);
    detail::require_config(c.source.depth > 0.0 && c.source.depth < env.depth, "source.depth must lie in (0, depth)");

    // array
    c.array.receiver_depth = r.number("array", "receiver_depth", c.array.receiver_depth);
    if (r.has("array", "ranges")) {
        detail::require_config(!r.has("array", "spacing") && !r.has("array", "first_range") && !r.has("array", "sensors"),
                               "array: give either 'ranges' or 'first_range'/'spacing'/'sensors', not both");
        c.array.ranges = detail::parse_list("array.ranges", *r.raw("array", "ranges"));
    } else {
        c.array = ArrayGeometry::uniform(r.required("array", "first_range"), r.required("array", "spacing"),
                                         r.count("array", "sensors", 1), c.array.receiver_depth);
    }
    c.array.validate();
    detail::require_config(c.array.receiver_depth > 0.0 && c.array.receiver_depth < env.depth,
                           "array.receiver_depth must lie in (0, depth)");

    // grid
    c.grid.k_min = r.required("grid", "k_min");
    c.grid.k_max = r.required("grid", "k_max");
    c.grid.points = r.count("grid", "points", 64);
    c.grid.validate();
    c.inner_product = detail::parse_choice<InnerProduct>(
        "grid.inner_product", r.text("grid", "inner_product", "hermitian"),
        {{"hermitian", InnerProduct::Hermitian}, {"transpose", InnerProduct::LiteralTranspose}});

    // simulation
    c.noise_variance = r.number("simulation", "noise_variance", 0.0);
    detail::require_config(c.noise_variance >= 0.0, "simulation.noise_variance must be >= 0");
    c.snr_db = r.optional_number("simulation", "snr_db");

    // dataset
    auto& s = c.sampler;
    c.dataset_count = r.count("dataset", "count", c.dataset_count);
    s.kind = detail::parse_kind("dataset.kind", r.text("dataset", "kind", env.kind == WaveguideKind::Ideal ? "ideal" : "pekeris"));
    s.depth_min = r.number("dataset", "depth_min", env.depth);
    s.depth_max = r.number("dataset", "depth_max", s.depth_min);
    s.water_speed_min = r.number("dataset", "water_speed_min", env.water_speed);
    s.water_speed_max = r.number("dataset", "water_speed_max", s.water_speed_min);
    s.bottom_speed_min = r.number("dataset", "bottom_speed_min", env.bottom_speed);
    s.bottom_speed_max = r.number("dataset", "bottom_speed_max", s.bottom_speed_min);
    s.water_density = r.number("dataset", "water_density", env.water_density);
    s.bottom_density_min = r.number("dataset", "bottom_density_min", env.bottom_density);
    s.bottom_density_max = r.number("dataset", "bottom_density_max", s.bottom_density_min);
    detail::require_config(s.depth_min <= s.depth_max && s.water_speed_min <= s.water_speed_max &&
                               s.bottom_speed_min <= s.bottom_speed_max && s.bottom_density_min <= s.bottom_density_max,
                           "dataset ranges need min <= max");

    // rbm
    c.hidden = r.count("rbm", "hidden", 0);
    auto& t = c.training;
    t.cd_steps = r.count("rbm", "cd_steps", t.cd_steps);
    t.learning_rate = r.number("rbm", "learning_rate", t.learning_rate);
    t.epochs = r.count("rbm", "epochs", t.epochs);
    t.minibatch_size = r.count("rbm", "minibatch", t.minibatch_size);
    t.weight_decay = r.number("rbm", "weight_decay", t.weight_decay);
    t.momentum = r.number("rbm", "momentum", t.momentum);
    t.init_weight_std = r.number("rbm", "init_weight_std", t.init_weight_std);
    t.seed = c.training_seed();
    t.threads = c.threads;
    t.validate();
    c.params_file = r.text("rbm", "params_file", "");

    // solver
    c.sigma_w_sq = r.optional_number("solver", "sigma_w_sq");
    c.sigma_x_sq = r.number("solver", "sigma_x_sq", c.sigma_x_sq);
    auto& so = c.solver;
    so.max_sweeps = r.count("solver", "max_sweeps", so.max_sweeps);
    so.tol = r.number("solver", "tol", so.tol);
    so.damping = r.number("solver", "damping", so.damping);
    so.threshold = r.number("solver", "threshold", so.threshold);
    so.normalization = detail::parse_choice<Normalization>(
        "solver.normalization", r.text("solver", "normalization", "circular"),
        {{"circular", Normalization::CircularComplex}, {"literal", Normalization::RealGaussian}});
    so.order = detail::parse_choice<UpdateOrder>("solver.order", r.text("solver", "order", "sequential"),
                                                 {{"sequential", UpdateOrder::Sequential},
                                                  {"random", UpdateOrder::RandomPermutation}});
    so.order_seed = c.solver_seed();
    so.validate();
    c.bernoulli_p = r.number("solver", "bernoulli_p", c.bernoulli_p);
    detail::require_config(c.bernoulli_p > 0.0 && c.bernoulli_p < 1.0, "solver.bernoulli_p must lie in (0, 1)");
    detail::require_config(c.sigma_x_sq > 0.0, "solver.sigma_x_sq must be > 0");
    if (c.sigma_w_sq) detail::require_config(*c.sigma_w_sq > 0.0, "solver.sigma_w_sq must be > 0");
    return c;
}

inline boost::property_tree::ptree read_config_tree(std::istream& in) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return tree;
}

inline ExperimentConfig parse_config(std::istream& in, const std::vector<std::string>& overrides = {}) {
    auto tree = read_config_tree(in);
    apply_overrides(tree, overrides);
    return build_config(tree);
}

inline ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    return parse_config(in, overrides);
}

}  // namespace fkdiag
