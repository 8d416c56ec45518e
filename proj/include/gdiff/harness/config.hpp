#pragma once

// Experiment configuration read from a single YAML file. Every key is
// checked against the schema; errors carry the offending line.
//
// Schema (defaults in parentheses, * = required):
//
//   output_dir*:          directory for checkpoints, logs and reports
//   dataset*:
//     mixture:            benchmark | two-class-1d | single-gaussian-2d
//     components:         list of {weight, mean: [..], variance: [..]} (instead of mixture)
//     seed:               (0) seed of the training stream
//   schedule*:
//     family*:            linear | cosine
//     steps*:             T
//   model*:
//     width (128), hidden_layers (3), group_size (32), embed_dim (64)
//     learn_sigma (true), conditional (false)
//   training*:
//     iterations*, batch_size (256), lr (1e-3), ema_rate (0.999), lambda_vlb (0.001)
//     hybrid (true), weight_decay (0), max_timestep (0 = T), log_every (100)
//   classifier:           optional; trained by `train` when present
//     width (64), hidden_layers (2), group_size (16), embed_dim (32)
//     iterations (3000), batch_size (256), lr (1e-3), ema_rate (0.999)
//     weight_decay (0.05), max_timestep (0 = T), log_every (100)
//   sampler:
//     kind (ancestral | ddim), steps (0 = T), segments ([a,b,c,d,e], instead of steps)
//     variance (fixed-beta-tilde | fixed-beta | learned-v), guidance_scale (0)
//     temperature_mode (none), tau (1), seed (0), n (10000), allow_experimental (false)
//   metrics:
//     k (3), reference_size (10000), reference_seed (1), scales ([0, 1, 2, 5, 10])

#include "gdiff/mixture.hpp"
#include "gdiff/samplers.hpp"
#include "gdiff/schedules.hpp"
#include "gdiff/training.hpp"

#include <yaml-cpp/yaml.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

namespace gdiff::config {

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& message, int line, const std::string& file = {})
        : std::runtime_error(compose(message, line, file)), line_(line) {}
    int line() const { return line_; }

private:
    static std::string compose(const std::string& message, int line, const std::string& file) {
        std::string s = file.empty() ? std::string("config") : file;
        if (line > 0) s += ":" + std::to_string(line);
        return s + ": " + message;
    }
    int line_;
};

struct DatasetSpec {
    std::string name;  // empty when components were given
    GaussianMixture mixture = benchmark_mixture();
    std::uint64_t seed = 0;
};

struct ModelSpec {
    int width = 128;
    int hidden_layers = 3;
    int group_size = 32;
    int embed_dim = 64;
    bool learn_sigma = true;
    bool conditional = false;
};

struct ClassifierSpec {
    int width = 64;
    int hidden_layers = 2;
    int group_size = 16;
    int embed_dim = 32;
    TrainConfig training;
    int log_every = 100;
};

struct MetricsSpec {
    int k = 3;
    Eigen::Index reference_size = 10000;
    std::uint64_t reference_seed = 1;
    std::vector<double> scales{0.0, 1.0, 2.0, 5.0, 10.0};
};

struct SamplerSpec {
    SamplerConfig config;
    Eigen::Index n = 10000;
};

struct ExperimentConfig {
    std::filesystem::path output_dir;
    DatasetSpec dataset;
    ScheduleSpec schedule;
    ModelSpec model;
    TrainConfig training;
    int log_every = 100;
    std::optional<ClassifierSpec> classifier;
    SamplerSpec sampler;
    MetricsSpec metrics;

    MlpArchitecture denoiser_architecture() const {
        return MlpDenoiser::architecture_for(static_cast<int>(dataset.mixture.dim()), model.learn_sigma,
                                             model.conditional ? dataset.mixture.num_classes() : 0, model.width,
                                             model.hidden_layers, model.group_size, model.embed_dim);
    }

    MlpArchitecture classifier_architecture() const {
        require(classifier.has_value(), "config has no classifier section");
        return MlpClassifier::architecture_for(static_cast<int>(dataset.mixture.dim()), dataset.mixture.num_classes(),
                                               classifier->width, classifier->hidden_layers, classifier->group_size,
                                               classifier->embed_dim);
    }
};

namespace detail {

inline int line_of(const YAML::Node& n) { return n.Mark().is_null() ? 0 : n.Mark().line + 1; }

/// A mapping node whose keys are consumed one by one; leftovers are unknown.
class Section {
public:
    Section(YAML::Node node, std::string path, std::string file)
        : node_(std::move(node)), path_(std::move(path)), file_(std::move(file)) {
        if (!node_.IsMap()) fail(path_.empty() ? "top level must be a mapping" : "'" + path_ + "' must be a mapping", node_);
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return static_cast<bool>(std::as_const(node_)[key]);
    }

    YAML::Node node(const std::string& key) {
        seen_.insert(key);
        return std::as_const(node_)[key];
    }

    template <class T>
    T get(const std::string& key, T fallback) {
        const YAML::Node n = node(key);
        return n ? convert<T>(n, key) : fallback;
    }

    template <class T>
    T required(const std::string& key) {
        const YAML::Node n = node(key);
        if (!n) fail("missing required field '" + qualified(key) + "'", node_);
        return convert<T>(n, key);
    }

    Section child(const std::string& key, bool mandatory) {
        const YAML::Node n = node(key);
        if (!n) {
            if (mandatory) fail("missing required field '" + qualified(key) + "'", node_);
            return Section(YAML::Node(YAML::NodeType::Map), qualified(key), file_);
        }
        return Section(n, qualified(key), file_);
    }

    void finish() const {
        for (const auto& kv : node_) {
            const auto key = kv.first.as<std::string>();
            if (!seen_.count(key)) fail("unknown field '" + qualified(key) + "'", kv.first);
        }
    }

    [[noreturn]] void fail(const std::string& msg, const YAML::Node& at) const { throw ConfigError(msg, line_of(at), file_); }
    [[noreturn]] void fail_at(const std::string& key, const std::string& msg) {
        const YAML::Node n = node(key);
        fail("'" + qualified(key) + "': " + msg, n ? n : node_);
    }
    const YAML::Node& raw() const { return node_; }
    std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    const std::string& path() const { return path_; }
    const std::string& file() const { return file_; }

private:
    template <class T>
    T convert(const YAML::Node& n, const std::string& key) const {
        try {
            return n.as<T>();
        } catch (const YAML::Exception&) {
            fail("field '" + qualified(key) + "' has the wrong type", n);
        }
    }

    YAML::Node node_;
    std::string path_;
    std::string file_;
    std::set<std::string> seen_;
};

inline Point point_of(Section& s, const std::string& key) {
    const auto v = s.required<std::vector<double>>(key);
    if (v.empty()) s.fail_at(key, "must not be empty");
    return Eigen::Map<const Point>(v.data(), static_cast<Eigen::Index>(v.size()));
}

template <class F>
void checked(Section& s, const std::string& key, F&& f) {
    try {
        f();
    } catch (const std::invalid_argument& e) {
        s.fail_at(key, e.what());
    }
}

inline void read_dataset(Section& top, DatasetSpec& d) {
    Section s = top.child("dataset", true);
    d.seed = s.get<std::uint64_t>("seed", 0);
    const bool named = s.has("mixture"), custom = s.has("components");
    if (named == custom) s.fail("dataset needs exactly one of 'mixture' or 'components'", s.raw());
    if (named) {
        d.name = s.required<std::string>("mixture");
        checked(s, "mixture", [&] { d.mixture = named_mixture(d.name); });
    } else {
        const YAML::Node list = s.node("components");
        if (!list.IsSequence() || list.size() == 0) s.fail_at("components", "must be a non-empty list");
        std::vector<double> w;
        std::vector<Point> m, v;
        for (std::size_t i = 0; i < list.size(); ++i) {
            Section c(list[i], s.qualified("components[" + std::to_string(i) + "]"), s.file());
            w.push_back(c.required<double>("weight"));
            m.push_back(point_of(c, "mean"));
            v.push_back(point_of(c, "variance"));
            c.finish();
        }
        checked(s, "components", [&] { d.mixture = GaussianMixture(w, m, v); });
    }
    s.finish();
}

inline void read_training(Section& s, TrainConfig& t, int& log_every, bool classifier) {
    t.iterations = classifier ? s.get<int>("iterations", 3000) : s.required<int>("iterations");
    t.batch_size = s.get<int>("batch_size", t.batch_size);
    t.adam.lr = s.get<double>("lr", t.adam.lr);
    t.ema_rate = s.get<double>("ema_rate", t.ema_rate);
    t.adam.weight_decay = s.get<double>("weight_decay", classifier ? 0.05 : 0.0);
    t.max_timestep = s.get<int>("max_timestep", 0);
    t.seed = s.get<std::uint64_t>("seed", t.seed);
    if (!classifier) {
        t.lambda_vlb = s.get<double>("lambda_vlb", t.lambda_vlb);
        t.hybrid = s.get<bool>("hybrid", t.hybrid);
    }
    log_every = s.get<int>("log_every", 100);
    if (log_every < 1) s.fail_at("log_every", "must be positive");
    try {
        t.validate();
    } catch (const std::invalid_argument& e) {
        s.fail(s.path() + ": " + e.what(), s.raw());
    }
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text, const std::string& file = {}) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError("YAML syntax error: " + e.msg, e.mark.line + 1, file);
    }
    if (!root || root.IsNull()) throw ConfigError("config is empty", 0, file);
    detail::Section top(root, "", file);
    ExperimentConfig c;
    c.output_dir = top.required<std::string>("output_dir");
    detail::read_dataset(top, c.dataset);

    {
        auto s = top.child("schedule", true);
        const auto family = s.required<std::string>("family");
        detail::checked(s, "family", [&] { c.schedule.family = parse_schedule_family(family); });
        c.schedule.steps = s.required<int>("steps");
        detail::checked(s, "steps", [&] {
            require(c.schedule.steps >= 1, "must be positive");
            (void)make_schedule(c.schedule);
        });
        s.finish();
    }
    {
        auto s = top.child("model", true);
        c.model.width = s.get<int>("width", c.model.width);
        c.model.hidden_layers = s.get<int>("hidden_layers", c.model.hidden_layers);
        c.model.group_size = s.get<int>("group_size", c.model.group_size);
        c.model.embed_dim = s.get<int>("embed_dim", c.model.embed_dim);
        c.model.learn_sigma = s.get<bool>("learn_sigma", c.model.learn_sigma);
        c.model.conditional = s.get<bool>("conditional", c.model.conditional);
        try {
            c.denoiser_architecture().validate();
        } catch (const std::invalid_argument& e) {
            s.fail(std::string("model: ") + e.what(), s.raw());
        }
        s.finish();
    }
    {
        auto s = top.child("training", true);
        c.training.seed = c.dataset.seed;
        detail::read_training(s, c.training, c.log_every, false);
        s.finish();
    }
    if (top.has("classifier")) {
        auto s = top.child("classifier", false);
        ClassifierSpec k;
        k.width = s.get<int>("width", k.width);
        k.hidden_layers = s.get<int>("hidden_layers", k.hidden_layers);
        k.group_size = s.get<int>("group_size", k.group_size);
        k.embed_dim = s.get<int>("embed_dim", k.embed_dim);
        k.training.seed = derive_seed(c.dataset.seed, 0xc1a55ULL);
        detail::read_training(s, k.training, k.log_every, true);
        c.classifier = k;
        try {
            c.classifier_architecture().validate();
        } catch (const std::invalid_argument& e) {
            s.fail(std::string("classifier: ") + e.what(), s.raw());
        }
        s.finish();
    }
    {
        auto s = top.child("sampler", false);
        auto& sc = c.sampler.config;
        const auto kind = s.get<std::string>("kind", "ancestral");
        if (kind == "ancestral")
            sc.kind = SamplerKind::ancestral;
        else if (kind == "ddim")
            sc.kind = SamplerKind::ddim;
        else
            s.fail_at("kind", "expected ancestral or ddim");
        const bool steps = s.has("steps"), segments = s.has("segments");
        if (steps && segments) s.fail("sampler: give either 'steps' or 'segments', not both", s.raw());
        if (steps) {
            const int n = s.get<int>("steps", 0);
            if (n < 0 || n > c.schedule.steps) s.fail_at("steps", "must lie in 0..T");
            if (n > 0) sc.respacing = RespacingSpec::uniform(n);
        }
        if (segments) {
            const auto v = s.get<std::vector<int>>("segments", {});
            if (v.size() != 5) s.fail_at("segments", "needs exactly five counts");
            sc.respacing = RespacingSpec::from_segments({v[0], v[1], v[2], v[3], v[4]});
            detail::checked(s, "segments", [&] { (void)respacing_timesteps(sc.respacing, c.schedule.steps); });
        }
        const auto variance = s.get<std::string>("variance", "fixed-beta-tilde");
        detail::checked(s, "variance", [&] { sc.variance_mode = parse_variance_mode(variance); });
        if (sc.variance_mode == VarianceMode::learned && !c.model.learn_sigma)
            s.fail_at("variance", "learned-v needs model.learn_sigma: true");
        sc.guidance_scale = s.get<double>("guidance_scale", 0.0);
        const auto tmode = s.get<std::string>("temperature_mode", "none");
        detail::checked(s, "temperature_mode", [&] { sc.temperature.mode = parse_temperature_mode(tmode); });
        sc.temperature.tau = s.get<double>("tau", 1.0);
        sc.seed = s.get<std::uint64_t>("seed", 0);
        sc.allow_experimental = s.get<bool>("allow_experimental", false);
        c.sampler.n = s.get<Eigen::Index>("n", c.sampler.n);
        if (c.sampler.n < 1) s.fail_at("n", "must be positive");
        try {
            sc.validate();
        } catch (const std::invalid_argument& e) {
            s.fail(std::string("sampler: ") + e.what(), s.raw());
        }
        s.finish();
    }
    {
        auto s = top.child("metrics", false);
        c.metrics.k = s.get<int>("k", c.metrics.k);
        c.metrics.reference_size = s.get<Eigen::Index>("reference_size", c.metrics.reference_size);
        c.metrics.reference_seed = s.get<std::uint64_t>("reference_seed", c.metrics.reference_seed);
        c.metrics.scales = s.get<std::vector<double>>("scales", c.metrics.scales);
        if (c.metrics.k < 1) s.fail_at("k", "must be positive");
        if (c.metrics.reference_size <= c.metrics.k) s.fail_at("reference_size", "must exceed k");
        if (c.metrics.scales.empty()) s.fail_at("scales", "must not be empty");
        for (double v : c.metrics.scales)
            if (!(v >= 0.0)) s.fail_at("scales", "guidance scales must be non-negative");
        s.finish();
    }
    top.finish();
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file", 0, path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return parse_config(os.str(), path.string());
}

}  // namespace gdiff::config
