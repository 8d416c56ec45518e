// gdiff command-line driver: train, sample, eval, sweep, encode, interpolate.
//
// Exit codes: 0 success, 1 I/O or runtime failure, 2 configuration or flag
// error, 3 training divergence. Every run writes a run manifest.

#include "gdiff/harness/checkpoint.hpp"
#include "gdiff/harness/config.hpp"
#include "gdiff/harness/report.hpp"
#include "gdiff/samplers.hpp"
#include "gdiff/sweep.hpp"
#include "gdiff/training.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <numbers>
#include <variant>

namespace fs = std::filesystem;
using namespace gdiff;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDivergence = 3;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void usage_check(bool ok, const std::string& what) {
    if (!ok) throw UsageError(what);
}

fs::path manifest_path_for(const fs::path& out) {
    return out.parent_path() / (out.stem().string() + ".run-manifest.json");
}

std::string join(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

// ---------------------------------------------------------------------------
// Model sources shared by sample / encode / interpolate.

using AnyDenoiser = std::variant<AnalyticDenoiser, MlpDenoiser>;
using AnyClassifier = std::variant<std::monostate, AnalyticClassifier, MlpClassifier>;

struct ModelFlags {
    std::string checkpoint;
    std::string analytic;
    bool analytic_conditional = false;
    std::string classifier;
    std::string analytic_classifier;
    std::string schedule_family = "linear";
    int timesteps = 1000;

    void add_to(CLI::App* app, bool with_classifier) {
        app->add_option("--checkpoint", checkpoint, "Denoiser checkpoint");
        app->add_option("--analytic", analytic, "Use the exact oracle of a named mixture instead of a checkpoint");
        app->add_flag("--analytic-conditional", analytic_conditional, "Make the --analytic oracle class-conditional");
        app->add_option("--schedule", schedule_family, "Schedule family for --analytic (linear|cosine)")
            ->capture_default_str();
        app->add_option("--timesteps", timesteps, "Chain length T for --analytic")->capture_default_str();
        if (with_classifier) {
            app->add_option("--classifier", classifier, "Noisy-classifier checkpoint used for guidance");
            app->add_option("--analytic-classifier", analytic_classifier,
                            "Use the exact noisy posterior of a named mixture for guidance");
        }
    }

    void record(report::Manifest& m) const {
        if (!checkpoint.empty()) m.input("checkpoint", checkpoint);
        if (!analytic.empty()) {
            m.option("analytic", analytic);
            m.option("analytic_conditional", analytic_conditional);
            m.option("schedule", schedule_family);
            m.option("timesteps", timesteps);
        }
        if (!classifier.empty()) m.input("classifier", classifier);
        if (!analytic_classifier.empty()) m.option("analytic_classifier", analytic_classifier);
    }
};

struct LoadedModels {
    AnyDenoiser denoiser;
    AnyClassifier classifier;
    NoiseSchedule schedule;
};

LoadedModels load_models(const ModelFlags& f) {
    usage_check(f.checkpoint.empty() != f.analytic.empty(), "give exactly one of --checkpoint or --analytic");
    usage_check(f.classifier.empty() || f.analytic_classifier.empty(),
                "give at most one of --classifier or --analytic-classifier");
    std::optional<AnyDenoiser> denoiser;
    ScheduleSpec spec;
    if (!f.checkpoint.empty()) {
        const auto c = io::load_checkpoint(f.checkpoint, io::CheckpointKind::denoiser);
        denoiser = MlpDenoiser(io::network_from(c));
        spec = c.schedule;
    } else {
        try {
            denoiser = AnalyticDenoiser(named_mixture(f.analytic), f.analytic_conditional);
            spec.family = parse_schedule_family(f.schedule_family);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        usage_check(f.timesteps >= 1, "--timesteps must be positive");
        spec.steps = f.timesteps;
    }
    AnyClassifier clf;
    if (!f.classifier.empty()) {
        const auto c = io::load_checkpoint(f.classifier, io::CheckpointKind::classifier);
        usage_check(c.schedule.family == spec.family && c.schedule.steps == spec.steps,
                    "classifier checkpoint was trained on a different schedule");
        clf = MlpClassifier(io::network_from(c));
    } else if (!f.analytic_classifier.empty()) {
        try {
            clf = AnalyticClassifier(named_mixture(f.analytic_classifier));
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
    return {std::move(*denoiser), std::move(clf), make_schedule(spec)};
}

int classifier_classes(const AnyClassifier& c) {
    return std::visit(
        [](const auto& k) -> int {
            if constexpr (std::is_same_v<std::decay_t<decltype(k)>, std::monostate>)
                return 0;
            else
                return k.num_classes();
        },
        c);
}

int model_classes(const AnyDenoiser& d) {
    return std::visit(
        [](const auto& m) -> int {
            if constexpr (std::is_same_v<std::decay_t<decltype(m)>, AnalyticDenoiser>)
                return m.is_conditional() ? m.mixture().num_classes() : 0;
            else
                return m.network().architecture().num_classes;
        },
        d);
}

/// Calls f(denoiser, classifier pointer or nullptr).
template <class F>
auto visit_models(const LoadedModels& m, F&& f) {
    return std::visit(
        [&](const auto& model) {
            return std::visit(
                [&](const auto& clf) {
                    using C = std::decay_t<decltype(clf)>;
                    if constexpr (std::is_same_v<C, std::monostate>)
                        return f(model, static_cast<const NoClassifier*>(nullptr));
                    else
                        return f(model, &clf);
                },
                m.classifier);
        },
        m.denoiser);
}

// ---------------------------------------------------------------------------
// train

struct TrainFlags {
    std::string config;
    std::string only = "all";
    bool quiet = false;
};

int run_train(const TrainFlags& f) {
    const auto cfg = config::load_config(f.config);
    report::Manifest manifest("train");
    manifest.config(f.config);
    manifest.seed(cfg.dataset.seed);
    manifest.option("only", f.only);
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    const NoiseSchedule sched = make_schedule(cfg.schedule);

    auto progress = [&](const char* what) {
        return [what, &f](const LossLogRow& r) {
            if (!f.quiet) std::cerr << what << " iteration " << r.iteration << " loss " << r.total << "\n";
        };
    };
    auto loss_log = [](const std::vector<LossLogRow>& log) {
        io::Table t;
        t.header = {"iteration", "l_simple", "l_vlb", "total"};
        for (const auto& r : log)
            t.add_row({std::to_string(r.iteration), io::format_double(r.simple), io::format_double(r.vlb),
                       io::format_double(r.total)});
        return t.to_string();
    };

    if (f.only != "classifier") {
        const auto res = train_diffusion(cfg.dataset.mixture, cfg.denoiser_architecture(), sched, cfg.training,
                                         progress("denoiser"), cfg.log_every);
        io::Checkpoint c{io::CheckpointKind::denoiser, cfg.denoiser_architecture(), cfg.schedule, res.steps,
                         res.model.network().params()};
        io::save_checkpoint(dir / "denoiser.ckpt", c);
        io::write_file(dir / "loss_denoiser.csv", loss_log(res.log));
        manifest.output("denoiser", dir / "denoiser.ckpt");
        manifest.output("denoiser_loss", dir / "loss_denoiser.csv");
    }
    if (f.only != "denoiser" && cfg.classifier) {
        const auto res = train_classifier(cfg.dataset.mixture, cfg.classifier_architecture(), sched,
                                          cfg.classifier->training, progress("classifier"), cfg.classifier->log_every);
        io::Checkpoint c{io::CheckpointKind::classifier, cfg.classifier_architecture(), cfg.schedule, res.steps,
                         res.model.network().params()};
        io::save_checkpoint(dir / "classifier.ckpt", c);
        io::write_file(dir / "loss_classifier.csv", loss_log(res.log));
        manifest.output("classifier", dir / "classifier.ckpt");
        manifest.output("classifier_loss", dir / "loss_classifier.csv");
    }
    usage_check(f.only != "classifier" || cfg.classifier.has_value(), "--only classifier needs a classifier section");
    manifest.write(dir / "run-manifest.json");
    return 0;
}

// ---------------------------------------------------------------------------
// sample

struct SampleFlags {
    ModelFlags models;
    std::string out;
    std::string trajectory;
    Eigen::Index n = 1000;
    std::uint64_t seed = 0;
    int steps = 0;
    std::vector<int> segments;
    double guidance_scale = 0.0;
    int cls = -1;
    std::string temperature_mode = "none";
    double tau = 1.0;
    bool ddim = false;
    std::string variance = "auto";
    bool allow_experimental = false;
    bool count_model_calls = false;
};

SamplerConfig sampler_config(const SampleFlags& f, const LoadedModels& m, bool has_variance_head) {
    SamplerConfig c;
    c.kind = f.ddim ? SamplerKind::ddim : SamplerKind::ancestral;
    c.seed = f.seed;
    c.guidance_scale = f.guidance_scale;
    c.allow_experimental = f.allow_experimental;
    usage_check(f.steps == 0 || f.segments.empty(), "give either --steps or --segments, not both");
    const int T = m.schedule.num_steps();
    if (f.steps > 0) {
        usage_check(f.steps <= T, "--steps exceeds the chain length");
        c.respacing = RespacingSpec::uniform(f.steps);
    }
    usage_check(f.steps >= 0, "--steps must be non-negative");
    if (!f.segments.empty()) {
        usage_check(f.segments.size() == 5, "--segments needs exactly five counts");
        c.respacing = RespacingSpec::from_segments({f.segments[0], f.segments[1], f.segments[2], f.segments[3], f.segments[4]});
    }
    try {
        (void)respacing_timesteps(c.respacing, T);
        c.temperature = {parse_temperature_mode(f.temperature_mode), f.tau};
        c.variance_mode = f.variance == "auto"
                              ? (has_variance_head ? VarianceMode::learned : VarianceMode::fixed_beta_tilde)
                              : parse_variance_mode(f.variance);
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (c.variance_mode == VarianceMode::learned && c.kind == SamplerKind::ancestral)
        usage_check(has_variance_head, "--variance learned-v needs a checkpoint with a variance head");
    return c;
}

int run_sample(const SampleFlags& f) {
    const LoadedModels m = load_models(f.models);
    const bool head = std::visit([](const auto& d) { return d.has_variance_head(); }, m.denoiser);
    const SamplerConfig cfg = sampler_config(f, m, head);
    usage_check(f.n >= 0, "--n must be non-negative");
    const int clf_classes = classifier_classes(m.classifier);
    const int cond_classes = model_classes(m.denoiser);
    usage_check(!cfg.guided() || clf_classes > 0, "guidance needs --classifier or --analytic-classifier");
    usage_check(f.cls < 0 || clf_classes > 0 || cond_classes > 0, "--class needs a classifier or a conditional model");
    if (clf_classes > 0 && cond_classes > 0)
        usage_check(clf_classes == cond_classes, "classifier and model disagree on the number of classes");

    std::vector<int> labels;
    const bool need_labels = cfg.guided() || cond_classes > 0;
    if (need_labels) {
        const int K = cfg.guided() ? clf_classes : cond_classes;
        usage_check(f.cls < K, "--class is out of range");
        labels.resize(static_cast<std::size_t>(f.n));
        for (Eigen::Index i = 0; i < f.n; ++i) labels[static_cast<std::size_t>(i)] = f.cls >= 0 ? f.cls : static_cast<int>(i % K);
    }

    SampleOptions opts;
    opts.labels = labels;
    opts.record_trajectory = !f.trajectory.empty();
    std::size_t calls_per_chain = 0, evaluated_rows = 0;
    const SampleResult res = visit_models(m, [&](const auto& model, const auto* clf) {
        if (f.count_model_calls) {
            const CountingDenoiser counter(model);
            SampleResult r = sample(counter, m.schedule, cfg, f.n, clf, opts);
            evaluated_rows = counter.evaluated_rows();
            return r;
        }
        return sample(model, m.schedule, cfg, f.n, clf, opts);
    });
    calls_per_chain = res.model_calls_per_chain;

    const fs::path out = f.out;
    io::write_file(out, io::samples_table(res.samples, labels, f.seed).to_string());
    report::Manifest manifest("sample");
    f.models.record(manifest);
    manifest.seed(f.seed);
    manifest.option("n", f.n);
    manifest.option("sampler", f.ddim ? "ddim" : "ancestral");
    manifest.option("steps", f.steps);
    if (!f.segments.empty()) {
        manifest.option("segments", f.segments);
        std::cerr << "segments " << join(f.segments) << " -> " << respacing_timesteps(cfg.respacing, m.schedule.num_steps()).size()
                  << " steps\n";
    }
    manifest.option("guidance_scale", f.guidance_scale);
    manifest.option("class", f.cls);
    manifest.option("temperature_mode", f.temperature_mode);
    manifest.option("tau", f.tau);
    manifest.option("variance", to_string(cfg.variance_mode));
    manifest.option("allow_experimental", f.allow_experimental);
    manifest.output("samples", out);
    if (res.trajectory) {
        io::Table t;
        t.header = io::coordinate_header(res.samples.cols());
        t.header.insert(t.header.begin(), {"step", "chain"});
        const auto& states = res.trajectory->states;
        for (std::size_t k = 0; k < states.size(); ++k)
            for (Eigen::Index i = 0; i < states[k].rows(); ++i) {
                std::vector<std::string> r{std::to_string(k), std::to_string(i)};
                for (Eigen::Index j = 0; j < states[k].cols(); ++j) r.push_back(io::format_double(states[k](i, j)));
                t.add_row(std::move(r));
            }
        io::write_file(f.trajectory, t.to_string());
        manifest.output("trajectory", f.trajectory);
    }
    if (f.count_model_calls) {
        std::cout << "model_calls_per_chain " << calls_per_chain << "\n";
        std::cout << "evaluated_rows " << evaluated_rows << "\n";
        manifest.note("model_calls_per_chain", calls_per_chain);
        manifest.note("evaluated_rows", evaluated_rows);
    }
    manifest.write(manifest_path_for(out));
    return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalFlags {
    std::string samples;
    std::string reference;
    std::string config;
    std::string mixture = "benchmark";
    Eigen::Index reference_size = 10000;
    std::uint64_t reference_seed = 1;
    int k = 3;
    std::string out;
};

int run_eval(const EvalFlags& f) {
    report::Manifest manifest("eval");
    GaussianMixture mix = benchmark_mixture();
    Eigen::Index ref_size = f.reference_size;
    std::uint64_t ref_seed = f.reference_seed;
    int k = f.k;
    if (!f.config.empty()) {
        const auto cfg = config::load_config(f.config);
        manifest.config(f.config);
        mix = cfg.dataset.mixture;
        ref_size = cfg.metrics.reference_size;
        ref_seed = cfg.metrics.reference_seed;
        k = cfg.metrics.k;
    } else {
        try {
            mix = named_mixture(f.mixture);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        manifest.option("mixture", f.mixture);
    }
    const io::PointSet gen = io::read_points(f.samples);
    manifest.input("samples", f.samples);
    Batch ref;
    if (!f.reference.empty()) {
        ref = io::read_points(f.reference).points;
        manifest.input("reference", f.reference);
    } else {
        ref = sample_mixture(mix, ref_size, ref_seed).points;
        manifest.option("reference_size", ref_size);
        manifest.option("reference_seed", ref_seed);
    }
    manifest.option("k", k);
    usage_check(gen.points.cols() == mix.dim() && ref.cols() == mix.dim(), "point dimension does not match the mixture");
    MetricsReport r;
    try {
        r = evaluate_samples(mix, ref, gen.points, k, gen.labels);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const fs::path prefix = f.out;
    const fs::path csv = prefix.string() + ".csv", json = prefix.string() + ".json";
    io::write_file(csv, report::metrics_table(r).to_string());
    io::write_file(json, report::to_json(r).dump(2) + "\n");
    manifest.output("metrics_csv", csv);
    manifest.output("metrics_json", json);
    manifest.write(manifest_path_for(csv));
    std::cout << "frechet " << io::format_double(r.frechet) << "\nprecision " << io::format_double(r.precision)
              << "\nrecall " << io::format_double(r.recall) << "\nclass_fidelity " << io::format_double(r.class_fidelity)
              << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepFlags {
    std::string config;
    std::vector<double> scales;
    bool analytic = false;
    std::string checkpoint;
    std::string classifier;
    std::string out_dir;
    Eigen::Index n = 0;
};

int run_sweep(const SweepFlags& f) {
    const auto cfg = config::load_config(f.config);
    report::Manifest manifest("sweep");
    manifest.config(f.config);
    manifest.seed(cfg.sampler.config.seed);
    const std::vector<double> scales = f.scales.empty() ? cfg.metrics.scales : f.scales;
    for (double s : scales) usage_check(s >= 0.0, "guidance scales must be non-negative");
    const Eigen::Index n = f.n > 0 ? f.n : cfg.sampler.n;
    manifest.option("scales", scales);
    manifest.option("n", n);
    manifest.option("analytic", f.analytic);
    const fs::path dir = f.out_dir.empty() ? cfg.output_dir / "sweep" : fs::path(f.out_dir);

    LoadedModels m{AnalyticDenoiser(cfg.dataset.mixture), AnalyticClassifier(cfg.dataset.mixture),
                   make_schedule(cfg.schedule)};
    if (!f.analytic) {
        const fs::path dpath = f.checkpoint.empty() ? cfg.output_dir / "denoiser.ckpt" : fs::path(f.checkpoint);
        const fs::path cpath = f.classifier.empty() ? cfg.output_dir / "classifier.ckpt" : fs::path(f.classifier);
        const auto dc = io::load_checkpoint(dpath, io::CheckpointKind::denoiser);
        const auto cc = io::load_checkpoint(cpath, io::CheckpointKind::classifier);
        usage_check(dc.architecture.num_classes == 0, "sweep expects an unconditional denoiser");
        m.denoiser = MlpDenoiser(io::network_from(dc));
        m.classifier = MlpClassifier(io::network_from(cc));
        manifest.input("checkpoint", dpath);
        manifest.input("classifier", cpath);
    }
    SamplerConfig sc = cfg.sampler.config;
    if (sc.variance_mode == VarianceMode::learned && f.analytic) sc.variance_mode = VarianceMode::fixed_beta_tilde;
    const Batch ref = sample_mixture(cfg.dataset.mixture, cfg.metrics.reference_size, cfg.metrics.reference_seed).points;
    SweepRequest req;
    req.scales = scales;
    req.samples = n;
    req.k = cfg.metrics.k;
    const auto rows = visit_models(m, [&](const auto& model, const auto* clf) -> std::vector<SweepRow> {
        using C = std::remove_cvref_t<decltype(*clf)>;
        if constexpr (std::is_same_v<C, NoClassifier>)
            throw UsageError("sweep needs a classifier");
        else
            return sweep_guidance_scale(model, *clf, cfg.dataset.mixture, m.schedule, sc, req, ref);
    });

    io::write_file(dir / "sweep.csv", report::sweep_table(rows).to_string());
    io::write_file(dir / "sweep.json", report::sweep_json(rows).dump(2) + "\n");
    manifest.output("sweep_csv", dir / "sweep.csv");
    manifest.output("sweep_json", dir / "sweep.json");
    for (const auto& [name, body] : report::sweep_plots(rows)) {
        io::write_file(dir / (name + ".svg"), body);
        manifest.output(name + "_svg", dir / (name + ".svg"));
    }
    manifest.write(dir / "run-manifest.json");
    for (const auto& r : rows)
        std::cout << "scale " << r.scale << " frechet " << r.report.frechet << " precision " << r.report.precision
                  << " recall " << r.report.recall << " class_fidelity " << r.report.class_fidelity << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// encode / interpolate

struct LatentFlags {
    ModelFlags models;
    std::string points;
    std::string out;
    int reverse_steps = 0;
    int theta_count = 0;
    int cls = -1;
};

std::vector<int> latent_labels(const LatentFlags& f, const LoadedModels& m, const io::PointSet& pts) {
    const int K = model_classes(m.denoiser);
    if (K == 0) {
        usage_check(f.cls < 0, "--class needs a conditional model");
        return {};
    }
    if (f.cls >= 0) {
        usage_check(f.cls < K, "--class is out of range");
        return std::vector<int>(static_cast<std::size_t>(pts.points.rows()), f.cls);
    }
    usage_check(!pts.labels.empty(), "conditional model needs --class or a class column");
    return pts.labels;
}

int run_encode(const LatentFlags& f) {
    const LoadedModels m = load_models(f.models);
    const io::PointSet pts = io::read_points(f.points);
    usage_check(f.reverse_steps >= 1 && f.reverse_steps <= m.schedule.num_steps(), "--reverse-steps must lie in 1..T");
    const auto labels = latent_labels(f, m, pts);
    const Batch z = std::visit(
        [&](const auto& model) {
            usage_check(pts.points.cols() == model.data_dim(), "point dimension does not match the model");
            return ddim_encode(model, pts.points, m.schedule, f.reverse_steps, labels);
        },
        m.denoiser);
    io::write_file(f.out, io::points_table(z).to_string());
    report::Manifest manifest("encode");
    f.models.record(manifest);
    manifest.input("points", f.points);
    manifest.option("reverse_steps", f.reverse_steps);
    manifest.option("class", f.cls);
    manifest.output("latents", f.out);
    manifest.write(manifest_path_for(f.out));
    return 0;
}

int run_interpolate(const LatentFlags& f) {
    const LoadedModels m = load_models(f.models);
    io::PointSet pts = io::read_points(f.points);
    usage_check(pts.points.rows() >= 2, "interpolate needs a points file with at least two rows");
    pts.points = pts.points.topRows(2).eval();
    if (!pts.labels.empty()) pts.labels.resize(2);
    usage_check(f.theta_count >= 2, "--theta-count must be at least 2");
    usage_check(f.reverse_steps >= 1 && f.reverse_steps <= m.schedule.num_steps(), "--reverse-steps must lie in 1..T");
    auto labels = latent_labels(f, m, pts);
    if (!labels.empty()) usage_check(labels[0] == labels[1], "interpolation endpoints must share a class");
    const Batch out = std::visit(
        [&](const auto& model) {
            usage_check(pts.points.cols() == model.data_dim(), "point dimension does not match the model");
            const Batch z = ddim_encode(model, pts.points, m.schedule, f.reverse_steps, labels);
            Batch mixed(f.theta_count, z.cols());
            for (int i = 0; i < f.theta_count; ++i) {
                const double theta = std::numbers::pi / 2 * i / (f.theta_count - 1);
                mixed.row(i) = latent_interpolate(z.row(0), z.row(1), theta);
            }
            const std::vector<int> row_labels =
                labels.empty() ? std::vector<int>{} : std::vector<int>(static_cast<std::size_t>(f.theta_count), labels[0]);
            return ddim_decode(model, mixed, m.schedule, f.reverse_steps, SamplerConfig{},
                               static_cast<const NoClassifier*>(nullptr), row_labels);
        },
        m.denoiser);
    io::Table t;
    t.header = io::coordinate_header(out.cols());
    t.header.insert(t.header.begin(), "theta");
    for (int i = 0; i < f.theta_count; ++i) {
        std::vector<std::string> r{io::format_double(std::numbers::pi / 2 * i / (f.theta_count - 1))};
        for (Eigen::Index j = 0; j < out.cols(); ++j) r.push_back(io::format_double(out(i, j)));
        t.add_row(std::move(r));
    }
    io::write_file(f.out, t.to_string());
    report::Manifest manifest("interpolate");
    f.models.record(manifest);
    manifest.input("points", f.points);
    manifest.option("reverse_steps", f.reverse_steps);
    manifest.option("theta_count", f.theta_count);
    manifest.option("class", f.cls);
    manifest.output("interpolation", f.out);
    manifest.write(manifest_path_for(f.out));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gdiff: diffusion models with classifier guidance on Gaussian-mixture data.\n"
                 "Exit codes: 0 ok, 1 I/O or runtime error, 2 configuration or flag error, 3 training divergence."};
    app.require_subcommand(1);

    TrainFlags tf;
    auto* train = app.add_subcommand("train", "Train the denoiser (and classifier, if configured) from a config file");
    train->add_option("--config", tf.config, "YAML experiment config")->required();
    train->add_option("--only", tf.only, "Train only one model")
        ->check(CLI::IsMember({"all", "denoiser", "classifier"}))
        ->capture_default_str();
    train->add_flag("--quiet", tf.quiet, "Suppress progress output");

    SampleFlags sf;
    auto* samp = app.add_subcommand("sample", "Draw samples and write them as CSV");
    sf.models.add_to(samp, true);
    samp->add_option("--out", sf.out, "Output CSV")->required();
    samp->add_option("--n", sf.n, "Number of chains")->capture_default_str();
    samp->add_option("--seed", sf.seed, "Sampling seed")->capture_default_str();
    samp->add_option("--steps", sf.steps, "Uniformly respaced step count (0 = full chain)")->capture_default_str();
    samp->add_option("--segments", sf.segments, "Five per-segment step counts, e.g. 90,60,60,20,20")->delimiter(',');
    samp->add_option("--guidance-scale", sf.guidance_scale, "Classifier gradient scale s (0 = unguided)")
        ->capture_default_str();
    samp->add_option("--class", sf.cls, "Target class for every chain (default: chain index mod K)");
    samp->add_option("--temperature-mode", sf.temperature_mode, "none | noise-scale | eps-scale")->capture_default_str();
    samp->add_option("--tau", sf.tau, "Temperature")->capture_default_str();
    samp->add_flag("--ddim", sf.ddim, "Deterministic DDIM sampler instead of ancestral sampling");
    samp->add_option("--variance", sf.variance, "auto | learned-v | fixed-beta | fixed-beta-tilde")
        ->capture_default_str();
    samp->add_flag("--allow-experimental", sf.allow_experimental, "Permit guidance combined with temperature");
    samp->add_option("--trajectory", sf.trajectory, "Also write every intermediate state to this CSV");
    samp->add_flag("--count-model-calls", sf.count_model_calls,
                   "Instrument the denoiser and report model calls per chain");

    EvalFlags ef;
    auto* eval = app.add_subcommand("eval", "Score a sample CSV against a reference set");
    eval->add_option("--samples", ef.samples, "Sample CSV")->required();
    eval->add_option("--reference", ef.reference, "Reference CSV (default: a seeded draw from the mixture)");
    eval->add_option("--config", ef.config, "Take mixture, reference size/seed and k from a config");
    eval->add_option("--mixture", ef.mixture, "Named mixture for the class posterior")->capture_default_str();
    eval->add_option("--reference-size", ef.reference_size, "Size of the drawn reference set")->capture_default_str();
    eval->add_option("--reference-seed", ef.reference_seed, "Seed of the drawn reference set")->capture_default_str();
    eval->add_option("--k", ef.k, "Neighbour index for precision/recall")->capture_default_str();
    eval->add_option("--out", ef.out, "Output prefix; writes <prefix>.csv and <prefix>.json")->required();

    SweepFlags wf;
    auto* sweep = app.add_subcommand("sweep", "Sweep the guidance scale and plot every metric");
    sweep->add_option("--config", wf.config, "YAML experiment config")->required();
    sweep->add_option("--scales", wf.scales, "Comma-separated guidance scales (default: from config)")->delimiter(',');
    sweep->add_flag("--analytic", wf.analytic, "Use exact oracles instead of trained checkpoints");
    sweep->add_option("--checkpoint", wf.checkpoint, "Denoiser checkpoint (default: <output_dir>/denoiser.ckpt)");
    sweep->add_option("--classifier", wf.classifier, "Classifier checkpoint (default: <output_dir>/classifier.ckpt)");
    sweep->add_option("--out-dir", wf.out_dir, "Output directory (default: <output_dir>/sweep)");
    sweep->add_option("--n", wf.n, "Samples per scale (default: from config)");

    LatentFlags nf;
    auto* enc = app.add_subcommand("encode", "Map points to DDIM latents");
    nf.models.add_to(enc, false);
    enc->add_option("--points", nf.points, "Input CSV with x0.. columns")->required();
    enc->add_option("--reverse-steps", nf.reverse_steps, "Respaced chain length used for encoding")->required();
    enc->add_option("--class", nf.cls, "Class label for conditional models");
    enc->add_option("--out", nf.out, "Output CSV of latents")->required();

    LatentFlags pf;
    auto* interp = app.add_subcommand("interpolate", "Decode cos/sin interpolations between two encoded points");
    pf.models.add_to(interp, false);
    interp->add_option("--points", pf.points, "CSV whose first two rows are the endpoints")->required();
    interp->add_option("--reverse-steps", pf.reverse_steps, "Respaced chain length used for encoding")->required();
    interp->add_option("--theta-count", pf.theta_count, "Number of angles from 0 to pi/2 inclusive")->required();
    interp->add_option("--class", pf.cls, "Class label for conditional models");
    interp->add_option("--out", pf.out, "Output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (train->parsed()) return run_train(tf);
        if (samp->parsed()) return run_sample(sf);
        if (eval->parsed()) return run_eval(ef);
        if (sweep->parsed()) return run_sweep(wf);
        if (enc->parsed()) return run_encode(nf);
        if (interp->parsed()) return run_interpolate(pf);
    } catch (const config::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
