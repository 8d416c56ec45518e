// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
// Usage: acceptance [criterion numbers...]   (default: all)

#include "gdiff/harness/config.hpp"
#include "gdiff/samplers.hpp"
#include "gdiff/sweep.hpp"
#include "gdiff/training.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

using namespace gdiff;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            if (pass) detail << "first failure: " << what << "; ";
            pass = false;
        }
    }
};

Point random_point(std::mt19937_64& rng, Eigen::Index d, double scale) {
    std::normal_distribution<double> n;
    return Point::NullaryExpr(d, [&] { return scale * n(rng); });
}

Batch random_batch(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
    std::normal_distribution<double> n;
    Batch x(rows, cols);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = scale * n(rng);
    return x;
}

double max_abs(const Point& a) { return a.cwiseAbs().maxCoeff(); }

// 1 -------------------------------------------------------------------------

void algebraic_identities(Outcome& o) {
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> pick_t(1, 1000);
    const NoiseSchedule schedules[] = {make_linear_schedule(1000), make_cosine_schedule(1000)};
    double worst_mean = 0, worst_inverse = 0, worst_sigma = 0, worst_respace = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto& s = schedules[i % 2];
        const int t = pick_t(rng);
        const Point xt = random_point(rng, 2, 3.0);
        const Point e = random_point(rng, 2, 1.0);
        worst_mean = std::max(
            worst_mean, max_abs(mu_from_eps(xt, t, e, s) - q_posterior(predict_x0_from_eps(xt, t, e, s), xt, t, s).mean));
        const Point x0 = random_point(rng, 2, 2.0);
        worst_inverse = std::max(worst_inverse, max_abs(predict_x0_from_eps(q_sample(x0, t, e, s), t, e, s) - x0));
        const double beta_tilde = t == 1 ? s.beta_tilde(2) : s.beta_tilde(t);
        worst_sigma = std::max({worst_sigma, std::abs(sigma_from_v(Point::Ones(2), t, s)(0) / s.beta(t) - 1.0),
                                std::abs(sigma_from_v(Point::Zero(2), t, s)(1) / beta_tilde - 1.0)});
    }
    std::uniform_int_distribution<int> pick_len(50, 1000);
    for (int i = 0; i < 1000; ++i) {
        const int T = pick_len(rng);
        const NoiseSchedule base = i % 2 ? make_cosine_schedule(T) : make_linear_schedule(T);
        const NoiseSchedule r = respace(base, uniform_timesteps(T, T));
        o.check(r.num_steps() == T, "respace length");
        const int t = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(T));
        worst_respace = std::max({worst_respace, std::abs(r.beta(t) - base.beta(t)),
                                  std::abs(r.alpha_bar(t) - base.alpha_bar(t)),
                                  std::abs(r.beta_tilde(t) - base.beta_tilde(t))});
        o.check(r.model_timestep(t) == t, "respace keeps model timesteps");
    }
    o.check(worst_mean <= 1e-10, "mean identity");
    o.check(worst_inverse <= 1e-10, "forward-sample inversion");
    o.check(worst_sigma <= 1e-10, "variance endpoints");
    o.check(worst_respace <= 1e-10, "respace identity");
    o.detail << "max errors: mean " << worst_mean << ", inversion " << worst_inverse << ", variance endpoints (relative) "
             << worst_sigma << ", respace " << worst_respace;
}

// 2 -------------------------------------------------------------------------

struct GradientTally {
    double worst = 0.0;
    std::size_t checked = 0;

    void add(double analytic, double numeric, double floor) {
        worst = std::max(worst, oracle::relative_error(analytic, numeric, floor));
        ++checked;
    }
};

template <class Model, class F>
void parameter_gradient(Model model, std::vector<double>& (*params)(Model&), const std::vector<double>& grad, F f,
                        double floor, GradientTally& tally) {
    auto& p = params(model);
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double saved = p[i];
        const double fd = oracle::central_difference(
            [&](double v) {
                p[i] = v;
                return f(model);
            },
            saved);
        p[i] = saved;
        tally.add(grad[i], fd, floor);
    }
}

std::vector<double>& denoiser_params(MlpDenoiser& m) { return m.network().params(); }
std::vector<double>& classifier_params(MlpClassifier& c) { return c.network().params(); }
std::vector<double>& network_params(MlpNetwork& n) { return n.params(); }

void gradient_suite(Outcome& o) {
    const NoiseSchedule sched = make_linear_schedule(100);
    std::mt19937_64 rng(202);
    const Batch x0 = sample_mixture(benchmark_mixture(), 5, rng).points;
    NoiseDraw draw = draw_noise(rng, 5, 2, 100);
    draw.timesteps = {1, 2, 37, 80, 100};
    const std::vector<int> labels{0, 1, 2, 3, 1};
    const double lambda = 0.01;

    GradientTally backward, losses;

    // Raw network backward, conditional denoiser layout.
    {
        MlpNetwork net(MlpDenoiser::architecture_for(2, true, 4, 8, 2, 4, 8));
        net.initialize(203, true);
        for (const auto& L : net.layout().layers)
            for (std::size_t i = 0; i < 16 * 8; ++i) net.params()[L.proj + i] *= 20.0;
        const Batch x = random_batch(rng, 3, 2);
        const std::vector<int> ts{3, 250, 999};
        const std::vector<int> ls{0, 2, 1};
        const RowMatrix upstream = random_batch(rng, 3, 4);
        auto weighted = [&](const MlpNetwork& n, const Batch& in) {
            return (n.forward(in, ts, ls).array() * upstream.array()).sum();
        };
        MlpCache cache;
        net.forward(x, ts, ls, &cache);
        const MlpGradients g = net.backward(cache, upstream);
        parameter_gradient<MlpNetwork>(net, network_params, g.params, [&](const MlpNetwork& n) { return weighted(n, x); },
                                       1e-7, backward);
        for (Eigen::Index r = 0; r < x.rows(); ++r)
            for (Eigen::Index c = 0; c < x.cols(); ++c) {
                Batch xp = x;
                const double fd = oracle::central_difference(
                    [&](double v) {
                        xp(r, c) = v;
                        return weighted(net, xp);
                    },
                    x(r, c));
                backward.add(g.input(r, c), fd, 1e-7);
            }
    }

    // Classifier input gradient.
    MlpNetwork cnet(MlpClassifier::architecture_for(2, 4, 8, 2, 4, 8));
    cnet.initialize(204, true);
    const MlpClassifier clf(cnet);
    {
        const Batch x = random_batch(rng, 5, 2);
        const StepTime st{321, 0.2};
        const auto out = clf.evaluate(x, st, labels);
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            for (Eigen::Index j = 0; j < 2; ++j) {
                const double fd = oracle::central_difference(
                    [&](double v) {
                        Batch xp = x.row(i);
                        xp(0, j) = v;
                        return clf.log_probs(xp, st)(0, labels[static_cast<std::size_t>(i)]);
                    },
                    x(i, j));
                backward.add(out.grad_selected(i, j), fd, 1e-7);
            }
    }

    // Simple loss (with and without variance head) and hybrid loss.
    for (bool learn_sigma : {false, true}) {
        MlpNetwork net(MlpDenoiser::architecture_for(2, learn_sigma, 0, 8, 2, 4, 8));
        net.initialize(205, true);
        const MlpDenoiser model(std::move(net));
        const auto r = simple_loss(model, x0, draw, sched);
        parameter_gradient<MlpDenoiser>(model, denoiser_params, r.grad,
                                        [&](const MlpDenoiser& m) { return simple_loss_value(m, x0, draw, sched); },
                                        1e-4, losses);
    }
    {
        MlpNetwork net(MlpDenoiser::architecture_for(2, true, 0, 8, 2, 4, 8));
        net.initialize(206, true);
        const MlpDenoiser model(std::move(net));
        const auto r = hybrid_loss(model, x0, draw, sched, lambda);
        const Batch xt = noised_batch(x0, draw, sched);
        const auto times = step_times(draw, sched);
        const Batch frozen_eps = model.predict(xt, times, {}).eps;
        auto objective = [&](const MlpDenoiser& m) {
            const auto out = m.predict(xt, times, {});
            double term = 0.0;
            for (Eigen::Index i = 0; i < xt.rows(); ++i) {
                const int t = draw.timesteps[static_cast<std::size_t>(i)];
                const Point xti = xt.row(i).transpose();
                const Point mean = mu_from_eps(xti, t, Point(frozen_eps.row(i).transpose()), sched);
                const Point var = sigma_from_v(Point(out.v->row(i).transpose()), t, sched);
                term += vlb_term(t - 1, Point(x0.row(i).transpose()), xti, mean, var, sched);
            }
            const double simple = (draw.eps - out.eps).squaredNorm() / static_cast<double>(xt.size());
            return simple + lambda * sched.num_steps() * term / static_cast<double>(xt.size());
        };
        o.check(std::abs(r.total - objective(model)) < 1e-12, "hybrid loss value");
        parameter_gradient<MlpDenoiser>(model, denoiser_params, r.grad, objective, 1e-4, losses);
    }

    // Classifier cross-entropy.
    {
        const auto r = classifier_loss(clf, x0, labels, draw, sched);
        auto nll = [&](const MlpClassifier& c) {
            const Batch xt = noised_batch(x0, draw, sched);
            double total = 0.0;
            for (Eigen::Index i = 0; i < xt.rows(); ++i) {
                const StepTime st = sched.step_time(draw.timesteps[static_cast<std::size_t>(i)]);
                total -= c.log_probs(xt.row(i), st)(0, labels[static_cast<std::size_t>(i)]);
            }
            return total / static_cast<double>(xt.rows());
        };
        parameter_gradient<MlpClassifier>(clf, classifier_params, r.grad, nll, 1e-4, losses);
    }

    o.check(backward.worst < 1e-5, "network backward");
    o.check(losses.worst < 1e-5, "loss gradients");
    o.detail << backward.checked << " backward derivatives (max rel err " << backward.worst << "), " << losses.checked
             << " loss derivatives (max rel err " << losses.worst << ")";
}

// 3 -------------------------------------------------------------------------

void score_oracle(Outcome& o) {
    const auto mix = benchmark_mixture();
    const auto s = make_linear_schedule(1000);
    std::mt19937_64 rng(303);
    std::uniform_int_distribution<int> pick_t(1, 1000);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int t = pick_t(rng);
        const double ab = s.alpha_bar(t);
        const Batch x = random_batch(rng, 1, 2, 2.5);
        const Point score = score_from_eps(Point(analytic_eps(mix, x, ab).row(0).transpose()), t, s);
        for (int d = 0; d < 2; ++d) {
            const double fd = oracle::central_difference(
                [&](double v) {
                    Point p = x.row(0).transpose();
                    p(d) = v;
                    return analytic_marginal_logdensity(mix, p, ab);
                },
                x(0, d));
            worst = std::max(worst, oracle::relative_error(score(d), fd, 1e-3));
        }
    }
    o.check(worst < 1e-4, "score vs log-density derivative");
    o.detail << "100 points, max rel err " << worst;
}

// 4 -------------------------------------------------------------------------

void guided_exactness(Outcome& o) {
    const auto mix = benchmark_mixture();
    const AnalyticDenoiser model(mix);
    const AnalyticClassifier clf(mix);
    SamplerConfig cfg;
    cfg.seed = 404;
    cfg.guidance_scale = 1.0;
    const Eigen::Index n = 100000;
    std::vector<int> targets(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) targets[static_cast<std::size_t>(i)] = static_cast<int>(i % mix.num_classes());
    SampleOptions opts;
    opts.labels = targets;
    const Batch x = sample(model, make_linear_schedule(1000), cfg, n, &clf, opts).samples;
    double worst_z = 0.0, worst_var = 0.0;
    for (int k = 0; k < mix.num_classes(); ++k) {
        std::vector<Eigen::Index> rows;
        for (Eigen::Index i = 0; i < n; ++i)
            if (targets[static_cast<std::size_t>(i)] == k) rows.push_back(i);
        const double m = static_cast<double>(rows.size());
        for (Eigen::Index d = 0; d < mix.dim(); ++d) {
            double sum = 0.0, sq = 0.0;
            for (auto i : rows) sum += x(i, d);
            const double mean = sum / m;
            for (auto i : rows) sq += (x(i, d) - mean) * (x(i, d) - mean);
            const double var = sq / (m - 1.0);
            const std::size_t ku = static_cast<std::size_t>(k);
            const double true_mean = mix.means()[ku](d), true_var = mix.variances()[ku](d);
            worst_z = std::max(worst_z, std::abs(mean - true_mean) / std::sqrt(true_var / m));
            worst_var = std::max(worst_var, std::abs(var / true_var - 1.0));
        }
    }
    o.check(worst_z <= 3.0, "conditional mean within 3 sigma");
    o.check(worst_var <= 0.05, "conditional variance within 5%");
    o.detail << "N=" << n << ", worst mean offset " << worst_z << " sigma, worst variance error " << 100 * worst_var << "%";
}

// 5 and 10 ------------------------------------------------------------------

void tradeoff_pattern(Outcome& o, const std::vector<SweepRow>& rows) {
    int p_inv = 0, r_inv = 0;
    double worst = 0.0;
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
        const double dp = rows[i].report.precision - rows[i + 1].report.precision;
        const double dr = rows[i + 1].report.recall - rows[i].report.recall;
        if (dp > 0) ++p_inv, worst = std::max(worst, dp);
        if (dr > 0) ++r_inv, worst = std::max(worst, dr);
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (rows[i].report.frechet < rows[best].report.frechet) best = i;
    o.check(worst <= 0.02, "precision/recall inversion larger than 0.02");
    o.check(rows.back().report.class_fidelity > rows.front().report.class_fidelity, "class fidelity did not rise");
    o.check(best + 1 != rows.size(), "Frechet minimum at the largest scale");
    o.detail << "scale:precision/recall/frechet/fidelity";
    for (const auto& r : rows) {
        char buf[128];
        std::snprintf(buf, sizeof buf, " %g:%.4f/%.4f/%.4f/%.4f", r.scale, r.report.precision, r.report.recall,
                      r.report.frechet, r.report.class_fidelity);
        o.detail << buf;
    }
    o.detail << "; inversions precision " << p_inv << " recall " << r_inv << " (largest " << worst << ")";
}

void tradeoff_analytic(Outcome& o) {
    const auto mix = benchmark_mixture();
    const AnalyticDenoiser model(mix);
    const AnalyticClassifier clf(mix);
    SamplerConfig cfg;
    cfg.seed = 505;
    cfg.respacing = RespacingSpec::uniform(250);
    SweepRequest req;
    req.scales = {0, 1, 2, 5, 10};
    req.samples = 10000;
    req.k = 3;
    const Batch ref = sample_mixture(mix, 10000, std::uint64_t{1}).points;
    tradeoff_pattern(o, sweep_guidance_scale(model, clf, mix, make_linear_schedule(1000), cfg, req, ref));
}

// 6 -------------------------------------------------------------------------

void ddim_roundtrip(Outcome& o) {
    const auto mix = benchmark_mixture();
    const AnalyticDenoiser model(mix);
    const auto base = make_linear_schedule(1000);
    const Batch x = sample_mixture(mix, 200, std::uint64_t{606}).points;

    SamplerConfig cfg;
    cfg.kind = SamplerKind::ddim;
    cfg.seed = 607;
    cfg.respacing = RespacingSpec::uniform(50);
    o.check(sample(model, base, cfg, 100).samples == sample(model, base, cfg, 100).samples, "seeded DDIM not bit-exact");
    std::mt19937_64 rng(608);
    const Batch z = random_batch(rng, 100, 2);
    o.check(ddim_decode(model, z, base, 100) == ddim_decode(model, z, base, 100), "decode not bit-exact");

    std::vector<double> errors;
    for (int steps : {50, 250, 1000}) {
        const Batch rec = ddim_decode(model, ddim_encode(model, x, base, steps), base, steps);
        errors.push_back((rec - x).norm() / x.norm());
    }
    o.check(errors[2] < 0.05, "roundtrip error at 1000 steps");
    o.check(errors[0] > errors[1] && errors[1] > errors[2], "roundtrip not monotone in steps");
    o.detail << "relative L2 roundtrip error 50/250/1000 steps: " << errors[0] << " / " << errors[1] << " / "
             << errors[2];
}

// 7 -------------------------------------------------------------------------

void temperature(Outcome& o) {
    const auto base = make_linear_schedule(1000);
    {
        const AnalyticDenoiser model(benchmark_mixture());
        SamplerConfig cfg;
        cfg.seed = 707;
        cfg.respacing = RespacingSpec::uniform(100);
        const Batch baseline = sample(model, base, cfg, 2000).samples;
        for (auto mode : {TemperatureMode::noise_scale, TemperatureMode::eps_scale}) {
            cfg.temperature = {mode, 1.0};
            o.check(sample(model, base, cfg, 2000).samples == baseline, "unit temperature changed samples");
        }
    }
    const AnalyticDenoiser model(single_gaussian(Point::Constant(2, 1.0), Point::Constant(2, 0.25)));
    SamplerConfig cfg;
    cfg.seed = 708;
    cfg.respacing = RespacingSpec::uniform(250);
    const Eigen::Index n = 100000;
    auto variances = [](const Batch& x) {
        const Eigen::RowVectorXd m = x.colwise().mean();
        return Eigen::RowVectorXd(((x.rowwise() - m).array().square().colwise().sum() / double(x.rows() - 1)).matrix());
    };
    const Eigen::RowVectorXd v1 = variances(sample(model, base, cfg, n).samples);
    cfg.temperature = {TemperatureMode::eps_scale, 0.5};
    const Eigen::RowVectorXd vh = variances(sample(model, base, cfg, n).samples);
    o.check((vh.array() < v1.array()).all(), "eps-scale temperature did not shrink variance");
    o.detail << "tau=1 bit-identical in both modes; per-dim variance tau=1 (" << v1(0) << ", " << v1(1)
             << ") vs eps-scale tau=0.5 (" << vh(0) << ", " << vh(1) << ")";
}

// 8 -------------------------------------------------------------------------

void schedule_machinery(Outcome& o) {
    const auto base = make_linear_schedule(1000);
    const auto seg = respacing_timesteps(RespacingSpec::from_segments({50, 50, 50, 50, 50}), 1000);
    const auto uni = respacing_timesteps(RespacingSpec::uniform(250), 1000);
    o.check(seg == uni, "equal segments differ from uniform selection");
    double worst = 0.0;
    std::size_t kept = 0;
    for (const auto& ts : {seg, respacing_timesteps(RespacingSpec::from_segments({90, 60, 60, 20, 20}), 1000),
                           respacing_timesteps(RespacingSpec::uniform(25), 1000)}) {
        for (const auto& b : {base, make_cosine_schedule(1000)}) {
            const auto r = respace(b, ts);
            for (std::size_t i = 0; i < ts.size(); ++i) {
                worst = std::max(worst, std::abs(r.alpha_bar(static_cast<int>(i) + 1) - b.alpha_bar(ts[i] + 1)));
                ++kept;
            }
        }
    }
    o.check(worst <= 1e-12, "respaced alpha-bar drifted");
    o.detail << "segments (50x5) == uniform 250 of 1000: " << (seg == uni ? "yes" : "no") << "; " << kept
             << " kept indices, max alpha-bar error " << worst;
}

// 9 -------------------------------------------------------------------------

void metrics_oracles(Outcome& o) {
    std::mt19937_64 rng(909);
    std::uniform_int_distribution<int> size(20, 500);
    int exact = 0;
    for (int pair = 0; pair < 20; ++pair) {
        const Eigen::Index d = 1 + pair % 3;
        Batch ref = random_batch(rng, size(rng), d);
        Batch gen = random_batch(rng, size(rng), d, 0.5 + 0.1 * pair);
        gen.array() += 0.1 * (pair % 5);
        if (pair % 4 == 0) {
            // Lattice points create exact distance ties.
            ref = ref.array().round().matrix();
            gen = gen.array().round().matrix();
        }
        const auto fast = precision_recall(ref, gen, 3);
        const auto slow = oracle::brute_force_precision_recall(ref, gen, 3);
        if (fast.precision == slow.first && fast.recall == slow.second) ++exact;
    }
    o.check(exact == 20, "precision/recall differs from brute force");
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(2, 2);
    const double f0 = frechet_from_moments(zero, eye, zero, eye).value;
    const double f4 = frechet_from_moments(zero, eye, Eigen::Vector2d(2, 0), eye).value;
    const double f2 = frechet_from_moments(zero, eye, zero, 4 * eye).value;
    o.check(std::abs(f0) <= 1e-9 && std::abs(f4 - 4) <= 1e-9 && std::abs(f2 - 2) <= 1e-9, "Frechet closed forms");
    o.detail << exact << "/20 pairs exact; Frechet cases " << f0 << ", " << f4 << ", " << f2;
}

// 10 ------------------------------------------------------------------------

void end_to_end(Outcome& o) {
    const auto cfg = config::load_config(std::filesystem::path(GDIFF_SOURCE_DIR) / "configs" / "benchmark.yaml");
    const auto sched = make_schedule(cfg.schedule);
    const auto& mix = cfg.dataset.mixture;
    auto t0 = std::chrono::steady_clock::now();
    const auto denoiser = train_diffusion(mix, cfg.denoiser_architecture(), sched, cfg.training);
    const double train_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::mt19937_64 rng(1010);
    const Batch x0 = sample_mixture(mix, 200000, rng).points;
    const NoiseDraw draw = draw_noise(rng, 200000, mix.dim(), sched.num_steps());
    const double floor = simple_loss_value(AnalyticDenoiser(mix), x0, draw, sched);
    const double achieved = simple_loss_value(denoiser.model, x0, draw, sched);
    o.check(cfg.training.iterations <= 20000, "iteration budget");
    o.check(achieved <= 1.10 * floor, "training loss above 110% of the noise floor");
    o.detail << "L_simple " << achieved << " vs floor " << floor << " (ratio " << achieved / floor << ", "
             << cfg.training.iterations << " iterations, " << static_cast<int>(train_s) << " s); ";

    const auto clf = train_classifier(mix, cfg.classifier_architecture(), sched, cfg.classifier->training);
    const Batch ref = sample_mixture(mix, cfg.metrics.reference_size, cfg.metrics.reference_seed).points;
    SweepRequest req;
    req.scales = cfg.metrics.scales;
    req.samples = cfg.sampler.n;
    req.k = cfg.metrics.k;
    const auto rows = sweep_guidance_scale(denoiser.model, clf.model, mix, sched, cfg.sampler.config, req, ref);
    o.check(req.scales == std::vector<double>({0, 1, 2, 5, 10}), "sweep scales");
    tradeoff_pattern(o, rows);
}

struct Criterion {
    int id;
    const char* name;
    double limit_s;  // 0 = no runtime bound
    std::function<void(Outcome&)> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all = {
        {1, "algebraic identities", 5, algebraic_identities},
        {2, "gradient suite", 30, gradient_suite},
        {3, "score oracle consistency", 5, score_oracle},
        {4, "guided sampling matches class conditional", 300, guided_exactness},
        {5, "guidance trade-off with exact oracles", 600, tradeoff_analytic},
        {6, "DDIM determinism and encode-decode", 120, ddim_roundtrip},
        {7, "temperature neutrality and shrinkage", 120, temperature},
        {8, "schedule respacing", 0, schedule_machinery},
        {9, "metric oracles", 0, metrics_oracles},
        {10, "end-to-end training and guided sweep", 900, end_to_end},
    };
    std::vector<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));

    bool all_pass = true;
    for (const auto& c : all) {
        if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
        Outcome o;
        const auto start = std::chrono::steady_clock::now();
        try {
            c.run(o);
        } catch (const std::exception& e) {
            o.check(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.limit_s > 0) o.check(secs < c.limit_s, "runtime limit exceeded");
        all_pass = all_pass && o.pass;
        char timing[64];
        if (c.limit_s > 0)
            std::snprintf(timing, sizeof timing, "%.1f s, limit %.0f s", secs, c.limit_s);
        else
            std::snprintf(timing, sizeof timing, "%.1f s", secs);
        std::cout << "criterion " << c.id << " (" << c.name << "): " << (o.pass ? "PASS" : "FAIL") << " [" << timing
                  << "] " << o.detail.str() << std::endl;
    }
    return all_pass ? 0 : 1;
}
