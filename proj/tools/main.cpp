// tfb: train small adapted networks, Bayesianize them without retraining,
// evaluate, and self-verify the covariance/KL mathematics.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tfb/adapter.hpp"
#include "tfb/data.hpp"
#include "tfb/errors.hpp"
#include "tfb/inference.hpp"
#include "tfb/io.hpp"
#include "tfb/metrics.hpp"
#include "tfb/netcore.hpp"
#include "tfb/oracle.hpp"
#include "tfb/search.hpp"
#include "tfb/util.hpp"

namespace {

using namespace tfb;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitVerification = 4;

std::vector<double> parse_double_list(const std::string& text, const char* what) {
    std::vector<double> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ValidationError(std::string(what) + ": cannot parse '" + item + "'");
        }
    }
    if (out.empty()) throw ValidationError(std::string(what) + ": empty list");
    return out;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
    std::string task = "toy-cubic";
    std::string out;
    std::string dump_data;
    std::uint64_t seed = 7;
    std::uint64_t data_seed = 42;
    std::size_t steps = 1000;
    double lr = 0.1;
    double weight_decay = 0.0;
    std::size_t hidden = 16;
    std::size_t rank = 1;
    std::string activation = "tanh";
    std::size_t classes = 3;
    std::size_t per_class = 100;
    double separation = 3.0;
};

int cmd_train(const TrainArgs& args) {
    Dataset data;
    std::vector<LayerSpec> specs;
    Task task;
    LossKind loss;

    const Activation hidden_act = activation_from_name(args.activation);
    if (args.task == "toy-cubic") {
        task = Task::Regression;
        loss = LossKind::MSE;
        data = toy_cubic(args.data_seed);
        specs = {
            LayerSpec{LayerKind::DenseAdapted, 1, args.hidden, 1, hidden_act},
            LayerSpec{LayerKind::DenseAdapted, args.hidden, 1, 1, Activation::Identity},
        };
    } else if (args.task == "toy-blobs") {
        task = Task::Classification;
        loss = LossKind::SoftmaxCrossEntropy;
        data = toy_blobs(args.classes, args.per_class, args.separation, args.data_seed);
        const std::size_t rank =
            std::min({args.rank, std::size_t{2}, args.classes});
        specs = {
            LayerSpec{LayerKind::DenseAdapted, 2, args.hidden, rank, hidden_act},
            LayerSpec{LayerKind::DenseAdapted, args.hidden, args.classes,
                      std::min(args.rank, args.classes), Activation::Identity},
        };
    } else {
        throw ValidationError("train: unknown task '" + args.task +
                              "' (expected toy-cubic or toy-blobs)");
    }

    Network net = init_network(specs, args.seed);
    TrainResult trained = train_adam(std::move(net), data, loss, args.steps, args.lr,
                                     args.weight_decay);

    ModelCheckpoint ckpt;
    ckpt.task = task;
    ckpt.net = std::move(trained.net);
    ckpt.meta = CheckpointMeta{args.seed, static_cast<std::int64_t>(args.steps), args.lr};
    io::save_checkpoint(ckpt, args.out);

    if (!args.dump_data.empty()) io::save_dataset(data, args.dump_data);

    const double final_loss = trained.loss_curve.empty() ? 0.0 : trained.loss_curve.back();
    std::cout << "trained " << args.task << ": steps=" << args.steps
              << " final_loss=" << io::format_double(final_loss) << " -> " << args.out << "\n";
    return kExitOk;
}

// --- bayesianize -------------------------------------------------------------

struct BayesianizeArgs {
    std::string checkpoint;
    std::string out;
    std::string anchor_data;
    std::string family = "low_rank_isotropic";
    std::string metric = "nll";
    std::string search = "binary";  // binary | grid | none
    double sigma = -1.0;            // forced budget for --search none
    double epsilon = -1.0;          // default resolved per metric
    std::string epsilon_mode = "relative";
    double bracket_lo = 0.001;
    double bracket_hi = 0.015;
    int rounds = 5;
    int mc_samples = 10;
    std::uint64_t seed = 0;
    std::size_t anchor_size = 500;
    std::uint64_t anchor_seed = 1;
    bool pseudo = false;
    std::string grid;
    std::string trace_csv;
    std::string trace_json;
};

int cmd_bayesianize(const BayesianizeArgs& args) {
    ModelCheckpoint ckpt = io::load_checkpoint(args.checkpoint);
    const PosteriorFamily family = family_from_name(args.family);
    const MetricKind metric = metric_from_name(args.metric);

    double sigma_star;
    if (args.search == "none") {
        if (!(args.sigma >= 0.0)) {
            throw ValidationError("bayesianize: --search none needs --sigma >= 0");
        }
        sigma_star = args.sigma;
    } else {
        if (args.anchor_data.empty()) {
            throw ValidationError("bayesianize: searching needs --anchor-data");
        }
        Dataset anchor = io::load_dataset(args.anchor_data);
        if (args.pseudo) anchor = pseudo_label(ckpt.net, anchor);
        if (!anchor.labeled()) {
            throw ValidationError(
                "bayesianize: anchor has no targets; pass --pseudo-label for unlabeled data");
        }
        if (args.anchor_size < anchor.size()) {
            anchor = select_anchor(anchor, args.anchor_size, args.anchor_seed);
        }

        SearchConfig cfg;
        cfg.metric = metric;
        cfg.tolerance_mode = args.epsilon_mode == "absolute" ? ToleranceMode::Absolute
                                                             : ToleranceMode::RelativeFraction;
        if (args.epsilon_mode != "absolute" && args.epsilon_mode != "relative") {
            throw ValidationError("bayesianize: --epsilon-mode must be relative or absolute");
        }
        cfg.epsilon = args.epsilon >= 0.0
                          ? args.epsilon
                          : (metric == MetricKind::ACC ? 0.01 : 0.003);
        cfg.bracket_lo = args.bracket_lo;
        cfg.bracket_hi = args.bracket_hi;
        cfg.max_rounds = args.rounds;
        cfg.mc_samples = args.mc_samples;
        cfg.seed = args.seed;
        cfg.family = family;

        if (args.search == "binary") {
            const SearchTrace trace = binary_search_sigma(ckpt.net, anchor, cfg);
            sigma_star = trace.result_sigma;
            if (!args.trace_csv.empty()) io::save_search_trace_csv(trace, args.trace_csv);
            if (!args.trace_json.empty()) io::save_search_trace_json(trace, args.trace_json);
            std::cout << "binary search: p0=" << io::format_double(trace.p0)
                      << " eps_abs=" << io::format_double(trace.epsilon_abs)
                      << " sigma=" << io::format_double(sigma_star)
                      << (trace.any_accepted ? "" : " (no probe accepted; bracket floor)")
                      << "\n";
        } else if (args.search == "grid") {
            std::vector<double> grid;
            if (args.grid.empty()) {
                const auto def = default_sigma_grid();
                grid.assign(def.begin(), def.end());
            } else {
                grid = parse_double_list(args.grid, "bayesianize --grid");
            }
            const double p0 =
                evaluate(ckpt.net, nullptr, anchor, cfg.metric, 0, cfg.seed).value;
            const double drop = cfg.tolerance_mode == ToleranceMode::Absolute
                                    ? cfg.epsilon
                                    : cfg.epsilon * std::fabs(p0);
            const GridResult result =
                grid_interpolated_sigma(ckpt.net, anchor, grid, drop, cfg);
            sigma_star = result.sigma_star;
            if (!args.trace_csv.empty()) io::save_grid_result_csv(result, args.trace_csv);
            if (!args.trace_json.empty()) io::save_grid_result_json(result, args.trace_json);
            std::cout << "grid search: p0=" << io::format_double(result.p0)
                      << " target=" << io::format_double(result.target)
                      << " sigma=" << io::format_double(sigma_star)
                      << (result.clamped ? " (clamped to grid edge)" : "") << "\n";
        } else {
            throw ValidationError("bayesianize: --search must be binary, grid or none");
        }
    }

    // Record the posterior: keep original factors, store per-layer d plus the
    // shared budget. The spectra double as a load-time consistency check.
    CheckpointPosterior post;
    post.family = family_name(family);
    post.sigma_q = sigma_star;
    for (const Layer& layer : ckpt.net.layers) {
        if (layer.spec.kind != LayerKind::DenseAdapted) {
            post.d.emplace_back();
            continue;
        }
        const BayesianAdapter bayes =
            bayesianize(LoraAdapter{layer.w0, layer.b, layer.a}, sigma_star);
        post.d.push_back(bayes.d);
    }
    ckpt.posterior = std::move(post);
    io::save_checkpoint(ckpt, args.out);
    std::cout << "bayesianized checkpoint -> " << args.out
              << " (sigma_q=" << io::format_double(sigma_star) << ", family=" << args.family
              << ")\n";
    return kExitOk;
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint;
    std::string data;
    std::string metrics = "";
    std::string out;
    int mc_samples = 10;
    std::uint64_t seed = 0;
    bool deterministic = false;
    std::string convention = "averaged";
};

int cmd_eval(const EvalArgs& args) {
    const ModelCheckpoint ckpt = io::load_checkpoint(args.checkpoint);
    const Dataset data = io::load_dataset(args.data);
    if (data.task != ckpt.task) {
        throw ValidationError("eval: checkpoint task is " +
                              std::string(task_name(ckpt.task)) + " but the dataset is " +
                              task_name(data.task));
    }

    std::string metric_list = args.metrics;
    if (metric_list.empty()) {
        metric_list = ckpt.task == Task::Classification ? "nll,acc,ece" : "mse";
    }

    McConvention convention;
    if (args.convention == "averaged") {
        convention = McConvention::AveragedPredictive;
    } else if (args.convention == "expected") {
        convention = McConvention::ExpectedMetric;
    } else {
        throw ValidationError("eval: --convention must be averaged or expected");
    }

    std::optional<NetworkPosterior> posterior;
    if (!args.deterministic) {
        if (!ckpt.posterior.has_value()) {
            throw ValidationError(
                "eval: checkpoint has no posterior; run bayesianize first or pass "
                "--deterministic");
        }
        posterior = bayesianize_network(ckpt.net, ckpt.posterior->sigma_q,
                                        family_from_name(ckpt.posterior->family));
        // Cross-check the stored spectra against the recomputed ones.
        for (std::size_t l = 0; l < ckpt.net.layers.size(); ++l) {
            if (!posterior->layers[l].has_value()) continue;
            const auto& stored = ckpt.posterior->d[l];
            const auto& fresh = posterior->layers[l]->d;
            if (stored.size() != fresh.size()) {
                throw ValidationError("eval: stored spectrum length mismatch at layer " +
                                      std::to_string(l));
            }
            for (std::size_t i = 0; i < stored.size(); ++i) {
                if (std::fabs(stored[i] - fresh[i]) > 1e-9 * std::max(1.0, fresh[i])) {
                    throw NumericError("eval: stored spectrum disagrees with tensors at layer " +
                                       std::to_string(l));
                }
            }
        }
    }

    std::vector<MetricReport> reports;
    std::vector<std::pair<int, std::uint64_t>> mc_and_seed;
    std::stringstream names(metric_list);
    std::string name;
    while (std::getline(names, name, ',')) {
        if (name.empty()) continue;
        const MetricKind kind = metric_from_name(name);
        const MetricReport report =
            evaluate(ckpt.net, posterior.has_value() ? &*posterior : nullptr, data, kind,
                     args.mc_samples, args.seed, convention);
        reports.push_back(report);
        mc_and_seed.emplace_back(report.sample_count, args.seed);
        std::cout << metric_name(kind) << " = " << io::format_double(report.value)
                  << (posterior.has_value()
                          ? " (mc_samples=" + std::to_string(args.mc_samples) + ")"
                          : " (deterministic)")
                  << "\n";
    }

    if (!args.out.empty()) io::save_metric_reports_csv(reports, mc_and_seed, args.out);
    return kExitOk;
}

// --- demo-toy ------------------------------------------------------------------

struct DemoArgs {
    std::string out_dir;
    std::uint64_t seed = 7;
    std::uint64_t data_seed = 42;
    std::size_t steps = 1000;
    double lr = 0.1;
    int mc_samples = 10;
    std::string sigmas = "0.1,0.3,0.6,1.0,1.5";
    std::string activation = "tanh";
};

int cmd_demo_toy(const DemoArgs& args) {
    namespace fs = std::filesystem;
    fs::create_directories(args.out_dir);

    const Dataset data = toy_cubic(args.data_seed);
    const Activation hidden_act = activation_from_name(args.activation);
    const std::vector<LayerSpec> specs = {
        LayerSpec{LayerKind::DenseAdapted, 1, 16, 1, hidden_act},
        LayerSpec{LayerKind::DenseAdapted, 16, 1, 1, Activation::Identity},
    };
    Network net = init_network(specs, args.seed);
    TrainResult trained =
        train_adam(std::move(net), data, LossKind::MSE, args.steps, args.lr, 0.0);
    const double train_mse = trained.loss_curve.back();
    std::cout << "toy MLE trained: mse=" << io::format_double(train_mse) << "\n";

    std::vector<double> x_grid;
    for (double x = -6.0; x <= 6.0 + 1e-12; x += 0.25) x_grid.push_back(x);

    // Deterministic MLE curve for the predictive-difference summary.
    std::vector<double> mle(x_grid.size());
    for (std::size_t i = 0; i < x_grid.size(); ++i) {
        mle[i] = forward(trained.net, std::vector<double>{x_grid[i]})[0];
    }

    const std::vector<double> sigmas = parse_double_list(args.sigmas, "demo-toy --sigmas");
    std::vector<std::pair<double, std::vector<BandRow>>> sections;
    std::ostringstream summary;
    summary << "sigma_q,mean_sq_diff\n";

    for (double sigma : sigmas) {
        const NetworkPosterior posterior =
            bayesianize_network(trained.net, sigma, PosteriorFamily::FullRankIsotropic);
        PredictionConfig cfg;
        cfg.mc_samples = args.mc_samples;
        cfg.seed = args.seed;  // same seed per section: common random numbers
        const std::vector<BandRow> band =
            prediction_band(trained.net, posterior, x_grid, cfg);

        std::vector<double> sq(x_grid.size());
        for (std::size_t i = 0; i < x_grid.size(); ++i) {
            const double diff = band[i].mean - mle[i];
            sq[i] = diff * diff;
        }
        const double mean_sq = pairwise_mean(sq);
        summary << io::format_double(sigma) << ',' << io::format_double(mean_sq) << '\n';
        std::cout << "sigma_q=" << io::format_double(sigma)
                  << " mean_sq_diff=" << io::format_double(mean_sq) << "\n";
        sections.emplace_back(sigma, band);
    }

    const fs::path dir(args.out_dir);
    io::save_bands_csv(sections, dir / "bands.csv");
    io::write_text_file(dir / "summary.csv", summary.str());
    std::cout << "wrote " << (dir / "bands.csv").string() << " and "
              << (dir / "summary.csv").string() << "\n";
    return kExitOk;
}

// --- verify ---------------------------------------------------------------------

int cmd_verify(bool inject_fault, const std::string& json_out) {
    VerificationOptions opts;
    opts.inject_fault = inject_fault;
    const std::vector<CheckResult> results = run_verification(opts);

    int failures = 0;
    for (const CheckResult& check : results) {
        if (!check.pass) ++failures;
        std::cout << (check.pass ? "[PASS] " : "[FAIL] ") << check.name << " " << check.detail
                  << "\n";
    }
    std::cout << "verification: " << (results.size() - failures) << "/" << results.size()
              << " checks passed\n";

    if (!json_out.empty()) {
        nlohmann::json root = nlohmann::json::array();
        for (const CheckResult& check : results) {
            root.push_back(
                {{"name", check.name}, {"pass", check.pass}, {"detail", check.detail}});
        }
        io::write_text_file(json_out, root.dump(2) + "\n");
    }
    return failures == 0 ? kExitOk : kExitVerification;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "tfb: tolerance-constrained Bayesianization of low-rank adapters on small networks"};
    app.require_subcommand(1);

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "Train a toy adapted network (MAP/MLE)");
    train->add_option("--task", train_args.task, "toy-cubic or toy-blobs");
    train->add_option("--out", train_args.out, "checkpoint path")->required();
    train->add_option("--dump-data", train_args.dump_data, "also write the training CSV here");
    train->add_option("--seed", train_args.seed, "init seed");
    train->add_option("--data-seed", train_args.data_seed, "dataset seed");
    train->add_option("--steps", train_args.steps, "full-batch Adam steps");
    train->add_option("--lr", train_args.lr, "learning rate");
    train->add_option("--weight-decay", train_args.weight_decay, "l2 on trainable parameters");
    train->add_option("--hidden", train_args.hidden, "hidden width");
    train->add_option("--rank", train_args.rank, "adapter rank");
    train->add_option("--activation", train_args.activation, "hidden activation");
    train->add_option("--classes", train_args.classes, "toy-blobs classes");
    train->add_option("--per-class", train_args.per_class, "toy-blobs points per class");
    train->add_option("--separation", train_args.separation, "toy-blobs center separation");

    BayesianizeArgs bayes_args;
    CLI::App* bayes = app.add_subcommand(
        "bayesianize", "Attach a variance budget to a trained checkpoint (no retraining)");
    bayes->add_option("--checkpoint", bayes_args.checkpoint, "input checkpoint")->required();
    bayes->add_option("--out", bayes_args.out, "output checkpoint")->required();
    bayes->add_option("--anchor-data", bayes_args.anchor_data, "anchor dataset CSV");
    bayes->add_option("--family", bayes_args.family,
                      "low_rank_isotropic | full_rank_isotropic | constant_std");
    bayes->add_option("--metric", bayes_args.metric, "search metric (nll, acc, ...)");
    bayes->add_option("--search", bayes_args.search, "binary | grid | none");
    bayes->add_option("--sigma", bayes_args.sigma, "forced budget for --search none");
    bayes->add_option("--epsilon", bayes_args.epsilon, "tolerance (default 0.003 nll / 0.01 acc)");
    bayes->add_option("--epsilon-mode", bayes_args.epsilon_mode, "relative | absolute");
    bayes->add_option("--bracket-lo", bayes_args.bracket_lo, "search bracket floor");
    bayes->add_option("--bracket-hi", bayes_args.bracket_hi, "search bracket ceiling");
    bayes->add_option("--rounds", bayes_args.rounds, "bisection rounds");
    bayes->add_option("--mc-samples", bayes_args.mc_samples, "MC samples per probe");
    bayes->add_option("--seed", bayes_args.seed, "noise seed (common random numbers)");
    bayes->add_option("--anchor-size", bayes_args.anchor_size, "anchor subsample size");
    bayes->add_option("--anchor-seed", bayes_args.anchor_seed, "anchor subsample seed");
    bayes->add_flag("--pseudo-label", bayes_args.pseudo,
                    "label the anchor with the model's own predictions");
    bayes->add_option("--grid", bayes_args.grid, "comma-separated sigma grid (grid mode)");
    bayes->add_option("--trace-csv", bayes_args.trace_csv, "write the probe table here");
    bayes->add_option("--trace-json", bayes_args.trace_json, "write the search trace here");

    EvalArgs eval_args;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "checkpoint path")->required();
    eval_cmd->add_option("--data", eval_args.data, "dataset CSV")->required();
    eval_cmd->add_option("--metrics", eval_args.metrics,
                         "comma-separated (default nll,acc,ece or mse)");
    eval_cmd->add_option("--out", eval_args.out, "metric report CSV");
    eval_cmd->add_option("--mc-samples", eval_args.mc_samples, "MC samples");
    eval_cmd->add_option("--seed", eval_args.seed, "noise seed");
    eval_cmd->add_flag("--deterministic", eval_args.deterministic,
                       "ignore any stored posterior");
    eval_cmd->add_option("--convention", eval_args.convention,
                         "averaged (predictive first) | expected (metric per sample)");

    DemoArgs demo_args;
    CLI::App* demo = app.add_subcommand(
        "demo-toy", "1-D cubic-regression demo: train, Bayesianize at several budgets, dump bands");
    demo->add_option("--out-dir", demo_args.out_dir, "output directory")->required();
    demo->add_option("--seed", demo_args.seed, "init/noise seed");
    demo->add_option("--data-seed", demo_args.data_seed, "dataset seed");
    demo->add_option("--steps", demo_args.steps, "training steps");
    demo->add_option("--lr", demo_args.lr, "learning rate");
    demo->add_option("--mc-samples", demo_args.mc_samples, "MC samples per band");
    demo->add_option("--sigmas", demo_args.sigmas, "comma-separated budgets");
    demo->add_option("--activation", demo_args.activation, "hidden activation");

    bool inject_fault = false;
    std::string verify_json;
    CLI::App* verify = app.add_subcommand("verify", "Run the covariance/KL self-checks");
    verify->add_flag("--inject-fault", inject_fault,
                     "corrupt one omega entry; exactly one identity check must fail");
    verify->add_option("--json", verify_json, "write results as JSON");

    try {
        app.parse(argc, argv);
        if (train->parsed()) return cmd_train(train_args);
        if (bayes->parsed()) return cmd_bayesianize(bayes_args);
        if (eval_cmd->parsed()) return cmd_eval(eval_args);
        if (demo->parsed()) return cmd_demo_toy(demo_args);
        if (verify->parsed()) return cmd_verify(inject_fault, verify_json);
        return kExitValidation;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitValidation;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const RankDeficiencyError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const ShapeError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const SizeCapError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
}
