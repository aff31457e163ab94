// Command-line front end: synth, sparsify, train, eval, bench, gradcheck, plot.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sparseshot/bench.hpp"
#include "sparseshot/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace sparseshot;

namespace {

std::vector<fs::path> sorted_files(const fs::path& dir, const std::string& ext) {
    if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

// Pairs <dir>/<stem>.pgm with <annos>/<stem>.csv.
std::vector<std::pair<Image, AnnotationSet>> load_pairs(const fs::path& images, const fs::path& annos) {
    std::vector<std::pair<Image, AnnotationSet>> out;
    for (const auto& img : sorted_files(images, ".pgm")) {
        const fs::path csv = annos / (img.stem().string() + ".csv");
        if (!fs::exists(csv)) throw IoError("no annotations for " + img.filename().string() + " (expected " + csv.string() + ")");
        out.emplace_back(load_image(img), load_annotations(csv));
    }
    if (out.empty()) throw EmptyDataset("no .pgm images in " + images.string());
    return out;
}

std::vector<double> parse_fractions(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw InvalidPlan("bad fraction '" + item + "'");
        }
    }
    return out;
}

std::string fraction_tag(double f) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", f);
    return buf;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse-annotation localisation toolkit: exclusive cross-entropy and baselines"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate synthetic cell scenes with exhaustive annotations");
    std::string synth_config, synth_out;
    std::size_t synth_n = 1;
    std::uint64_t synth_seed = 0;
    synth->add_option("--config", synth_config, "Scene config JSON")->check(CLI::ExistingFile);
    synth->add_option("--n", synth_n, "Number of scenes")->check(CLI::PositiveNumber);
    synth->add_option("--seed", synth_seed, "Master seed");
    synth->add_option("--out", synth_out, "Output directory")->required();

    // sparsify
    auto* sparsify_cmd = app.add_subcommand("sparsify", "Write nested annotation variants");
    std::string sp_in, sp_out, sp_fractions;
    std::uint64_t sp_seed = 0;
    sparsify_cmd->add_option("--in", sp_in, "Annotation CSV")->required()->check(CLI::ExistingFile);
    sparsify_cmd->add_option("--fractions", sp_fractions, "Comma-separated increasing fractions")->required();
    sparsify_cmd->add_option("--seed", sp_seed, "Permutation seed");
    sparsify_cmd->add_option("--out-dir", sp_out, "Output directory")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "Train the scorer on images with (sparse) annotations");
    std::string tr_images, tr_annos, tr_out, tr_history, tr_loss = "ece", tr_schedule = "sigmoid";
    TrainConfig tr_cfg;
    double tr_rho = 0.75;
    std::size_t tr_rounds = 0;
    double tr_tau = 0.75;
    train_cmd->add_option("--images", tr_images, "Directory of .pgm images")->required();
    train_cmd->add_option("--annos", tr_annos, "Directory of <stem>.csv annotations")->required();
    train_cmd->add_option("--loss", tr_loss, "ce|focal|huber|ece|focal-ece");
    train_cmd->add_option("--schedule", tr_schedule, "fixed|linear|sigmoid|literal-sigmoid");
    train_cmd->add_option("--rho-max", tr_rho, "Final exclusivity threshold");
    train_cmd->add_option("--epochs", tr_cfg.epochs, "Epochs")->check(CLI::PositiveNumber);
    train_cmd->add_option("--seed", tr_cfg.seed, "Seed");
    train_cmd->add_option("--lr", tr_cfg.learning_rate, "Learning rate");
    train_cmd->add_option("--momentum", tr_cfg.momentum, "Momentum");
    train_cmd->add_option("--hidden", tr_cfg.hidden, "Hidden channels")->check(CLI::PositiveNumber);
    train_cmd->add_option("--kernel", tr_cfg.kernel, "First-layer kernel size")->check(CLI::PositiveNumber);
    train_cmd->add_option("--prior", tr_cfg.output_prior, "Initial foreground probability");
    train_cmd->add_option("--alpha", tr_cfg.loss.alpha, "Focal alpha");
    train_cmd->add_option("--gamma", tr_cfg.loss.gamma, "Focal gamma");
    train_cmd->add_flag("--symmetric-exclusion", tr_cfg.loss.symmetric_exclusion, "Also drop confident negatives");
    train_cmd->add_option("--weak-rounds", tr_rounds, "Run the pseudo-labelling baseline for this many rounds");
    train_cmd->add_option("--tau", tr_tau, "Pseudo-positive threshold");
    train_cmd->add_option("--history", tr_history, "Write step history CSV");
    train_cmd->add_option("--out", tr_out, "Checkpoint path")->required();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint against exhaustive annotations");
    std::string ev_ckpt, ev_images, ev_annos, ev_out;
    EvalConfig ev_cfg;
    eval_cmd->add_option("--ckpt", ev_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--images", ev_images, "Directory of .pgm images")->required();
    eval_cmd->add_option("--annos", ev_annos, "Directory of <stem>.csv annotations")->required();
    eval_cmd->add_option("--radius", ev_cfg.match_radius, "Detection match radius");
    eval_cmd->add_option("--score-threshold", ev_cfg.score_threshold, "Peak score threshold");
    eval_cmd->add_option("--min-distance", ev_cfg.min_distance, "Peak suppression distance");
    eval_cmd->add_option("--out", ev_out, "Metrics CSV")->required();

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "Run an experiment grid from a JSON config");
    std::string bn_config, bn_out;
    std::size_t bn_workers = 1;
    bench_cmd->add_option("--config", bn_config, "Run config JSON (default benchmark if omitted)")->check(CLI::ExistingFile);
    bench_cmd->add_option("--workers", bn_workers, "Concurrent cells")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--out", bn_out, "Output directory (overrides config)");

    // gradcheck
    auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every loss and the scorer");
    std::size_t gc_trials = 100;
    std::uint64_t gc_seed = 7;
    gc_cmd->add_option("--trials", gc_trials, "Random draws per loss")->check(CLI::PositiveNumber);
    gc_cmd->add_option("--seed", gc_seed, "Seed");

    // plot
    auto* plot_cmd = app.add_subcommand("plot", "Fraction-vs-score chart from a results CSV");
    std::string pl_in, pl_out, pl_metric = "dice";
    plot_cmd->add_option("--in", pl_in, "Results CSV")->required()->check(CLI::ExistingFile);
    plot_cmd->add_option("--out", pl_out, "SVG path")->required();
    plot_cmd->add_option("--metric", pl_metric, "Score column")
        ->check(CLI::IsMember({"dice", "f1", "f1_macro", "precision", "recall", "exclusive_recall"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (*synth) {
            SceneConfig base;
            if (!synth_config.empty()) {
                std::ifstream in(synth_config);
                base = scene_config_from_json(nlohmann::json::parse(in));
            }
            fs::create_directories(synth_out);
            for (std::size_t i = 0; i < synth_n; ++i) {
                SceneConfig sc = base;
                sc.seed = derive_seed(synth_seed, i);
                Scene scene = generate_scene(sc);
                char stem[32];
                std::snprintf(stem, sizeof stem, "scene_%03zu", i);
                save_image(fs::path(synth_out) / (std::string(stem) + ".pgm"), scene.image);
                save_annotations(fs::path(synth_out) / (std::string(stem) + ".csv"), scene.truth);
            }
            std::cout << "wrote " << synth_n << " scenes to " << synth_out << '\n';
        } else if (*sparsify_cmd) {
            const AnnotationSet full = load_annotations(sp_in);
            const auto plan = SparsificationPlan::make(full.size(), parse_fractions(sp_fractions), sp_seed);
            const auto variants = sparsify(full, plan);
            fs::create_directories(sp_out);
            const std::string stem = fs::path(sp_in).stem().string();
            for (std::size_t i = 0; i < variants.size(); ++i) {
                const fs::path out = fs::path(sp_out) / (stem + "_f" + fraction_tag(plan.fractions[i]) + ".csv");
                save_annotations(out, variants[i]);
                std::cout << out.string() << ": " << variants[i].size() << " of " << full.size() << '\n';
            }
        } else if (*train_cmd) {
            tr_cfg.loss.variant = parse_loss_variant(tr_loss);
            tr_cfg.schedule.kind = parse_schedule_kind(tr_schedule);
            tr_cfg.schedule.rho_max = tr_rho;
            std::vector<TrainSample> data;
            for (auto& [image, annos] : load_pairs(tr_images, tr_annos)) {
                auto labels = rasterize(annos, image.height(), image.width(), 1);
                data.push_back({std::move(image), std::move(labels)});
            }
            TrainResult result;
            if (tr_rounds > 0) {
                auto ws = weak_supervision_train(data, WeakSupConfig{tr_rounds, tr_tau, tr_cfg});
                result = TrainResult{std::move(ws.params), std::move(ws.history)};
            } else {
                result = train(data, tr_cfg);
            }
            save_checkpoint(tr_out, result.params);
            if (!tr_history.empty()) {
                std::ofstream h(tr_history);
                write_history_csv(h, result.history);
            }
            const auto& steps = result.history.steps;
            std::cout << "trained " << steps.size() << " steps, final loss " << steps.back().loss << " -> " << tr_out
                      << '\n';
        } else if (*eval_cmd) {
            const ScorerParams params = load_checkpoint(ev_ckpt);
            std::vector<EvalSample> test;
            for (auto& [image, annos] : load_pairs(ev_images, ev_annos)) test.push_back({std::move(image), std::move(annos)});
            std::ofstream out(ev_out);
            if (!out) throw IoError("cannot write " + ev_out);
            out << "image,dice,precision,recall,f1,exclusive_recall,tp,fp,fn\n";
            auto emit = [&](const std::string& name, const MetricReport& r) {
                char buf[256];
                std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%zu,%zu,%zu\n", name.c_str(), r.dice,
                              r.precision, r.recall, r.f1, r.exclusive_recall, r.tp, r.fp, r.fn);
                out << buf;
            };
            for (std::size_t i = 0; i < test.size(); ++i) {
                emit(test[i].truth.image_id().empty() ? std::to_string(i) : test[i].truth.image_id(),
                     evaluate(params, {test[i]}, ev_cfg));
            }
            const MetricReport all = evaluate(params, test, ev_cfg);
            emit("all", all);
            std::cout << "dice " << all.dice << " f1 " << all.f1 << " exclusive recall " << all.exclusive_recall << '\n';
        } else if (*bench_cmd) {
            RunConfig cfg = bn_config.empty() ? default_run_config() : load_run_config(bn_config);
            if (!bn_out.empty()) cfg.output_dir = bn_out;
            const auto csv = run_grid(cfg, bn_workers);
            std::cout << "results: " << csv.string() << '\n';
        } else if (*gc_cmd) {
            bool ok = true;
            for (const auto& r : run_gradcheck_suite(gc_trials, gc_seed)) {
                std::printf("%-28s %s  checked %zu  skipped %zu  failures %zu  worst |err| %.3g\n", r.name.c_str(),
                            r.passed() ? "ok  " : "FAIL", r.checked, r.skipped, r.failures, r.worst_abs_error);
                ok = ok && r.passed();
            }
            return ok ? 0 : 1;
        } else if (*plot_cmd) {
            plot(pl_in, pl_out, pl_metric);
            std::cout << "wrote " << pl_out << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
