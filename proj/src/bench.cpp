#include "sparseshot/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace sparseshot {

using nlohmann::json;

namespace {

Range range_from_json(const json& j, const char* key, Range fallback) {
    if (!j.contains(key)) return fallback;
    const auto& r = j.at(key);
    if (!r.is_array() || r.size() != 2) throw FormatError(std::string(key) + " must be a [min, max] pair");
    return Range{r[0].get<double>(), r[1].get<double>()};
}

json range_to_json(const Range& r) { return json::array({r.min, r.max}); }

ScheduleSpec schedule_from_json(const json& j) {
    ScheduleSpec s;
    s.kind = parse_schedule_kind(j.value("kind", std::string(to_string(s.kind))));
    s.rho_max = j.value("rho_max", s.rho_max);
    s.steepness = j.value("steepness", s.steepness);
    return s;
}

json schedule_to_json(const ScheduleSpec& s) {
    return {{"kind", std::string(to_string(s.kind))}, {"rho_max", s.rho_max}, {"steepness", s.steepness}};
}

LossEntry loss_from_json(const json& j) {
    LossEntry e;
    e.params.variant = parse_loss_variant(j.value("variant", j.value("name", std::string("ce"))));
    e.name = j.value("name", std::string(to_string(e.params.variant)));
    e.params.alpha = j.value("alpha", e.params.alpha);
    e.params.gamma = j.value("gamma", e.params.gamma);
    e.params.huber_delta = j.value("huber_delta", e.params.huber_delta);
    e.params.symmetric_exclusion = j.value("symmetric_exclusion", e.params.symmetric_exclusion);
    // Only the gated variants read the threshold; the rest run a fixed rho of 1.
    if (e.params.variant != LossVariant::ECE && e.params.variant != LossVariant::FocalECE)
        e.schedule = ScheduleSpec{ScheduleKind::Fixed, 1.0, 12.0, 1};
    if (j.contains("schedule")) e.schedule = schedule_from_json(j.at("schedule"));
    if (j.contains("weak_supervision")) {
        const auto& w = j.at("weak_supervision");
        e.weak_supervision = WeakSupSettings{w.value("rounds", std::size_t{3}), w.value("tau", 0.75)};
    }
    return e;
}

json loss_to_json(const LossEntry& e) {
    json j{{"name", e.name},
           {"variant", std::string(to_string(e.params.variant))},
           {"alpha", e.params.alpha},
           {"gamma", e.params.gamma},
           {"huber_delta", e.params.huber_delta},
           {"symmetric_exclusion", e.params.symmetric_exclusion},
           {"schedule", schedule_to_json(e.schedule)}};
    if (e.weak_supervision) j["weak_supervision"] = {{"rounds", e.weak_supervision->rounds}, {"tau", e.weak_supervision->tau}};
    return j;
}

std::string format_score(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string schedule_label(const LossEntry& e) {
    if (e.weak_supervision) {
        char buf[48];
        std::snprintf(buf, sizeof buf, "pseudo-label-tau%g", e.weak_supervision->tau);
        return buf;
    }
    if (e.params.variant != LossVariant::ECE && e.params.variant != LossVariant::FocalECE) return "none";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s-rho%g", std::string(to_string(e.schedule.kind)).c_str(), e.schedule.rho_max);
    return buf;
}

}  // namespace

void RunConfig::validate() const {
    scene.validate();
    if (n_train_scenes < 1 || n_test_scenes < 1) throw InvalidConfig("scene counts must be positive");
    if (fractions.empty() || losses.empty() || seeds.empty()) throw InvalidConfig("fractions, losses and seeds must be nonempty");
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        if (!(fractions[i] > 0.0 && fractions[i] <= 1.0)) throw InvalidConfig("fractions must lie in (0,1]");
        if (i && !(fractions[i] > fractions[i - 1])) throw InvalidConfig("fractions must be increasing");
    }
    for (const auto& l : losses) {
        l.params.validate();
        l.schedule.validate();
        if (l.weak_supervision && (l.weak_supervision->rounds < 1 || !(l.weak_supervision->tau > 0.0 && l.weak_supervision->tau < 1.0)))
            throw InvalidConfig("weak supervision needs rounds >= 1 and tau in (0,1)");
    }
    train.validate();
    eval.validate();
}

SceneConfig scene_config_from_json(const json& j) {
    SceneConfig c;
    c.height = j.value("height", c.height);
    c.width = j.value("width", c.width);
    c.n_cells_class1 = j.value("n_cells_class1", c.n_cells_class1);
    c.n_cells_class2 = j.value("n_cells_class2", c.n_cells_class2);
    c.radius_range = range_from_json(j, "radius_range", c.radius_range);
    c.radius_range_class2 = range_from_json(j, "radius_range_class2", c.radius_range_class2);
    c.intensity_class1 = range_from_json(j, "intensity_range_class1", c.intensity_class1);
    c.intensity_class2 = range_from_json(j, "intensity_range_class2", c.intensity_class2);
    c.noise_std = j.value("noise_std", c.noise_std);
    c.min_separation = j.value("min_separation", c.min_separation);
    c.seed = j.value("seed", c.seed);
    return c;
}

json to_json(const SceneConfig& c) {
    return {{"height", c.height},
            {"width", c.width},
            {"n_cells_class1", c.n_cells_class1},
            {"n_cells_class2", c.n_cells_class2},
            {"radius_range", range_to_json(c.radius_range)},
            {"radius_range_class2", range_to_json(c.radius_range_class2)},
            {"intensity_range_class1", range_to_json(c.intensity_class1)},
            {"intensity_range_class2", range_to_json(c.intensity_class2)},
            {"noise_std", c.noise_std},
            {"min_separation", c.min_separation},
            {"seed", c.seed}};
}

RunConfig run_config_from_json(const json& j) {
    try {
        RunConfig c;
        if (j.contains("scene")) c.scene = scene_config_from_json(j.at("scene"));
        c.n_train_scenes = j.value("n_train_scenes", c.n_train_scenes);
        c.n_test_scenes = j.value("n_test_scenes", c.n_test_scenes);
        c.fractions = j.at("fractions").get<std::vector<double>>();
        for (const auto& l : j.at("losses")) c.losses.push_back(loss_from_json(l));
        c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (j.contains("train")) {
            const auto& t = j.at("train");
            c.train.epochs = t.value("epochs", c.train.epochs);
            c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
            c.train.momentum = t.value("momentum", c.train.momentum);
            c.train.hidden = t.value("hidden", c.train.hidden);
            c.train.kernel = t.value("kernel", c.train.kernel);
            c.train.output_prior = t.value("output_prior", c.train.output_prior);
        }
        if (j.contains("eval")) {
            const auto& e = j.at("eval");
            c.eval.binarize_threshold = e.value("binarize_threshold", c.eval.binarize_threshold);
            c.eval.score_threshold = e.value("score_threshold", c.eval.score_threshold);
            c.eval.min_distance = e.value("min_distance", c.eval.min_distance);
            c.eval.match_radius = e.value("match_radius", c.eval.match_radius);
        }
        c.output_dir = j.value("output_dir", c.output_dir.string());
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw FormatError(std::string("run config: ") + e.what());
    }
}

json to_json(const RunConfig& c) {
    json losses = json::array();
    for (const auto& l : c.losses) losses.push_back(loss_to_json(l));
    return {{"scene", to_json(c.scene)},
            {"n_train_scenes", c.n_train_scenes},
            {"n_test_scenes", c.n_test_scenes},
            {"fractions", c.fractions},
            {"losses", losses},
            {"seeds", c.seeds},
            {"train",
             {{"epochs", c.train.epochs},
              {"learning_rate", c.train.learning_rate},
              {"momentum", c.train.momentum},
              {"hidden", c.train.hidden},
              {"kernel", c.train.kernel},
              {"output_prior", c.train.output_prior}}},
            {"eval",
             {{"binarize_threshold", c.eval.binarize_threshold},
              {"score_threshold", c.eval.score_threshold},
              {"min_distance", c.eval.min_distance},
              {"match_radius", c.eval.match_radius}}},
            {"output_dir", c.output_dir.string()}};
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return run_config_from_json(j);
}

RunConfig default_run_config() {
    RunConfig c;
    c.fractions = {0.1, 0.2, 0.3, 0.4, 1.0};
    LossEntry ce;
    ce.name = "ce";
    ce.params.variant = LossVariant::CE;
    ce.schedule = ScheduleSpec{ScheduleKind::Fixed, 1.0, 12.0, 1};
    LossEntry ece;
    ece.name = "ece";
    ece.params.variant = LossVariant::ECE;
    ece.schedule = ScheduleSpec{ScheduleKind::Sigmoid, 0.75, 12.0, 1};
    c.losses = {ce, ece};
    c.seeds = {1, 2, 3, 4, 5};
    c.train.epochs = 20;
    c.train.hidden = 32;
    c.eval.match_radius = c.scene.radius_range.max;
    return c;
}

CellData build_cell_data(const RunConfig& cfg, double fraction, std::uint64_t seed) {
    CellData data;
    for (std::size_t i = 0; i < cfg.n_train_scenes; ++i) {
        SceneConfig sc = cfg.scene;
        sc.seed = derive_seed(seed, i);
        Scene scene = generate_scene(sc);
        AnnotationSet relevant = scene.truth.of_class(1);
        AnnotationSet kept;
        if (!relevant.empty()) {
            // The plan spans every configured fraction so variants nest across cells.
            auto fractions = cfg.fractions;
            if (std::find(fractions.begin(), fractions.end(), fraction) == fractions.end()) {
                fractions.push_back(fraction);
                std::sort(fractions.begin(), fractions.end());
            }
            auto plan = SparsificationPlan::make(relevant.size(), fractions, derive_seed(seed, 2000 + i));
            auto variants = sparsify(relevant, plan);
            kept = variants[static_cast<std::size_t>(std::find(fractions.begin(), fractions.end(), fraction) -
                                                     fractions.begin())];
        }
        data.train.push_back({scene.image, rasterize(kept, sc.height, sc.width, 1)});
    }
    for (std::size_t j = 0; j < cfg.n_test_scenes; ++j) {
        SceneConfig sc = cfg.scene;
        sc.seed = derive_seed(seed, 1000 + j);
        Scene scene = generate_scene(sc);
        data.test.push_back({std::move(scene.image), std::move(scene.truth)});
    }
    return data;
}

ResultRow run_cell(const RunConfig& cfg, std::size_t fraction_index, std::size_t loss_index, std::uint64_t seed) {
    const auto start = std::chrono::steady_clock::now();
    const LossEntry& entry = cfg.losses.at(loss_index);
    ResultRow row;
    row.fraction = cfg.fractions.at(fraction_index);
    row.loss_name = entry.name;
    row.schedule_name = schedule_label(entry);
    row.seed = seed;
    row.match_radius = cfg.eval.match_radius;

    try {
        CellData data = build_cell_data(cfg, row.fraction, seed);
        TrainConfig tc = cfg.train;
        tc.loss = entry.params;
        tc.schedule = entry.schedule;
        tc.seed = derive_seed(seed, 3000);
        ScorerParams params;
        if (entry.weak_supervision) {
            WeakSupConfig wc{entry.weak_supervision->rounds, entry.weak_supervision->tau, tc};
            params = weak_supervision_train(data.train, wc).params;
        } else {
            params = train(data.train, tc).params;
        }
        MetricReport report = evaluate(params, data.test, cfg.eval);
        row.dice = report.dice;
        row.f1 = report.f1;
        row.f1_macro = report.f1_macro;
        row.precision = report.precision;
        row.recall = report.recall;
        row.exclusive_recall = report.exclusive_recall;
    } catch (const Diverged& e) {
        row.error = e.what();
    }
    std::replace(row.error.begin(), row.error.end(), ',', ';');
    row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return row;
}

std::vector<ResultRow> run_grid_rows(const RunConfig& cfg, std::size_t workers) {
    cfg.validate();
    struct Cell {
        std::size_t fraction, loss, seed;
    };
    std::vector<Cell> cells;
    for (std::size_t f = 0; f < cfg.fractions.size(); ++f)
        for (std::size_t l = 0; l < cfg.losses.size(); ++l)
            for (std::size_t s = 0; s < cfg.seeds.size(); ++s) cells.push_back({f, l, s});

    std::vector<ResultRow> rows(cells.size());
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr failure;
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < cells.size();) {
            try {
                rows[i] = run_cell(cfg, cells[i].fraction, cells[i].loss, cfg.seeds[cells[i].seed]);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!failure) failure = std::current_exception();
                next = cells.size();
            }
        }
    };
    workers = std::clamp<std::size_t>(workers, 1, cells.size());
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return rows;
}

const char* const kResultsHeader =
    "fraction,loss,schedule,seed,dice,f1,f1_macro,precision,recall,exclusive_recall,match_radius,error,wall_seconds";

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
    out << kResultsHeader << '\n';
    for (const auto& r : rows) {
        const bool ok = r.error.empty();
        auto score = [&](double v) { return ok ? format_score(v) : std::string(); };
        char frac[32], wall[32], radius[32];
        std::snprintf(frac, sizeof frac, "%g", r.fraction);
        std::snprintf(radius, sizeof radius, "%g", r.match_radius);
        std::snprintf(wall, sizeof wall, "%.3f", r.wall_seconds);
        out << frac << ',' << r.loss_name << ',' << r.schedule_name << ',' << r.seed << ',' << score(r.dice) << ','
            << score(r.f1) << ',' << score(r.f1_macro) << ',' << score(r.precision) << ',' << score(r.recall) << ','
            << score(r.exclusive_recall) << ',' << radius << ',' << r.error << ',' << wall << '\n';
    }
}

std::filesystem::path run_grid(const RunConfig& cfg, std::size_t workers) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir, ec);
    if (ec) throw IoError("cannot create " + cfg.output_dir.string() + ": " + ec.message());
    const auto config_path = cfg.output_dir / "run_config.json";
    {
        std::ofstream out(config_path);
        if (!out) throw IoError("cannot write " + config_path.string());
        out << to_json(cfg).dump(2) << '\n';
    }
    auto rows = run_grid_rows(cfg, workers);
    const auto csv_path = cfg.output_dir / "results.csv";
    std::ofstream out(csv_path);
    if (!out) throw IoError("cannot write " + csv_path.string());
    write_results_csv(out, rows);
    if (!out) throw IoError("write failed: " + csv_path.string());
    return csv_path;
}

std::size_t CsvTable::column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw FormatError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv(std::istream& in) {
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty CSV");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    t.header = split_csv_line(line);
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != t.header.size()) throw FormatError("row has " + std::to_string(cells.size()) + " columns");
        t.rows.push_back(std::move(cells));
    }
    return t;
}

double median(std::vector<double> values) {
    if (values.empty()) throw RangeError("median of empty set");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<Series> summarize(const CsvTable& table, const std::string& metric) {
    const std::size_t c_frac = table.column("fraction"), c_loss = table.column("loss"), c_metric = table.column(metric);
    const std::size_t c_err = table.column("error");

    std::vector<std::string> order;
    std::map<std::string, std::map<double, std::vector<double>>> groups;
    for (const auto& row : table.rows) {
        if (!row[c_err].empty() || row[c_metric].empty()) continue;
        const auto& loss = row[c_loss];
        if (!groups.count(loss)) order.push_back(loss);
        try {
            groups[loss][std::stod(row[c_frac])].push_back(std::stod(row[c_metric]));
        } catch (const std::exception&) {
            throw FormatError("non-numeric value in results row");
        }
    }
    std::vector<Series> out;
    for (const auto& loss : order) {
        Series s{loss, {}};
        for (const auto& [fraction, values] : groups[loss])
            s.points.push_back({fraction, median(values), *std::min_element(values.begin(), values.end()),
                                *std::max_element(values.begin(), values.end())});
        out.push_back(std::move(s));
    }
    return out;
}

std::string render_svg(const std::vector<Series>& series, const std::string& metric) {
    constexpr double width = 640, height = 420, left = 60, right = 150, top = 30, bottom = 50;
    const double plot_w = width - left - right, plot_h = height - top - bottom;
    auto sx = [&](double fraction) { return left + fraction * plot_w; };
    auto sy = [&](double v) { return top + (1.0 - std::clamp(v, 0.0, 1.0)) * plot_h; };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"};

    std::ostringstream svg;
    char buf[256];
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\" viewBox=\"0 0 %g %g\">\n", width,
                  height, width, height);
    svg << buf << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<g stroke=\"black\" fill=\"none\"><line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\"/>"
                  "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\"/></g>\n",
                  left, top + plot_h, left + plot_w, top + plot_h, left, top, left, top + plot_h);
    svg << buf;
    svg << "<g font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">\n";
    for (int t = 0; t <= 10; ++t) {
        std::snprintf(buf, sizeof buf, "<text x=\"%.2f\" y=\"%.2f\">%d</text>\n", sx(t / 10.0), top + plot_h + 16, t * 10);
        svg << buf;
        std::snprintf(buf, sizeof buf, "<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"end\">%.1f</text>\n", left - 6,
                      sy(t / 10.0) + 4, t / 10.0);
        svg << buf;
    }
    std::snprintf(buf, sizeof buf, "<text x=\"%.2f\" y=\"%.2f\">annotations (%%)</text>\n", left + plot_w / 2,
                  height - 12);
    svg << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"14\" y=\"%.2f\" transform=\"rotate(-90 14 %.2f)\">%s (median)</text>\n",
                  top + plot_h / 2, top + plot_h / 2, metric.c_str());
    svg << buf << "</g>\n";

    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        const char* color = colors[i % std::size(colors)];
        svg << "<g class=\"series\" data-loss=\"" << s.loss_name << "\">\n";
        for (const auto& p : s.points) {
            std::snprintf(buf, sizeof buf,
                          "<line class=\"whisker\" x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"%s\" "
                          "stroke-opacity=\"0.5\"/>\n",
                          sx(p.fraction), sy(p.min), sx(p.fraction), sy(p.max), color);
            svg << buf;
        }
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t k = 0; k < s.points.size(); ++k) {
            std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", k ? " " : "", sx(s.points[k].fraction), sy(s.points[k].median));
            svg << buf;
        }
        svg << "\"/>\n";
        for (const auto& p : s.points) {
            std::snprintf(buf, sizeof buf,
                          "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\" data-fraction=\"%.17g\" "
                          "data-median=\"%.17g\" data-min=\"%.17g\" data-max=\"%.17g\"/>\n",
                          sx(p.fraction), sy(p.median), color, p.fraction, p.median, p.min, p.max);
            svg << buf;
        }
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.2f\" y=\"%.2f\" font-family=\"sans-serif\" font-size=\"12\" fill=\"%s\">%s</text>\n",
                      left + plot_w + 12, top + 16.0 * static_cast<double>(i + 1), color, s.loss_name.c_str());
        svg << buf << "</g>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

void plot(const std::filesystem::path& results_csv, const std::filesystem::path& out_svg, const std::string& metric) {
    std::ifstream in(results_csv);
    if (!in) throw IoError("cannot open " + results_csv.string());
    const auto series = summarize(read_csv(in), metric);
    std::ofstream out(out_svg);
    if (!out) throw IoError("cannot write " + out_svg.string());
    out << render_svg(series, metric);
    if (!out) throw IoError("write failed: " + out_svg.string());
}

}  // namespace sparseshot
