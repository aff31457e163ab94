#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sparseshot/synth.hpp"
#include "sparseshot/trainer.hpp"

namespace sparseshot {

struct WeakSupSettings {
    std::size_t rounds = 3;
    double tau = 0.75;
};

/// One loss column of the grid.
struct LossEntry {
    std::string name;
    LossParams params;
    ScheduleSpec schedule;
    /// When set, runs the pseudo-labelling baseline (CE) instead of a single training pass.
    std::optional<WeakSupSettings> weak_supervision;
};

struct RunConfig {
    SceneConfig scene;
    std::size_t n_train_scenes = 8;
    std::size_t n_test_scenes = 4;
    std::vector<double> fractions;
    std::vector<LossEntry> losses;
    std::vector<std::uint64_t> seeds;
    TrainConfig train;
    EvalConfig eval;
    std::filesystem::path output_dir = "results";

    void validate() const;
};

SceneConfig scene_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SceneConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);
/// Throws IoError / FormatError.
RunConfig load_run_config(const std::filesystem::path& path);

/// Grid used for the synthetic trend benchmark: 128x128 scenes, 8 train / 4 test,
/// fractions {0.1, 0.2, 0.3, 0.4, 1.0}, CE vs sigmoid-annealed ECE, seeds 1..5.
RunConfig default_run_config();

struct ResultRow {
    double fraction = 0.0;
    std::string loss_name;
    std::string schedule_name;
    std::uint64_t seed = 0;
    double dice = 0.0;
    double f1 = 0.0;
    double f1_macro = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double exclusive_recall = 0.0;
    double match_radius = 0.0;
    std::string error;  ///< empty on success; scores are blank in the CSV otherwise
    double wall_seconds = 0.0;
};

/// Train scenes (sparsified class-1 labels at `fraction`) and exhaustive test scenes for one seed.
struct CellData {
    std::vector<TrainSample> train;
    std::vector<EvalSample> test;
};
CellData build_cell_data(const RunConfig& cfg, double fraction, std::uint64_t seed);

/// One (fraction, loss, seed) cell; Diverged is recorded in `error`.
ResultRow run_cell(const RunConfig& cfg, std::size_t fraction_index, std::size_t loss_index, std::uint64_t seed);

/// Every cell, ordered by (fraction, loss, seed) in config order. `workers` >= 1.
std::vector<ResultRow> run_grid_rows(const RunConfig& cfg, std::size_t workers = 1);

/// Runs the grid and writes `results.csv` and `run_config.json` under cfg.output_dir.
/// Returns the CSV path. Throws IoError.
std::filesystem::path run_grid(const RunConfig& cfg, std::size_t workers = 1);

extern const char* const kResultsHeader;
void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows);

/// Parsed results table: header names plus string cells.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::size_t column(const std::string& name) const;  ///< throws FormatError
};
CsvTable read_csv(std::istream& in);

struct SeriesPoint {
    double fraction = 0.0;
    double median = 0.0;
    double min = 0.0;
    double max = 0.0;
};
struct Series {
    std::string loss_name;
    std::vector<SeriesPoint> points;  ///< ascending fraction
};

/// Per-loss median/min/max of `metric` across seeds at each fraction; error rows skipped.
std::vector<Series> summarize(const CsvTable& table, const std::string& metric);

double median(std::vector<double> values);

/// Standalone SVG line chart, x = fraction * 100, y = metric.
std::string render_svg(const std::vector<Series>& series, const std::string& metric);
void plot(const std::filesystem::path& results_csv, const std::filesystem::path& out_svg, const std::string& metric);

}  // namespace sparseshot
