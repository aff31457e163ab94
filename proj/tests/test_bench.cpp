#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include "sparseshot/bench.hpp"

using namespace sparseshot;

namespace {

LossEntry entry(const std::string& name, LossVariant v, ScheduleKind k = ScheduleKind::Fixed, double rho = 1.0) {
    LossEntry e;
    e.name = name;
    e.params.variant = v;
    e.schedule = ScheduleSpec{k, rho, 12.0, 1};
    return e;
}

RunConfig tiny_config() {
    RunConfig c;
    c.scene.height = c.scene.width = 16;
    c.scene.n_cells_class1 = 2;
    c.scene.radius_range = {2.0, 3.0};
    c.scene.min_separation = 6.0;
    c.n_train_scenes = 2;
    c.n_test_scenes = 1;
    c.fractions = {0.5, 1.0};
    c.losses = {entry("ce", LossVariant::CE), entry("ece", LossVariant::ECE, ScheduleKind::Sigmoid, 0.75)};
    c.seeds = {1, 2};
    c.train.epochs = 2;
    c.train.hidden = 2;
    c.train.kernel = 3;
    return c;
}

std::string scores_only(const std::string& csv) {
    std::istringstream in(csv);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line)) out << line.substr(0, line.rfind(',')) << '\n';
    return out.str();
}

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("sparseshot_test_bench_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("grid of one cell writes one row") {
    auto c = tiny_config();
    c.fractions = {1.0};
    c.losses.resize(1);
    c.seeds = {3};
    c.output_dir = scratch("one");
    auto path = run_grid(c);
    std::ifstream in(path);
    auto table = read_csv(in);
    CHECK(table.rows.size() == 1);
    std::string header;
    for (std::size_t i = 0; i < table.header.size(); ++i) header += (i ? "," : "") + table.header[i];
    CHECK(header == kResultsHeader);
    CHECK(std::filesystem::exists(c.output_dir / "run_config.json"));
    std::filesystem::remove_all(c.output_dir);
}

TEST_CASE("grid cardinality is fractions x losses x seeds") {
    auto c = tiny_config();
    c.scene.n_cells_class1 = 1;
    c.n_train_scenes = 1;
    c.train.epochs = 1;
    c.train.hidden = 1;
    c.train.kernel = 1;
    c.fractions.clear();
    for (int i = 1; i <= 10; ++i) c.fractions.push_back(i / 10.0);
    c.losses = {entry("ce", LossVariant::CE), entry("focal", LossVariant::Focal), entry("huber", LossVariant::Huber),
                entry("ece", LossVariant::ECE, ScheduleKind::Linear, 0.75)};
    c.seeds = {1, 2, 3, 4, 5};
    auto rows = run_grid_rows(c);
    CHECK(rows.size() == 200);
    CHECK(rows.front().fraction == 0.1);
    CHECK(rows.front().loss_name == "ce");
    CHECK(rows.front().seed == 1);
    CHECK(rows[1].seed == 2);
    CHECK(rows[5].loss_name == "focal");
    CHECK(rows.back().fraction == 1.0);
}

TEST_CASE("rerunning the grid reproduces every score") {
    auto c = tiny_config();
    std::ostringstream a, b, threaded;
    write_results_csv(a, run_grid_rows(c));
    write_results_csv(b, run_grid_rows(c));
    write_results_csv(threaded, run_grid_rows(c, 3));
    CHECK(scores_only(a.str()) == scores_only(b.str()));
    CHECK(scores_only(a.str()) == scores_only(threaded.str()));
}

TEST_CASE("sparser cells reuse the same scenes") {
    auto c = tiny_config();
    auto lo = build_cell_data(c, 0.5, 7), hi = build_cell_data(c, 1.0, 7);
    REQUIRE(lo.train.size() == hi.train.size());
    for (std::size_t i = 0; i < lo.train.size(); ++i) {
        CHECK(lo.train[i].image == hi.train[i].image);
        const auto& a = lo.train[i].labels;
        const auto& b = hi.train[i].labels;
        for (std::size_t px = 0; px < a.labels.size(); ++px)
            if (a.labels[px]) CHECK(b.labels[px]);
    }
    CHECK(lo.test.size() == 1);
    CHECK(lo.test[0].truth == hi.test[0].truth);
}

TEST_CASE("diverged cells leave blank scores and the grid continues") {
    auto c = tiny_config();
    c.train.learning_rate = 1e305;
    c.train.output_prior = 0.5;
    c.train.hidden = 8;
    c.fractions = {1.0};
    c.seeds = {1};
    auto rows = run_grid_rows(c);
    REQUIRE(rows.size() == 2);
    std::ostringstream out;
    write_results_csv(out, rows);
    std::istringstream in(out.str());
    auto table = read_csv(in);
    for (const auto& row : table.rows) {
        CHECK_FALSE(row[table.column("error")].empty());
        CHECK(row[table.column("dice")].empty());
        CHECK(row[table.column("error")].find(',') == std::string::npos);
    }
}

TEST_CASE("unwritable output directory") {
    auto file = std::filesystem::temp_directory_path() / "sparseshot_test_bench_file";
    std::ofstream(file) << "x";
    auto c = tiny_config();
    c.output_dir = file / "sub";
    CHECK_THROWS_AS(run_grid(c), IoError);
    std::filesystem::remove(file);
}

TEST_CASE("run config json round trip") {
    auto c = default_run_config();
    c.losses.push_back(entry("focal-ece", LossVariant::FocalECE, ScheduleKind::Linear, 0.5));
    c.losses.back().params.symmetric_exclusion = true;
    LossEntry ws = entry("weak", LossVariant::CE);
    ws.weak_supervision = WeakSupSettings{2, 0.5};
    c.losses.push_back(ws);
    auto j = to_json(c);
    auto back = run_config_from_json(j);
    CHECK(to_json(back) == j);
    REQUIRE(back.losses.size() == 4);
    CHECK(back.losses[2].params.symmetric_exclusion);
    CHECK(back.losses[2].schedule.kind == ScheduleKind::Linear);
    REQUIRE(back.losses[3].weak_supervision.has_value());
    CHECK(back.losses[3].weak_supervision->tau == 0.5);
    CHECK(back.train.hidden == c.train.hidden);
    CHECK(back.train.output_prior == c.train.output_prior);
}

TEST_CASE("default benchmark shape") {
    auto c = default_run_config();
    CHECK(c.scene.height == 128);
    CHECK(c.scene.width == 128);
    CHECK(c.scene.n_cells_class1 == 20);
    CHECK(c.n_train_scenes == 8);
    CHECK(c.n_test_scenes == 4);
    CHECK(c.fractions == std::vector<double>{0.1, 0.2, 0.3, 0.4, 1.0});
    REQUIRE(c.losses.size() == 2);
    CHECK(c.losses[0].params.variant == LossVariant::CE);
    CHECK(c.losses[1].params.variant == LossVariant::ECE);
    CHECK(c.losses[1].schedule.kind == ScheduleKind::Sigmoid);
    CHECK(c.losses[1].schedule.rho_max == 0.75);
    CHECK(c.seeds.size() == 5);
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("bad configs") {
    CHECK_THROWS_AS(run_config_from_json(nlohmann::json::parse(R"({"fractions": [0.5]})")), FormatError);
    auto j = to_json(tiny_config());
    j["losses"][0]["variant"] = "mse";
    CHECK_THROWS_AS(run_config_from_json(j), InvalidConfig);
    auto c = tiny_config();
    c.seeds.clear();
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
    c = tiny_config();
    c.fractions = {0.0};
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
}

TEST_CASE("median") {
    CHECK(median({3.0}) == 3.0);
    CHECK(median({4.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
    CHECK_THROWS_AS(median({}), RangeError);
}

TEST_CASE("one loss at three fractions gives a three vertex polyline") {
    std::istringstream in(std::string(kResultsHeader) +
                          "\n0.1,ce,fixed,1,0.2,0,0,0,0,0,5,,0.1"
                          "\n0.5,ce,fixed,1,0.4,0,0,0,0,0,5,,0.1"
                          "\n1,ce,fixed,1,0.6,0,0,0,0,0,5,,0.1\n");
    auto svg = render_svg(summarize(read_csv(in), "dice"), "dice");
    std::smatch m;
    REQUIRE(std::regex_search(svg, m, std::regex("<polyline[^>]*points=\"([^\"]*)\"")));
    const std::string pts = m[1];
    CHECK(std::count(pts.begin(), pts.end(), ',') == 3);
    CHECK(std::count(svg.begin(), svg.end(), '\n') > 5);
}

TEST_CASE("equal scores draw a horizontal line") {
    std::istringstream in(std::string(kResultsHeader) +
                          "\n0.1,ece,sigmoid,1,0.7,0,0,0,0,0,5,,0.1"
                          "\n0.4,ece,sigmoid,1,0.7,0,0,0,0,0,5,,0.1"
                          "\n1,ece,sigmoid,1,0.7,0,0,0,0,0,5,,0.1\n");
    auto svg = render_svg(summarize(read_csv(in), "dice"), "dice");
    std::smatch m;
    REQUIRE(std::regex_search(svg, m, std::regex("points=\"([^\"]*)\"")));
    std::istringstream pts(m[1].str());
    std::string p;
    std::set<std::string> ys;
    while (pts >> p) ys.insert(p.substr(p.find(',') + 1));
    CHECK(ys.size() == 1);
}

TEST_CASE("plotted medians match a recomputation from the CSV") {
    std::ostringstream csv;
    csv << kResultsHeader << '\n';
    std::map<std::pair<std::string, double>, std::vector<double>> groups;
    std::uint64_t state = 12345;
    auto next = [&] {
        state = state * 6364136223846793005ULL + 1442695040888963407ULL;
        return static_cast<double>(state >> 11) / 9007199254740992.0;
    };
    for (const char* loss : {"ce", "ece"}) {
        for (double f : {0.1, 0.2, 0.4, 1.0}) {
            for (int seed = 1; seed <= 5; ++seed) {
                char score[32];
                std::snprintf(score, sizeof score, "%.6f", next());
                groups[{loss, f}].push_back(std::stod(score));
                csv << f << ',' << loss << ",x," << seed << ',' << score << ",0,0,0,0,0,5,,0.1\n";
            }
        }
    }
    csv << "0.1,ce,x,6,,,,,,,5,diverged at step 3,0.1\n";
    std::istringstream in(csv.str());
    auto svg = render_svg(summarize(read_csv(in), "dice"), "dice");

    std::regex series_re("data-loss=\"([^\"]+)\"([\\s\\S]*?)</g>");
    std::regex point_re("data-fraction=\"([^\"]+)\" data-median=\"([^\"]+)\" data-min=\"([^\"]+)\" data-max=\"([^\"]+)\"");
    std::size_t checked = 0;
    for (std::sregex_iterator s(svg.begin(), svg.end(), series_re), end; s != end; ++s) {
        const std::string loss = (*s)[1], body = (*s)[2];
        for (std::sregex_iterator p(body.begin(), body.end(), point_re); p != end; ++p) {
            auto values = groups.at({loss, std::stod((*p)[1])});
            std::sort(values.begin(), values.end());
            CHECK(std::stod((*p)[2]) == values[2]);
            CHECK(std::stod((*p)[3]) == values.front());
            CHECK(std::stod((*p)[4]) == values.back());
            ++checked;
        }
    }
    CHECK(checked == 8);
}

TEST_CASE("plot requires the metric column") {
    std::istringstream in("fraction,loss,error\n0.1,ce,\n");
    CHECK_THROWS_AS(summarize(read_csv(in), "dice"), FormatError);
    std::istringstream ragged(std::string(kResultsHeader) + "\n0.1,ce\n");
    CHECK_THROWS_AS(read_csv(ragged), FormatError);
    CHECK_THROWS_AS(plot("/nonexistent/results.csv", "/tmp/x.svg", "dice"), IoError);
}
