#include <algorithm>
#include <set>
#include <sstream>

#include "doctest.h"
#include "ironwan/cli/experiment.hpp"
#include "ironwan/cli/scenario.hpp"
#include "ironwan/core/random.hpp"
#include "nlohmann/json.hpp"

using namespace ironwan;
using namespace ironwan::cli;

namespace {

const std::string kSmall = R"(
name: tiny
nodes: 20
area_km2: 0.5
gateways: 3
networks: 2
duration_s: 600
sweep:
  system: [lorawan, ironwan]
  seeds: [1, 2]
)";

// Order statistics by the textbook definition, written independently of the library.
double oracle_percentile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * q;
    const double fl = std::floor(h);
    const auto i = static_cast<std::size_t>(fl);
    return i + 1 < v.size() ? v[i] + (h - fl) * (v[i + 1] - v[i]) : v[i];
}

}  // namespace

TEST_CASE("reference scenario parses and expands to the full sweep") {
    const auto file = load_scenario(std::string(IRONWAN_SOURCE_DIR) + "/scenarios/reference.yaml");
    CHECK(file.base.node_count == 200);
    CHECK(file.base.area_km2 == doctest::Approx(4.0));
    CHECK(file.base.link.path_loss_exponent == doctest::Approx(3.3));
    CHECK(file.base.g2g_sf == 7);
    const auto cells = expand(file);
    CHECK(cells.size() == 90);
    std::set<std::string> ids;
    for (const auto& c : cells) ids.insert(c.id);
    CHECK(ids.size() == 18);
    // Seeds are innermost.
    CHECK(cells[0].id == cells[4].id);
    CHECK(cells[0].config.seed == 1);
    CHECK(cells[4].config.seed == 5);
    CHECK(cells[5].id != cells[0].id);
}

TEST_CASE("every shipped scenario parses") {
    for (const char* name : {"reference", "ownership", "retx_sweep", "smoke"}) {
        CAPTURE(name);
        CHECK_NOTHROW(expand(load_scenario(std::string(IRONWAN_SOURCE_DIR) + "/scenarios/" + name + ".yaml")));
    }
}

TEST_CASE("scenario errors name the offending key") {
    auto message = [](const std::string& yaml) -> std::string {
        try {
            parse_scenario(yaml);
        } catch (const ConfigError& e) {
            return e.what();
        }
        return {};
    };
    CHECK(message("nodez: 3\n").find("nodez") != std::string::npos);
    CHECK(message("sweep:\n  bogus: [1]\n").find("bogus") != std::string::npos);
    CHECK(message("nodes: -4\n") != "");
    CHECK(message("load: 2.0\n") != "");
    CHECK(message("sweep:\n  system: [nope]\n") != "");
    CHECK(message("[1, 2]\n") != "");
    CHECK_THROWS_AS(load_scenario("/nonexistent/file.yaml"), ConfigError);
}

TEST_CASE("load values") {
    CHECK(parse_load("low").fraction == doctest::Approx(0.1));
    CHECK(parse_load("med").label == "medium");
    CHECK(parse_load("high").fraction == doctest::Approx(0.9));
    CHECK(parse_load("0.25").fraction == doctest::Approx(0.25));
    CHECK(parse_load("0.25").label == "0.25");
    CHECK_THROWS_AS(parse_load("1.5"), ConfigError);
    CHECK_THROWS_AS(parse_load("0.5x"), ConfigError);
    CHECK_THROWS_AS(parse_load(""), ConfigError);
}

TEST_CASE("percentile examples") {
    CHECK(percentile({1, 2, 3, 4}, 0.25) == doctest::Approx(1.75));
    CHECK(percentile({1, 2, 3, 4}, 0.5) == doctest::Approx(2.5));
    CHECK(percentile({7}, 0.75) == 7.0);
    CHECK(percentile({5, 1, 3}, 1.0) == 5.0);
    CHECK_THROWS(percentile({}, 0.5));
}

TEST_CASE("percentile matches the order-statistic oracle") {
    core::Rng rng(31);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> v(1 + rng.below(20));
        for (auto& x : v) x = rng.uniform(-10.0, 10.0);
        const double q = rng.uniform01();
        CHECK(percentile(v, q) == doctest::Approx(oracle_percentile(v, q)));
        const auto s = summarise(v);
        CHECK(s.min <= s.p25);
        CHECK(s.p25 <= s.median);
        CHECK(s.median <= s.p75);
        CHECK(s.p75 <= s.max);
        CHECK(s.min <= s.mean);
        CHECK(s.mean <= s.max);
    }
}

TEST_CASE("metrics CSV rows match the header and read back") {
    const auto cells = expand(parse_scenario(kSmall));
    REQUIRE(cells.size() == 4);
    const auto results = run_cells(cells, 1);
    std::stringstream out;
    write_metrics_csv(out, results);
    const auto table = read_csv(out);
    CHECK(table.header.size() > 10);
    REQUIRE(table.rows.size() == 4);
    const auto seed = table.column("seed");
    const auto system = table.column("system");
    REQUIRE(seed);
    REQUIRE(system);
    CHECK(table.rows[0][*system] == "lorawan");
    CHECK(table.rows[1][*seed] == "2");
    CHECK(table.rows[2][*system] == "ironwan");

    std::istringstream ragged("a,b\n1,2,3\n");
    CHECK_THROWS(read_csv(ragged));
}

TEST_CASE("results do not depend on the thread count") {
    const auto cells = expand(parse_scenario(kSmall));
    const auto one = run_cells(cells, 1);
    const auto three = run_cells(cells, 3);
    REQUIRE(one.size() == three.size());
    for (std::size_t i = 0; i < one.size(); ++i) {
        CHECK(one[i].cell.id == three[i].cell.id);
        CHECK(metrics_csv_row(one[i]) == metrics_csv_row(three[i]));
    }
}

TEST_CASE("summary groups seeds per cell") {
    const auto results = run_cells(expand(parse_scenario(kSmall)), 2);
    const auto j = nlohmann::json::parse(summary_json(results))["cells"];
    REQUIRE(j.is_array());
    std::size_t cells = 0;
    for (const auto& v : j) {
        ++cells;
        CHECK(v["seeds"].size() == 2);
        CHECK(v["unique_per_node"]["count"] == 2);
        CHECK(v["unique_per_node"]["min"] <= v["unique_per_node"]["max"]);
    }
    CHECK(cells == 2);
}
