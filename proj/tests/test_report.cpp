#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "crvos/report.hpp"

using namespace crvos;

#ifndef GOLDEN_DIR
#define GOLDEN_DIR "."
#endif

TEST_CASE("report rows match the golden schema file") {
    std::ifstream golden(std::string(GOLDEN_DIR) + "/report_rows.golden");
    REQUIRE(golden.good());
    std::stringstream expected;
    expected << golden.rdbuf();

    std::stringstream produced;
    produced << format_report_header() << "\n";
    produced << format_report_row({"blackswan", 63.5, 0.822, 0.81, 0.816}) << "\n";
    produced << format_report_row({"a_very_long_sequence_name", 7.25, 1.0, 0.0, 0.5}) << "\n";
    CHECK(produced.str() == expected.str());
}

TEST_CASE("report json carries fps, J, F, J&F per row plus an overall row") {
    std::vector<ReportRow> rows = {{"s1", 10.0, 0.5, 0.6, 0.55}};
    const ReportRow overall{"overall", 10.0, 0.5, 0.6, 0.55};
    const auto j = nlohmann::json::parse(report_json(rows, overall));
    REQUIRE(j.contains("rows"));
    REQUIRE(j["rows"].size() == 1);
    for (const char* key : {"sequence", "fps", "J", "F", "J&F"}) {
        CHECK(j["rows"][0].contains(key));
        CHECK(j["overall"].contains(key));
    }
    CHECK(j["overall"]["J&F"].get<double>() == doctest::Approx(0.55));
}
