#pragma once

#include <string>
#include <vector>

namespace crvos {

// One evaluation row in the benchmark-table schema: fps, J, F, J&F.
struct ReportRow {
    std::string name;
    double fps = 0.0;
    double mean_J = 0.0;
    double mean_F = 0.0;
    double mean_JF = 0.0;
};

std::string format_report_header();
std::string format_report_row(const ReportRow& row);
std::string format_report(const std::vector<ReportRow>& rows, const ReportRow& overall);
std::string report_json(const std::vector<ReportRow>& rows, const ReportRow& overall);

}  // namespace crvos
