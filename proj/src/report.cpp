#include "crvos/report.hpp"

#include <cstdio>

#include <json.hpp>

namespace crvos {

using nlohmann::json;

std::string format_report_header() {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%-20s %8s %7s %7s %7s", "sequence", "fps", "J", "F", "J&F");
    return buf;
}

std::string format_report_row(const ReportRow& row) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-20s %8.1f %7.3f %7.3f %7.3f", row.name.c_str(), row.fps,
                  row.mean_J, row.mean_F, row.mean_JF);
    return buf;
}

std::string format_report(const std::vector<ReportRow>& rows, const ReportRow& overall) {
    std::string out = format_report_header() + "\n";
    for (const auto& r : rows) out += format_report_row(r) + "\n";
    out += std::string(52, '-') + "\n";
    out += format_report_row(overall) + "\n";
    return out;
}

std::string report_json(const std::vector<ReportRow>& rows, const ReportRow& overall) {
    auto row_json = [](const ReportRow& r) {
        return json{{"sequence", r.name},
                    {"fps", r.fps},
                    {"J", r.mean_J},
                    {"F", r.mean_F},
                    {"J&F", r.mean_JF}};
    };
    json j;
    j["rows"] = json::array();
    for (const auto& r : rows) j["rows"].push_back(row_json(r));
    j["overall"] = row_json(overall);
    return j.dump(2);
}

}  // namespace crvos
