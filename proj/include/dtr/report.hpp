#pragma once

#include <filesystem>
#include <set>
#include <string>

#include "json.hpp"

#include "dtr/bench.hpp"

namespace dtr {

enum class ReportFormat { csv, json, plotdata };

nlohmann::json to_json(const Estimate& e);
nlohmann::json to_json(const ReportTable& t);
ReportTable report_from_json(const nlohmann::json& j);

// Metric table laid out as estimators x (regime @ time point).
std::string metric_csv(const ReportTable& t, bool esd);
// Tidy rows: estimator,regime,time_point,metric,value.
std::string plotdata_csv(const ReportTable& t);

// csv -> mae.csv + esd.csv, json -> report.json, plotdata -> plotdata.csv.
void emit_report(const ReportTable& t, const std::filesystem::path& dir, const std::set<ReportFormat>& formats);

}  // namespace dtr
