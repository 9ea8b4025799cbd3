#include "dtr/panel.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "dtr/error.hpp"

namespace dtr {

namespace {

bool same_value(double a, double b) { return (is_missing(a) && is_missing(b)) || a == b; }

constexpr const char* kHeader = "id,time,V1,V2,V3,L1,L2,L3,C,Y,T";

std::string row_ref(std::size_t line) { return "row " + std::to_string(line); }

}  // namespace

bool TimeRecord::operator==(const TimeRecord& o) const {
  return same_value(l1, o.l1) && same_value(l2, o.l2) && same_value(l3, o.l3) && c == o.c &&
         same_value(y, o.y) && t == o.t;
}

bool Trajectory::operator==(const Trajectory& o) const {
  return id == o.id && v1 == o.v1 && v2 == o.v2 && v3 == o.v3 && records == o.records;
}

Panel::Panel(int horizon, std::vector<Trajectory> subjects)
    : horizon_(horizon), subjects_(std::move(subjects)) {
  if (horizon_ < 0) throw InvalidParameter("panel horizon must be >= 0");
}

void validate_panel(const Panel& panel) {
  const int K = panel.horizon();
  std::unordered_set<std::int64_t> ids;
  for (const auto& s : panel.subjects()) {
    if (!ids.insert(s.id).second)
      throw DataIntegrityError("duplicate subject id " + std::to_string(s.id));
    if (s.records.size() != static_cast<std::size_t>(K + 2))
      throw DataIntegrityError("subject " + std::to_string(s.id) + " has " +
                               std::to_string(s.records.size()) + " records, expected " +
                               std::to_string(K + 2));
    if (s.records[0].c != 0)
      throw DataIntegrityError("subject " + std::to_string(s.id) + " censored at baseline");
    bool censored_before = false;
    for (int k = 0; k <= K + 1; ++k) {
      const auto& r = s.at(k);
      const std::string where = "subject " + std::to_string(s.id) + " time " + std::to_string(k);
      if (censored_before) {
        if (r.c != 1) throw DataIntegrityError(where + ": non-monotone censoring");
        continue;
      }
      if (is_missing(r.l1) || is_missing(r.l2) || is_missing(r.l3))
        throw DataIntegrityError(where + ": missing L while at risk");
      if (r.c == 1) {
        censored_before = true;
        continue;
      }
      if (is_missing(r.y)) throw DataIntegrityError(where + ": missing Y while uncensored");
      if (k <= K && r.t == kMissingFlag)
        throw DataIntegrityError(where + ": missing T while uncensored");
    }
  }
}

std::vector<std::size_t> at_risk(const Panel& panel, int k) {
  if (k < 0 || k > panel.horizon() + 1)
    throw InvalidParameter("at_risk: time index " + std::to_string(k) + " outside 0.." +
                           std::to_string(panel.horizon() + 1));
  std::vector<std::size_t> out;
  out.reserve(panel.size());
  for (std::size_t i = 0; i < panel.size(); ++i)
    if (panel[i].uncensored_at(k)) out.push_back(i);
  return out;
}

TreatmentPaths observed_treatments(const Panel& panel, std::span<const std::size_t> rows,
                                   int through) {
  TreatmentPaths paths(static_cast<Eigen::Index>(rows.size()), through + 1);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (int j = 0; j <= through; ++j) paths(static_cast<Eigen::Index>(r), j) = panel[rows[r]].at(j).t;
  return paths;
}

std::ptrdiff_t DesignMatrix::column(const std::string& name) const {
  auto it = std::find(column_names.begin(), column_names.end(), name);
  return it == column_names.end() ? -1 : std::distance(column_names.begin(), it);
}

std::vector<std::string> history_columns(int k, const FeatureOptions& opts) {
  std::vector<std::string> names{"V1", "V2", "V3"};
  for (int j = 0; j < k; ++j) {
    const auto s = std::to_string(j);
    for (const char* n : {"L1_", "L2_", "L3_", "Y_", "T_"}) names.push_back(n + s);
  }
  const auto s = std::to_string(k);
  if (opts.include_current_l)
    for (const char* n : {"L1_", "L2_", "L3_"}) names.push_back(n + s);
  if (opts.include_current_y) names.push_back("Y_" + s);
  if (opts.include_current_t) names.push_back("T_" + s);
  return names;
}

DesignMatrix history_features(const Panel& panel, std::span<const std::size_t> rows, int k,
                              const FeatureOptions& opts, const TreatmentPaths* treatments) {
  if (k < 0 || k > panel.horizon() + 1)
    throw InvalidParameter("history_features: time index out of range");
  if (opts.include_current_t && k > panel.horizon())
    throw InvalidParameter("history_features: no treatment at the final time point");

  DesignMatrix dm;
  dm.column_names = history_columns(k, opts);
  dm.rows.assign(rows.begin(), rows.end());
  const auto ncol = static_cast<Eigen::Index>(dm.column_names.size());
  dm.x.resize(static_cast<Eigen::Index>(rows.size()), ncol);

  const int t_through = opts.include_current_t ? k : k - 1;
  if (treatments && treatments->cols() < t_through + 1)
    throw InvalidParameter("history_features: treatment override too short");

  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Trajectory& s = panel[rows[r]];
    const auto ri = static_cast<Eigen::Index>(r);
    auto fail = [&](const char* what, int j) {
      throw DataIntegrityError("history_features: subject " + std::to_string(s.id) + " missing " +
                               what + " at time " + std::to_string(j));
    };
    auto treat = [&](int j) -> double {
      const int t = treatments ? (*treatments)(ri, j) : s.at(j).t;
      if (t == kMissingFlag) fail("T", j);
      return t;
    };
    Eigen::Index c = 0;
    dm.x(ri, c++) = s.v1;
    dm.x(ri, c++) = s.v2;
    dm.x(ri, c++) = s.v3;
    auto put_l = [&](int j) {
      const auto& rec = s.at(j);
      if (is_missing(rec.l1) || is_missing(rec.l2) || is_missing(rec.l3)) fail("L", j);
      dm.x(ri, c++) = rec.l1;
      dm.x(ri, c++) = rec.l2;
      dm.x(ri, c++) = rec.l3;
    };
    auto put_y = [&](int j) {
      const double y = s.at(j).y;
      if (is_missing(y)) fail("Y", j);
      dm.x(ri, c++) = y;
    };
    for (int j = 0; j < k; ++j) {
      put_l(j);
      put_y(j);
      dm.x(ri, c++) = treat(j);
    }
    if (opts.include_current_l) put_l(k);
    if (opts.include_current_y) put_y(k);
    if (opts.include_current_t) dm.x(ri, c++) = treat(k);
  }
  return dm;
}

DesignMatrix history_features(const Panel& panel, int k, const FeatureOptions& opts) {
  const auto rows = at_risk(panel, k);
  return history_features(panel, rows, k, opts);
}

Panel truncate_horizon(const Panel& panel, int horizon) {
  if (horizon < 0 || horizon > panel.horizon())
    throw InvalidParameter("truncate_horizon: horizon " + std::to_string(horizon) +
                           " outside 0.." + std::to_string(panel.horizon()));
  if (horizon == panel.horizon()) return panel;
  std::vector<Trajectory> subjects = panel.subjects();
  for (auto& s : subjects) {
    s.records.resize(static_cast<std::size_t>(horizon + 2));
    s.records.back().t = kMissingFlag;
  }
  return Panel(horizon, std::move(subjects));
}

std::string format_double(double x) {
  if (is_missing(x)) return {};
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

void write_csv(const Panel& panel, std::ostream& out) {
  out << kHeader << '\n';
  for (const auto& s : panel.subjects()) {
    for (std::size_t k = 0; k < s.records.size(); ++k) {
      const auto& r = s.records[k];
      out << s.id << ',' << k << ',' << s.v1 << ',' << s.v2 << ',' << format_double(s.v3) << ','
          << format_double(r.l1) << ',' << format_double(r.l2) << ',' << format_double(r.l3)
          << ',' << static_cast<int>(r.c) << ',' << format_double(r.y) << ',';
      if (r.t != kMissingFlag) out << static_cast<int>(r.t);
      out << '\n';
    }
  }
}

void write_csv(const Panel& panel, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_csv(panel, out);
  if (!out) throw Error("write failed for " + path.string());
}

namespace {

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

double parse_real(std::string_view f, std::size_t line, const char* col) {
  if (f.empty()) return kMissing;
  double v = 0.0;
  auto res = std::from_chars(f.data(), f.data() + f.size(), v);
  if (res.ec != std::errc() || res.ptr != f.data() + f.size())
    throw ParseError(row_ref(line) + ": bad value '" + std::string(f) + "' in column " + col);
  return v;
}

std::int64_t parse_int(std::string_view f, std::size_t line, const char* col) {
  std::int64_t v = 0;
  auto res = std::from_chars(f.data(), f.data() + f.size(), v);
  if (f.empty() || res.ec != std::errc() || res.ptr != f.data() + f.size())
    throw ParseError(row_ref(line) + ": bad integer '" + std::string(f) + "' in column " + col);
  return v;
}

std::int8_t parse_flag(std::string_view f, std::size_t line, const char* col, bool allow_missing) {
  if (f.empty()) {
    if (allow_missing) return kMissingFlag;
    throw ParseError(row_ref(line) + ": empty " + col);
  }
  const auto v = parse_int(f, line, col);
  if (v != 0 && v != 1) throw ParseError(row_ref(line) + ": " + col + " must be 0 or 1");
  return static_cast<std::int8_t>(v);
}

}  // namespace

Panel read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("row 1: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader) throw ParseError("row 1: malformed header '" + line + "'");

  struct Pending {
    Trajectory traj;
    std::map<int, std::pair<TimeRecord, std::size_t>> by_time;
  };
  std::vector<Pending> pending;
  std::map<std::int64_t, std::size_t> index;

  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 11)
      throw ParseError(row_ref(lineno) + ": expected 11 fields, got " + std::to_string(f.size()));
    const auto id = parse_int(f[0], lineno, "id");
    const auto time = parse_int(f[1], lineno, "time");
    if (time < 0) throw ParseError(row_ref(lineno) + ": negative time");
    auto [it, inserted] = index.try_emplace(id, pending.size());
    if (inserted) {
      Pending p;
      p.traj.id = id;
      pending.push_back(std::move(p));
    }
    Pending& p = pending[it->second];
    TimeRecord rec;
    rec.l1 = parse_real(f[5], lineno, "L1");
    rec.l2 = parse_real(f[6], lineno, "L2");
    rec.l3 = parse_real(f[7], lineno, "L3");
    rec.c = parse_flag(f[8], lineno, "C", false);
    rec.y = parse_real(f[9], lineno, "Y");
    rec.t = parse_flag(f[10], lineno, "T", true);
    if (time == 0) {
      p.traj.v1 = static_cast<int>(parse_int(f[2], lineno, "V1"));
      p.traj.v2 = static_cast<int>(parse_int(f[3], lineno, "V2"));
      p.traj.v3 = parse_real(f[4], lineno, "V3");
    }
    if (!p.by_time.emplace(static_cast<int>(time), std::make_pair(rec, lineno)).second)
      throw ParseError(row_ref(lineno) + ": duplicate (id,time) = (" + std::to_string(id) + "," +
                       std::to_string(time) + ")");
  }

  if (pending.empty()) return Panel(0, {});

  const int n_times = static_cast<int>(pending.front().by_time.size());
  if (n_times < 2) throw ParseError("panel needs at least times 0 and 1 per subject");
  std::vector<Trajectory> subjects;
  subjects.reserve(pending.size());
  for (auto& p : pending) {
    if (static_cast<int>(p.by_time.size()) != n_times)
      throw ParseError("subject " + std::to_string(p.traj.id) + " has " +
                       std::to_string(p.by_time.size()) + " rows, expected " +
                       std::to_string(n_times));
    int expected = 0;
    bool censored = false;
    for (auto& [time, entry] : p.by_time) {
      const auto& [rec, row] = entry;
      if (time != expected++)
        throw ParseError(row_ref(row) + ": times for subject " + std::to_string(p.traj.id) +
                         " are not contiguous from 0");
      if (censored && rec.c == 0) throw ParseError(row_ref(row) + ": non-monotone censoring");
      censored = censored || rec.c == 1;
      p.traj.records.push_back(rec);
    }
    subjects.push_back(std::move(p.traj));
  }
  Panel panel(n_times - 2, std::move(subjects));
  try {
    validate_panel(panel);
  } catch (const DataIntegrityError& e) {
    throw ParseError(e.what());
  }
  return panel;
}

Panel read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return read_csv(in);
}

}  // namespace dtr
