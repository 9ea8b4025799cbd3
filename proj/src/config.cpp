#include "dtr/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "dtr/error.hpp"

namespace dtr {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end)
    throw InvalidParameter("setting '" + std::string(key) + "': not a valid number: '" + std::string(v) + "'");
  return out;
}

std::vector<std::string_view> split_list(std::string_view v) {
  std::vector<std::string_view> out;
  while (true) {
    const auto comma = v.find(',');
    const auto item = trim(v.substr(0, comma));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& items, auto&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += fmt(items[i]);
  }
  return out;
}

}  // namespace

void BenchConfig::validate() const {
  if (n < 1) throw InvalidParameter("config: n must be positive");
  if (K < 0) throw InvalidParameter("config: K must be >= 0");
  if (R < 1) throw InvalidParameter("config: R must be >= 1");
  if (mc_samples < 2) throw InvalidParameter("config: mc_samples must be >= 2");
  if (methods.empty()) throw InvalidParameter("config: no methods");
  if (regimes.empty()) throw InvalidParameter("config: no regimes");
  if (horizons.empty()) throw InvalidParameter("config: no horizons");
  for (int h : horizons)
    if (h < 0 || h > K) throw InvalidParameter("config: horizon " + std::to_string(h) + " outside 0..K");
}

void apply_setting(BenchConfig& c, std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "n") {
    c.n = parse_number<int>(key, value);
  } else if (key == "K") {
    c.K = parse_number<int>(key, value);
  } else if (key == "R") {
    c.R = parse_number<int>(key, value);
  } else if (key == "seed") {
    c.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "mc_samples") {
    c.mc_samples = parse_number<std::size_t>(key, value);
  } else if (key == "workers") {
    c.workers = parse_number<unsigned>(key, value);
  } else if (key == "out_dir") {
    c.out_dir = std::string(value);
  } else if (key == "methods") {
    c.methods.clear();
    for (auto v : split_list(value)) c.methods.push_back(parse_method(v));
  } else if (key == "learners") {
    c.learners.clear();
    for (auto v : split_list(value)) c.learners.push_back(parse_learner(v));
  } else if (key == "regimes") {
    c.regimes.clear();
    for (auto v : split_list(value)) c.regimes.push_back(Regime::parse(v));
  } else if (key == "horizons") {
    c.horizons.clear();
    for (auto v : split_list(value)) c.horizons.push_back(parse_number<int>(key, v));
  } else {
    throw InvalidParameter("unknown setting '" + std::string(key) + "'");
  }
}

BenchConfig parse_config(std::string_view text, BenchConfig base) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view v = line;
    if (const auto hash = v.find('#'); hash != std::string_view::npos) v = v.substr(0, hash);
    v = trim(v);
    if (v.empty()) continue;
    const auto eq = v.find('=');
    if (eq == std::string_view::npos)
      throw ParseError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    try {
      apply_setting(base, trim(v.substr(0, eq)), v.substr(eq + 1));
    } catch (const InvalidParameter& e) {
      throw ParseError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

BenchConfig read_config(const std::filesystem::path& path, BenchConfig base) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string to_config_text(const BenchConfig& c) {
  std::ostringstream out;
  out << "n = " << c.n << "\nK = " << c.K << "\nR = " << c.R << "\nseed = " << c.seed
      << "\nmc_samples = " << c.mc_samples
      << "\nmethods = " << join(c.methods, [](Method m) { return std::string(method_name(m)); })
      << "\nlearners = " << join(c.learners, [](LearnerKind k) { return std::string(learner_name(k)); })
      << "\nregimes = " << join(c.regimes, [](const Regime& r) { return std::string(r.name()); })
      << "\nhorizons = " << join(c.horizons, [](int h) { return std::to_string(h); })
      << "\nout_dir = " << c.out_dir << "\n";
  return out.str();
}

}  // namespace dtr
