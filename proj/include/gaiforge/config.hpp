#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gaiforge/bench.hpp"
#include "gaiforge/contracts.hpp"
#include "gaiforge/data.hpp"
#include "gaiforge/gai.hpp"
#include "gaiforge/train.hpp"

namespace gaiforge {

/// Configuration mistakes are usage errors (CLI exit code 2), unlike contract
/// violations hit at run time (exit code 1).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

/// One parsed TOML value: bool, integer, float, string or a flat array.
struct TomlValue {
  enum class Type { Bool, Int, Float, String, Array };
  Type type = Type::Int;
  bool b = false;
  std::int64_t i = 0;
  double f = 0.0;
  std::string s;
  std::vector<TomlValue> array;

  static TomlValue of_bool(bool v) { TomlValue t; t.type = Type::Bool; t.b = v; return t; }
  static TomlValue of_int(std::int64_t v) { TomlValue t; t.type = Type::Int; t.i = v; return t; }
  static TomlValue of_float(double v) { TomlValue t; t.type = Type::Float; t.f = v; return t; }
  static TomlValue of_string(std::string v) {
    TomlValue t;
    t.type = Type::String;
    t.s = std::move(v);
    return t;
  }
  template <typename It>
  static TomlValue of_array(It begin, It end) {
    TomlValue t;
    t.type = Type::Array;
    for (; begin != end; ++begin) t.array.push_back(*begin);
    return t;
  }

  double as_double(const std::string& key) const {
    if (type == Type::Float) return f;
    if (type == Type::Int) return static_cast<double>(i);
    throw ConfigError("config key '" + key + "' must be a number");
  }
  std::int64_t as_int(const std::string& key) const {
    if (type == Type::Int) return i;
    throw ConfigError("config key '" + key + "' must be an integer");
  }
  bool as_bool(const std::string& key) const {
    if (type == Type::Bool) return b;
    throw ConfigError("config key '" + key + "' must be a boolean");
  }
  std::string as_string(const std::string& key) const {
    if (type == Type::String) return s;
    throw ConfigError("config key '" + key + "' must be a string");
  }
  std::vector<TomlValue> as_array(const std::string& key) const {
    if (type == Type::Array) return array;
    throw ConfigError("config key '" + key + "' must be an array");
  }

  std::string canonical() const {
    switch (type) {
      case Type::Bool: return b ? "true" : "false";
      case Type::Int: return std::to_string(i);
      case Type::Float: return format_double(f);
      case Type::String: {
        std::string out = "\"";
        for (char c : s) {
          if (c == '"' || c == '\\') out += '\\';
          out += c;
        }
        return out + "\"";
      }
      case Type::Array: {
        std::string out = "[";
        for (std::size_t k = 0; k < array.size(); ++k) {
          if (k) out += ", ";
          out += array[k].canonical();
        }
        return out + "]";
      }
    }
    return "";
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return std::string(s.substr(a, b - a + 1));
}

inline TomlValue parse_value(const std::string& raw, int line_no);

inline TomlValue parse_scalar(const std::string& v, int line_no) {
  if (v == "true") return TomlValue::of_bool(true);
  if (v == "false") return TomlValue::of_bool(false);
  if (!v.empty() && v.front() == '"') {
    if (v.size() < 2 || v.back() != '"')
      throw ConfigError("config line " + std::to_string(line_no) + ": unterminated string");
    std::string out;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
      if (v[i] == '\\' && i + 2 < v.size()) {
        ++i;
        if (v[i] == 'n')
          out += '\n';
        else if (v[i] == 't')
          out += '\t';
        else
          out += v[i];
      } else {
        out += v[i];
      }
    }
    return TomlValue::of_string(out);
  }
  bool int_like = !v.empty();
  for (std::size_t i = 0; i < v.size(); ++i) {
    char c = v[i];
    if (i == 0 && (c == '+' || c == '-')) continue;
    if (c < '0' || c > '9') {
      int_like = false;
      break;
    }
  }
  if (int_like) {
    std::int64_t out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec == std::errc() && res.ptr == v.data() + v.size())
      return TomlValue::of_int(out);
  }
  double d = 0.0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), d);
  if (res.ec == std::errc() && res.ptr == v.data() + v.size())
    return TomlValue::of_float(d);
  throw ConfigError("config line " + std::to_string(line_no) + ": cannot parse value '" +
                    v + "'");
}

inline TomlValue parse_value(const std::string& raw, int line_no) {
  std::string v = trim(raw);
  if (v.empty())
    throw ConfigError("config line " + std::to_string(line_no) + ": missing value");
  if (v.front() == '[') {
    if (v.back() != ']')
      throw ConfigError("config line " + std::to_string(line_no) + ": unterminated array");
    TomlValue out;
    out.type = TomlValue::Type::Array;
    std::string inner = v.substr(1, v.size() - 2);
    std::string cur;
    bool in_str = false;
    for (char c : inner) {
      if (c == '"') in_str = !in_str;
      if (c == ',' && !in_str) {
        if (!trim(cur).empty()) out.array.push_back(parse_scalar(trim(cur), line_no));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!trim(cur).empty()) out.array.push_back(parse_scalar(trim(cur), line_no));
    return out;
  }
  return parse_scalar(v, line_no);
}

inline std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_str = !in_str;
    if (line[i] == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

inline bool valid_key(const std::string& k) {
  if (k.empty() || k.front() == '.' || k.back() == '.') return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'))
      return false;
  return true;
}

}  // namespace detail

/// Flat dotted-key configuration parsed from a TOML subset: comments,
/// [section] headers, dotted keys, strings, numbers, booleans and flat
/// arrays. Sections become key prefixes.
class ConfigMap {
 public:
  ConfigMap() = default;

  static ConfigMap parse(const std::string& text) {
    ConfigMap map;
    std::istringstream in(text);
    std::string line;
    std::string prefix;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      std::string body = detail::trim(detail::strip_comment(line));
      if (body.empty()) continue;
      if (body.front() == '[') {
        if (body.back() != ']')
          throw ConfigError("config line " + std::to_string(line_no) +
                            ": unterminated section header");
        prefix = detail::trim(body.substr(1, body.size() - 2));
        if (!detail::valid_key(prefix))
          throw ConfigError("config line " + std::to_string(line_no) +
                            ": invalid section name '" + prefix + "'");
        continue;
      }
      std::size_t eq = body.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
      std::string key = detail::trim(body.substr(0, eq));
      if (!detail::valid_key(key))
        throw ConfigError("config line " + std::to_string(line_no) + ": invalid key '" +
                          key + "'");
      if (!prefix.empty()) key = prefix + "." + key;
      if (map.entries_.count(key))
        throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" +
                          key + "'");
      map.entries_[key] = detail::parse_value(body.substr(eq + 1), line_no);
    }
    return map;
  }

  static ConfigMap parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) throw ConfigError("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
  }

  /// "key=value" override; replaces or creates the entry.
  void apply_override(const std::string& assignment) {
    std::size_t eq = assignment.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + assignment + "'");
    std::string key = detail::trim(assignment.substr(0, eq));
    if (!detail::valid_key(key)) throw ConfigError("--set: invalid key '" + key + "'");
    entries_[key] = detail::parse_value(assignment.substr(eq + 1), 0);
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  const std::map<std::string, TomlValue>& entries() const { return entries_; }

  double get_double(const std::string& key, double fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    consumed_.insert(key);
    return it->second.as_double(key);
  }
  std::int64_t get_int(const std::string& key, std::int64_t fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    consumed_.insert(key);
    return it->second.as_int(key);
  }
  std::size_t get_size(const std::string& key, std::size_t fallback) {
    std::int64_t v = get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw ConfigError("config key '" + key + "' must be non-negative");
    return static_cast<std::size_t>(v);
  }
  bool get_bool(const std::string& key, bool fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    consumed_.insert(key);
    return it->second.as_bool(key);
  }
  std::string get_string(const std::string& key, const std::string& fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    consumed_.insert(key);
    return it->second.as_string(key);
  }
  std::vector<double> get_double_array(const std::string& key, std::vector<double> fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    consumed_.insert(key);
    std::vector<double> out;
    for (const auto& v : it->second.as_array(key)) out.push_back(v.as_double(key));
    return out;
  }
  std::vector<std::int64_t> get_int_array(const std::string& key,
                                          std::vector<std::int64_t> fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    consumed_.insert(key);
    std::vector<std::int64_t> out;
    for (const auto& v : it->second.as_array(key)) out.push_back(v.as_int(key));
    return out;
  }
  std::vector<std::string> get_string_array(const std::string& key,
                                            std::vector<std::string> fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    consumed_.insert(key);
    std::vector<std::string> out;
    for (const auto& v : it->second.as_array(key)) out.push_back(v.as_string(key));
    return out;
  }

  void mark_consumed(const std::string& key) { consumed_.insert(key); }

  /// Unknown keys are usage errors; typos must not silently fall back.
  void check_fully_consumed() const {
    std::string unknown;
    for (const auto& [key, value] : entries_)
      if (!consumed_.count(key)) unknown += (unknown.empty() ? "" : ", ") + key;
    if (!unknown.empty()) throw ConfigError("unknown config keys: " + unknown);
  }

 private:
  std::map<std::string, TomlValue> entries_;
  std::set<std::string> consumed_;
};

/// Everything one experiment needs, resolved to concrete values. The canonical
/// form (sorted dotted keys) feeds the config hash embedded in every output.
struct ExperimentConfig {
  // dataset geometry and volumes
  std::size_t height = 16, width = 16, depth = 3;
  std::uint64_t real_seed = 7;
  std::size_t family_train = 10000, family_test = 500, real_test = 500;
  // coverage analysis
  std::size_t coverage_train = 1200, coverage_test = 400;
  double coverage_threshold = 70.0;
  std::uint64_t coverage_seed = 11;
  TrainSchedule coverage_schedule = make_coverage_schedule();
  // benchmark
  std::vector<int> majority_ids = {0, 1, 2, 3};
  int minority_id = 4;
  std::size_t shots = 50;
  std::uint64_t shot_seed = 99;
  // model
  std::vector<std::size_t> conv_channels = {8, 16};
  std::size_t hidden = 64, kernel = 3, stride = 2;
  // gai (minority_label is bound at run time)
  GaiConfig gai;
  // schedules
  TrainSchedule base_schedule = make_base_schedule();
  TrainSchedule finetune_schedule = make_finetune_schedule();
  // run
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::vector<Method> methods = {Method::Unseen, Method::IB, Method::CB, Method::Gai};
  double fpr = 0.01;
  std::string out_dir = "out";
  std::size_t threads = 0;  // 0 = auto
  std::size_t export_count = 8;
  // roster
  std::vector<ForgeryFamilySpec> roster = default_roster();

  static TrainSchedule make_base_schedule() {
    return {3000, 0.05, 150, {1000, 2000}, 0.1, 0.9, 1e-4, 32};
  }
  static TrainSchedule make_finetune_schedule() {
    return {600, 0.005, 30, {200, 400}, 0.1, 0.9, 1e-4, 32};
  }
  static TrainSchedule make_coverage_schedule() {
    return {1200, 0.05, 60, {400, 800}, 0.1, 0.9, 1e-4, 32};
  }

  static ExperimentConfig from_map(ConfigMap& map) {
    ExperimentConfig c;
    c.height = map.get_size("dataset.height", c.height);
    c.width = map.get_size("dataset.width", c.width);
    c.depth = map.get_size("dataset.depth", c.depth);
    c.real_seed = static_cast<std::uint64_t>(map.get_int("dataset.real_seed",
                                                         static_cast<std::int64_t>(c.real_seed)));
    c.family_train = map.get_size("dataset.family_train", c.family_train);
    c.family_test = map.get_size("dataset.family_test", c.family_test);
    c.real_test = map.get_size("dataset.real_test", c.real_test);

    c.coverage_train = map.get_size("coverage.train_per_family", c.coverage_train);
    c.coverage_test = map.get_size("coverage.test_per_family", c.coverage_test);
    c.coverage_threshold = map.get_double("coverage.threshold", c.coverage_threshold);
    c.coverage_seed = static_cast<std::uint64_t>(
        map.get_int("coverage.seed", static_cast<std::int64_t>(c.coverage_seed)));
    read_schedule(map, "coverage.schedule.", c.coverage_schedule);

    std::vector<std::int64_t> majority;
    for (int id : c.majority_ids) majority.push_back(id);
    majority = map.get_int_array("benchmark.majority", majority);
    c.majority_ids.clear();
    for (std::int64_t id : majority) c.majority_ids.push_back(static_cast<int>(id));
    c.minority_id = static_cast<int>(map.get_int("benchmark.minority", c.minority_id));
    c.shots = map.get_size("benchmark.shots", c.shots);
    c.shot_seed = static_cast<std::uint64_t>(
        map.get_int("benchmark.seed", static_cast<std::int64_t>(c.shot_seed)));

    std::vector<std::int64_t> channels;
    for (std::size_t v : c.conv_channels) channels.push_back(static_cast<std::int64_t>(v));
    channels = map.get_int_array("model.conv_channels", channels);
    c.conv_channels.clear();
    for (std::int64_t v : channels) c.conv_channels.push_back(static_cast<std::size_t>(v));
    c.hidden = map.get_size("model.hidden", c.hidden);
    c.kernel = map.get_size("model.kernel", c.kernel);
    c.stride = map.get_size("model.stride", c.stride);

    c.gai.steps = map.get_size("gai.steps", c.gai.steps);
    c.gai.eta = map.get_double("gai.eta", c.gai.eta);
    c.gai.lambda = map.get_double("gai.lambda", c.gai.lambda);
    c.gai.beta = map.get_double("gai.beta", c.gai.beta);
    c.gai.tau = map.get_double("gai.tau", c.gai.tau);
    c.gai.replace_prob = map.get_double("gai.p", c.gai.replace_prob);
    c.gai.alpha0 = map.get_double("gai.alpha0", c.gai.alpha0);
    c.gai.noise_scale = map.get_double("gai.noise", c.gai.noise_scale);
    c.gai.restrain_on_softmax = map.get_bool("gai.restrain_softmax", c.gai.restrain_on_softmax);

    read_schedule(map, "schedule.base.", c.base_schedule);
    read_schedule(map, "schedule.finetune.", c.finetune_schedule);

    std::vector<std::int64_t> seeds;
    for (std::uint64_t s : c.seeds) seeds.push_back(static_cast<std::int64_t>(s));
    seeds = map.get_int_array("run.seeds", seeds);
    c.seeds.clear();
    for (std::int64_t s : seeds) c.seeds.push_back(static_cast<std::uint64_t>(s));
    std::vector<std::string> methods;
    for (Method m : c.methods) methods.push_back(method_name(m));
    methods = map.get_string_array("run.methods", methods);
    c.methods.clear();
    for (const std::string& m : methods) {
      try {
        c.methods.push_back(method_from_name(m));
      } catch (const ContractViolation& e) {
        throw ConfigError(e.what());
      }
    }
    c.fpr = map.get_double("run.fpr", c.fpr);
    c.out_dir = map.get_string("run.out", c.out_dir);
    c.threads = map.get_size("run.threads", c.threads);
    c.export_count = map.get_size("run.export_count", c.export_count);

    c.roster = read_roster(map);
    c.validate();
    return c;
  }

  void validate() const {
    if (height == 0 || width == 0 || depth == 0)
      throw ConfigError("dataset: image extents must be positive");
    if (seeds.empty()) throw ConfigError("run.seeds must be nonempty");
    std::set<std::uint64_t> distinct(seeds.begin(), seeds.end());
    if (distinct.size() != seeds.size()) throw ConfigError("run.seeds must be distinct");
    if (methods.empty()) throw ConfigError("run.methods must be nonempty");
    if (!(fpr > 0.0 && fpr < 1.0)) throw ConfigError("run.fpr must lie in (0,1)");
    if (roster.empty()) throw ConfigError("roster must be nonempty");
    std::set<int> ids;
    for (const auto& f : roster)
      if (!ids.insert(f.id).second)
        throw ConfigError("roster: duplicate family id " + std::to_string(f.id));
    try {
      base_schedule.validate();
      finetune_schedule.validate();
      coverage_schedule.validate();
      GaiConfig check = gai;
      check.minority_label = 1;
      check.validate();
    } catch (const ContractViolation& e) {
      throw ConfigError(e.what());
    }
  }

  ArchSpec model_arch(std::size_t classes) const {
    ArchSpec arch;
    arch.height = height;
    arch.width = width;
    arch.depth = depth;
    arch.conv_channels = conv_channels;
    arch.kernel = kernel;
    arch.stride = stride;
    arch.hidden = hidden;
    arch.classes = classes;
    return arch;
  }

  BenchmarkSpec benchmark_spec() const {
    BenchmarkSpec spec;
    spec.majority_ids = majority_ids;
    spec.minority_id = minority_id;
    spec.shots = shots;
    spec.seed = shot_seed;
    spec.coverage_threshold = coverage_threshold;
    spec.family_train = family_train;
    spec.family_test = family_test;
    spec.real_test = real_test;
    spec.real_seed = real_seed;
    spec.height = height;
    spec.width = width;
    spec.depth = depth;
    return spec;
  }

  CoverageConfig coverage_config() const {
    return {coverage_train, coverage_test, real_seed, height, width, depth};
  }

  ConfigMap resolved() const {
    ConfigMap map;
    auto set = [&map](const std::string& key, TomlValue value) {
      map.apply_override(key + "=" + value.canonical());
    };
    set("dataset.height", TomlValue::of_int(static_cast<std::int64_t>(height)));
    set("dataset.width", TomlValue::of_int(static_cast<std::int64_t>(width)));
    set("dataset.depth", TomlValue::of_int(static_cast<std::int64_t>(depth)));
    set("dataset.real_seed", TomlValue::of_int(static_cast<std::int64_t>(real_seed)));
    set("dataset.family_train", TomlValue::of_int(static_cast<std::int64_t>(family_train)));
    set("dataset.family_test", TomlValue::of_int(static_cast<std::int64_t>(family_test)));
    set("dataset.real_test", TomlValue::of_int(static_cast<std::int64_t>(real_test)));
    set("coverage.train_per_family", TomlValue::of_int(static_cast<std::int64_t>(coverage_train)));
    set("coverage.test_per_family", TomlValue::of_int(static_cast<std::int64_t>(coverage_test)));
    set("coverage.threshold", TomlValue::of_float(coverage_threshold));
    set("coverage.seed", TomlValue::of_int(static_cast<std::int64_t>(coverage_seed)));
    write_schedule(set, "coverage.schedule.", coverage_schedule);
    {
      std::vector<TomlValue> ids;
      for (int id : majority_ids) ids.push_back(TomlValue::of_int(id));
      set("benchmark.majority", TomlValue::of_array(ids.begin(), ids.end()));
    }
    set("benchmark.minority", TomlValue::of_int(minority_id));
    set("benchmark.shots", TomlValue::of_int(static_cast<std::int64_t>(shots)));
    set("benchmark.seed", TomlValue::of_int(static_cast<std::int64_t>(shot_seed)));
    {
      std::vector<TomlValue> ch;
      for (std::size_t v : conv_channels)
        ch.push_back(TomlValue::of_int(static_cast<std::int64_t>(v)));
      set("model.conv_channels", TomlValue::of_array(ch.begin(), ch.end()));
    }
    set("model.hidden", TomlValue::of_int(static_cast<std::int64_t>(hidden)));
    set("model.kernel", TomlValue::of_int(static_cast<std::int64_t>(kernel)));
    set("model.stride", TomlValue::of_int(static_cast<std::int64_t>(stride)));
    set("gai.steps", TomlValue::of_int(static_cast<std::int64_t>(gai.steps)));
    set("gai.eta", TomlValue::of_float(gai.eta));
    set("gai.lambda", TomlValue::of_float(gai.lambda));
    set("gai.beta", TomlValue::of_float(gai.beta));
    set("gai.tau", TomlValue::of_float(gai.tau));
    set("gai.p", TomlValue::of_float(gai.replace_prob));
    set("gai.alpha0", TomlValue::of_float(gai.alpha0));
    set("gai.noise", TomlValue::of_float(gai.noise_scale));
    set("gai.restrain_softmax", TomlValue::of_bool(gai.restrain_on_softmax));
    write_schedule(set, "schedule.base.", base_schedule);
    write_schedule(set, "schedule.finetune.", finetune_schedule);
    {
      std::vector<TomlValue> s;
      for (std::uint64_t v : seeds) s.push_back(TomlValue::of_int(static_cast<std::int64_t>(v)));
      set("run.seeds", TomlValue::of_array(s.begin(), s.end()));
    }
    {
      std::vector<TomlValue> m;
      for (Method v : methods) m.push_back(TomlValue::of_string(method_name(v)));
      set("run.methods", TomlValue::of_array(m.begin(), m.end()));
    }
    set("run.fpr", TomlValue::of_float(fpr));
    set("run.out", TomlValue::of_string(out_dir));
    set("run.threads", TomlValue::of_int(static_cast<std::int64_t>(threads)));
    set("run.export_count", TomlValue::of_int(static_cast<std::int64_t>(export_count)));
    for (const auto& fam : roster) {
      std::string p = "family." + std::to_string(fam.id) + ".";
      set(p + "kind", TomlValue::of_string(artifact_kind_name(fam.kind)));
      std::vector<TomlValue> params;
      for (double v : fam.params) params.push_back(TomlValue::of_float(v));
      set(p + "params", TomlValue::of_array(params.begin(), params.end()));
      set(p + "group", TomlValue::of_int(fam.group));
    }
    return map;
  }

  /// Sorted flat key=value lines; parseable by ConfigMap::parse.
  std::string canonical_toml() const {
    ConfigMap map = resolved();
    std::string out;
    for (const auto& [key, value] : map.entries())
      out += key + " = " + value.canonical() + "\n";
    return out;
  }

  std::string hash() const { return hex64(fnv1a64(canonical_toml())); }

 private:
  static void read_schedule(ConfigMap& map, const std::string& prefix, TrainSchedule& s) {
    s.iterations = map.get_size(prefix + "iterations", s.iterations);
    s.base_lr = map.get_double(prefix + "lr", s.base_lr);
    s.warmup = map.get_size(prefix + "warmup", s.warmup);
    std::vector<std::int64_t> ms;
    for (std::size_t m : s.milestones) ms.push_back(static_cast<std::int64_t>(m));
    ms = map.get_int_array(prefix + "milestones", ms);
    s.milestones.clear();
    for (std::int64_t m : ms) s.milestones.push_back(static_cast<std::size_t>(m));
    s.decay = map.get_double(prefix + "decay", s.decay);
    s.momentum = map.get_double(prefix + "momentum", s.momentum);
    s.weight_decay = map.get_double(prefix + "weight_decay", s.weight_decay);
    s.batch_size = map.get_size(prefix + "batch", s.batch_size);
  }

  template <typename Setter>
  static void write_schedule(Setter& set, const std::string& prefix, const TrainSchedule& s) {
    set(prefix + "iterations", TomlValue::of_int(static_cast<std::int64_t>(s.iterations)));
    set(prefix + "lr", TomlValue::of_float(s.base_lr));
    set(prefix + "warmup", TomlValue::of_int(static_cast<std::int64_t>(s.warmup)));
    std::vector<TomlValue> ms;
    for (std::size_t m : s.milestones) ms.push_back(TomlValue::of_int(static_cast<std::int64_t>(m)));
    set(prefix + "milestones", TomlValue::of_array(ms.begin(), ms.end()));
    set(prefix + "decay", TomlValue::of_float(s.decay));
    set(prefix + "momentum", TomlValue::of_float(s.momentum));
    set(prefix + "weight_decay", TomlValue::of_float(s.weight_decay));
    set(prefix + "batch", TomlValue::of_int(static_cast<std::int64_t>(s.batch_size)));
  }

  static std::vector<ForgeryFamilySpec> read_roster(ConfigMap& map) {
    std::set<int> ids;
    for (const auto& [key, value] : map.entries()) {
      if (key.rfind("family.", 0) != 0) continue;
      std::size_t dot = key.find('.', 7);
      if (dot == std::string::npos)
        throw ConfigError("roster key '" + key + "' must look like family.<id>.<field>");
      ids.insert(std::stoi(key.substr(7, dot - 7)));
    }
    if (ids.empty()) return default_roster();
    std::vector<ForgeryFamilySpec> roster;
    for (int id : ids) {
      std::string p = "family." + std::to_string(id) + ".";
      ForgeryFamilySpec fam;
      fam.id = id;
      std::string kind = map.get_string(p + "kind", "");
      if (kind.empty()) throw ConfigError("roster: missing " + p + "kind");
      try {
        fam.kind = artifact_kind_from_name(kind);
      } catch (const ContractViolation& e) {
        throw ConfigError(e.what());
      }
      fam.params = map.get_double_array(p + "params", {});
      if (fam.params.empty()) throw ConfigError("roster: missing " + p + "params");
      fam.group = static_cast<int>(map.get_int(p + "group", 0));
      roster.push_back(std::move(fam));
    }
    return roster;
  }
};

inline ExperimentConfig load_config(const std::string& path,
                                    const std::vector<std::string>& overrides) {
  ConfigMap map = path.empty() ? ConfigMap() : ConfigMap::parse_file(path);
  for (const std::string& o : overrides) map.apply_override(o);
  ExperimentConfig cfg = ExperimentConfig::from_map(map);
  map.check_fully_consumed();
  return cfg;
}

}  // namespace gaiforge
