#include "udr/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace udr::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Shortest decimal that round-trips the exact double.
std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ArgumentError("config: key " + key + " expects an integer, got '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const std::uint64_t r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ArgumentError("config: key " + key + " expects an unsigned integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ArgumentError("config: key " + key + " expects a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ArgumentError("config: key " + key + " expects 0/1/true/false, got '" + v + "'");
}

struct KeyDef {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Definition order is the serialization order.
const std::vector<std::pair<std::string, KeyDef>>& key_table() {
  static const std::vector<std::pair<std::string, KeyDef>> table = [] {
    std::vector<std::pair<std::string, KeyDef>> t;
    auto add_int = [&t](const std::string& k, auto getter) {
      t.push_back({k, KeyDef{[k, getter](RunConfig& c, const std::string& v) {
                               *getter(c) = parse_int(k, v);
                             },
                             [getter](const RunConfig& c) {
                               return std::to_string(*getter(const_cast<RunConfig&>(c)));
                             }}});
    };
    auto add_double = [&t](const std::string& k, auto getter) {
      t.push_back({k, KeyDef{[k, getter](RunConfig& c, const std::string& v) {
                               *getter(c) = parse_double(k, v);
                             },
                             [getter](const RunConfig& c) {
                               return format_double(*getter(const_cast<RunConfig&>(c)));
                             }}});
    };
    auto add_u64 = [&t](const std::string& k, auto getter) {
      t.push_back({k, KeyDef{[k, getter](RunConfig& c, const std::string& v) {
                               *getter(c) = parse_u64(k, v);
                             },
                             [getter](const RunConfig& c) {
                               return std::to_string(*getter(const_cast<RunConfig&>(c)));
                             }}});
    };

    add_int("model.n1", [](RunConfig& c) { return &c.model.n1; });
    add_int("model.n2", [](RunConfig& c) { return &c.model.n2; });
    add_int("model.n3", [](RunConfig& c) { return &c.model.n3; });
    add_int("model.c_main", [](RunConfig& c) { return &c.model.c_main; });
    add_int("model.c_aux", [](RunConfig& c) { return &c.model.c_aux; });
    add_int("model.unshuffle", [](RunConfig& c) { return &c.model.unshuffle; });
    add_int("model.sfrl_cube", [](RunConfig& c) { return &c.model.sfrl_cube; });
    add_int("model.sfrl_stages", [](RunConfig& c) { return &c.model.sfrl_stages; });
    add_int("model.ffl_expand", [](RunConfig& c) { return &c.model.ffl_expand; });
    t.push_back({"model.sfrl_form",
                 KeyDef{[](RunConfig& c, const std::string& v) {
                          if (v == "sequential") c.model.sfrl_form = model::SfrlForm::kSequential;
                          else if (v == "parallel_sum") c.model.sfrl_form = model::SfrlForm::kParallelSum;
                          else throw ArgumentError("config: model.sfrl_form expects sequential|parallel_sum, got '" + v + "'");
                        },
                        [](const RunConfig& c) {
                          return c.model.sfrl_form == model::SfrlForm::kSequential
                                     ? std::string("sequential")
                                     : std::string("parallel_sum");
                        }}});
    add_int("model.aux_blocks", [](RunConfig& c) { return &c.model.aux_blocks; });
    t.push_back({"model.aux_full_res",
                 KeyDef{[](RunConfig& c, const std::string& v) {
                          c.model.aux_full_res = parse_bool("model.aux_full_res", v);
                        },
                        [](const RunConfig& c) {
                          return std::string(c.model.aux_full_res ? "1" : "0");
                        }}});

    add_int("train.epochs", [](RunConfig& c) { return &c.train.epochs; });
    add_int("train.max_steps", [](RunConfig& c) { return &c.train.max_steps; });
    add_int("train.batch", [](RunConfig& c) { return &c.train.batch; });
    add_int("train.patch", [](RunConfig& c) { return &c.train.patch; });
    add_double("train.lr", [](RunConfig& c) { return &c.train.adam.lr; });
    add_double("train.beta1", [](RunConfig& c) { return &c.train.adam.beta1; });
    add_double("train.beta2", [](RunConfig& c) { return &c.train.adam.beta2; });
    add_double("train.eps", [](RunConfig& c) { return &c.train.adam.eps; });
    add_u64("train.seed", [](RunConfig& c) { return &c.train.seed; });
    add_int("train.checkpoint_interval",
            [](RunConfig& c) { return &c.train.checkpoint_interval; });
    add_int("train.val_interval", [](RunConfig& c) { return &c.train.val_interval; });
    t.push_back({"train.precision",
                 KeyDef{[](RunConfig& c, const std::string& v) {
                          if (v != "f32" && v != "f64") {
                            throw ArgumentError("config: train.precision expects f32|f64, got '" + v + "'");
                          }
                          c.precision = v;
                        },
                        [](const RunConfig& c) { return c.precision; }}});

    add_double("rain.density", [](RunConfig& c) { return &c.rain.density; });
    add_double("rain.length_min", [](RunConfig& c) { return &c.rain.length_min; });
    add_double("rain.length_max", [](RunConfig& c) { return &c.rain.length_max; });
    add_double("rain.angle_min", [](RunConfig& c) { return &c.rain.angle_min; });
    add_double("rain.angle_max", [](RunConfig& c) { return &c.rain.angle_max; });
    add_double("rain.thickness", [](RunConfig& c) { return &c.rain.thickness; });
    add_double("rain.alpha_min", [](RunConfig& c) { return &c.rain.alpha_min; });
    add_double("rain.alpha_max", [](RunConfig& c) { return &c.rain.alpha_max; });
    add_double("rain.brightness", [](RunConfig& c) { return &c.rain.streak_brightness; });
    add_int("rain.base_width", [](RunConfig& c) { return &c.rain.base_width; });
    add_int("rain.passes", [](RunConfig& c) { return &c.rain.passes; });
    add_u64("rain.seed", [](RunConfig& c) { return &c.rain.seed; });
    return t;
  }();
  return table;
}

const KeyDef* find_key(const std::string& key) {
  for (const auto& [k, def] : key_table()) {
    if (k == key) return &def;
  }
  return nullptr;
}

}  // namespace

void RunConfig::set_key(const std::string& key, const std::string& value) {
  const KeyDef* def = find_key(key);
  if (!def) throw ArgumentError("config: unknown key '" + key + "'");
  def->set(*this, value);
}

std::string RunConfig::get_key(const std::string& key) const {
  const KeyDef* def = find_key(key);
  if (!def) throw ArgumentError("config: unknown key '" + key + "'");
  return def->get(*this);
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  for (const auto& [k, def] : key_table()) os << k << "=" << def.get(*this) << "\n";
  return os.str();
}

RunConfig RunConfig::parse_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ArgumentError("config: line " + std::to_string(lineno) + " is not key=value: '" + t + "'");
    }
    cfg.set_key(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ArgumentError("config: cannot open " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return parse_text(os.str());
}

bool RunConfig::operator==(const RunConfig& other) const {
  return serialize() == other.serialize();
}

}  // namespace udr::config
