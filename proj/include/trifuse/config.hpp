#pragma once

// Flat `key = value` experiment configuration ('#' starts a comment).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "trifuse/data/synthetic.hpp"
#include "trifuse/model.hpp"

namespace trifuse {

enum class DataSource { synthetic, mmv_directory };

struct ExperimentConfig {
  FusionMode mode = FusionMode::tri;
  double lambda = 0.1;
  std::vector<ModalityPair> base_pairs = default_pairs();
  PairDirection direction = PairDirection::forward;
  /// 1-based levels with a correlation branch; empty + `placement_default` means deepest only.
  std::vector<int> placement;
  bool placement_default = true;
  Expression expression = Expression::nonlinear;
  GateGranularity granularity = GateGranularity::channel;
  std::int64_t reduction = 4;

  std::string preset = "desk";
  NetworkConfig net = NetworkConfig::desk();

  double learning_rate = 5e-4;
  double lr_factor = 0.5;
  int lr_patience = 10;
  int early_stop_patience = 50;
  double min_delta = 0.0;
  int epochs = 60;
  double train_fraction = 0.8;

  std::uint64_t seed = 1;
  bool deterministic = true;
  int threads = 1;

  DataSource data = DataSource::synthetic;
  std::string data_dir;
  std::uint64_t data_seed = 1000;
  int samples = 50;
  double noise = 0.05;
  Shape sample_shape{32, 32, 32};

  std::vector<double> lambda_grid{0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<std::vector<int>> placements;  // empty: derived from levels
  std::vector<std::uint64_t> seeds{1, 2, 3};

  /// Pair list after applying the direction option.
  std::vector<ModalityPair> pairs() const {
    std::vector<ModalityPair> out;
    if (direction != PairDirection::reverse) out = base_pairs;
    if (direction != PairDirection::forward)
      for (const auto& p : base_pairs) {
        ModalityPair r{p.target, p.source};
        if (std::find(out.begin(), out.end(), r) == out.end()) out.push_back(r);
      }
    return out;
  }

  std::vector<int> effective_placement() const {
    if (mode != FusionMode::tri) return {};
    if (placement_default) return {net.levels};
    return placement;
  }

  /// Placement sets for the placement runner: none, each single level, the two deepest
  /// levels together, and all levels.
  std::vector<std::vector<int>> effective_placements() const {
    if (!placements.empty()) return placements;
    std::vector<std::vector<int>> out{{}};
    for (int l = 1; l <= net.levels; ++l) out.push_back({l});
    out.push_back({net.levels - 1, net.levels});
    if (net.levels > 2) {
      std::vector<int> all;
      for (int l = 1; l <= net.levels; ++l) all.push_back(l);
      out.push_back(all);
    }
    return out;
  }

  ModelConfig model_config() const {
    ModelConfig m;
    m.net = net;
    m.mode = mode;
    m.pairs = mode == FusionMode::tri ? pairs() : std::vector<ModalityPair>{};
    m.correlation_levels = effective_placement();
    m.expression = expression;
    m.granularity = granularity;
    m.reduction = reduction;
    return m;
  }

  data::CorrelationSpec correlation_spec() const {
    auto spec = data::CorrelationSpec::defaults();
    spec.noise = noise;
    return spec;
  }

  void validate() const {
    if (!(lambda >= 0.0)) throw Error(ErrorKind::config, "lambda must be >= 0");
    if (!(learning_rate > 0.0)) throw Error(ErrorKind::config, "lr must be > 0");
    if (!(lr_factor > 0.0 && lr_factor < 1.0)) throw Error(ErrorKind::config, "lr_factor must be in (0, 1)");
    if (lr_patience < 1 || early_stop_patience < 1) throw Error(ErrorKind::config, "patience must be >= 1");
    if (epochs < 1) throw Error(ErrorKind::config, "epochs must be >= 1");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
      throw Error(ErrorKind::config, "split must be in (0, 1)");
    if (samples < 2) throw Error(ErrorKind::config, "samples must be >= 2");
    if (threads < 1) throw Error(ErrorKind::config, "threads must be >= 1");
    for (double l : lambda_grid)
      if (!(l >= 0.0) || !std::isfinite(l)) throw Error(ErrorKind::config, "lambda grid values must be finite and >= 0");
    if (data == DataSource::mmv_directory && data_dir.empty())
      throw Error(ErrorKind::config, "data = mmv:<dir> needs a directory");
    try {
      model_config().validate();
      for (const auto& p : effective_placements())
        for (int l : p)
          if (l < 1 || l > net.levels)
            throw Error(ErrorKind::invalid_argument, "placement level " + std::to_string(l) + " outside 1.." +
                                                         std::to_string(net.levels));
    } catch (const Error& e) {
      throw Error(ErrorKind::config, e.what());
    }
  }

  /// Canonical text form; the config hash is taken over this.
  std::string to_text() const;
  std::uint64_t hash() const { return fnv1a64(to_text()); }
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.push_back({});
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw Error(ErrorKind::config, key + ": '" + v + "' is not a number");
  }
}

inline std::int64_t to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw Error(ErrorKind::config, key + ": '" + v + "' is not an integer");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error(ErrorKind::config, key + ": '" + v + "' is not a boolean");
}

/// Shortest text that parses back to the same double.
inline std::string fmt(double d) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, r.ptr);
}

/// "1;2+3;-" style placement list: ';' separates sets, '+' joins levels, '-' is the empty set.
inline std::vector<std::vector<int>> parse_placements(const std::string& key, const std::string& v) {
  std::vector<std::vector<int>> out;
  for (const auto& set : split(v, ';')) {
    std::vector<int> levels;
    if (set != "-" && set != "none")
      for (const auto& l : split(set, '+')) levels.push_back(static_cast<int>(to_int(key, l)));
    out.push_back(levels);
  }
  return out;
}

inline std::string format_levels(const std::vector<int>& levels) {
  if (levels.empty()) return "none";
  std::string s;
  for (std::size_t i = 0; i < levels.size(); ++i) s += (i ? "+" : "") + std::to_string(levels[i]);
  return s;
}

}  // namespace config_detail

inline std::vector<ModalityPair> parse_pairs(const std::string& v) {
  std::vector<ModalityPair> out;
  if (v == "none" || v.empty()) return out;
  for (const auto& item : config_detail::split(v, ',')) {
    const auto gt = item.find('>');
    if (gt == std::string::npos) throw Error(ErrorKind::config, "pair '" + item + "' must look like 1>3");
    out.push_back({static_cast<int>(config_detail::to_int("pairs", config_detail::trim(item.substr(0, gt)))),
                   static_cast<int>(config_detail::to_int("pairs", config_detail::trim(item.substr(gt + 1))))});
  }
  return out;
}

inline Shape parse_shape(const std::string& key, const std::string& v) {
  auto parts = config_detail::split(v, v.find('x') != std::string::npos ? 'x' : ',');
  if (parts.size() == 1) parts = {parts[0], parts[0], parts[0]};
  if (parts.size() != 3) throw Error(ErrorKind::config, key + ": shape needs 1 or 3 components");
  return {config_detail::to_int(key, parts[0]), config_detail::to_int(key, parts[1]),
          config_detail::to_int(key, parts[2])};
}

/// Applies one `key = value` assignment.
inline void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& value) {
  using namespace config_detail;
  const auto& v = value;
  auto one_of = [&](std::initializer_list<const char*> opts) {
    for (auto o : opts)
      if (v == o) return;
    std::string msg = key + ": '" + v + "' must be one of";
    for (auto o : opts) msg += std::string(" ") + o;
    throw Error(ErrorKind::config, msg);
  };
  if (key == "mode") {
    one_of({"baseline", "dual", "tri"});
    c.mode = v == "baseline" ? FusionMode::baseline : v == "dual" ? FusionMode::dual : FusionMode::tri;
  } else if (key == "lambda") {
    c.lambda = to_double(key, v);
  } else if (key == "pairs") {
    c.base_pairs = parse_pairs(v);
  } else if (key == "pair_direction") {
    one_of({"forward", "reverse", "both"});
    c.direction = v == "forward" ? PairDirection::forward : v == "reverse" ? PairDirection::reverse : PairDirection::both;
  } else if (key == "placement") {
    if (v == "deepest") {
      c.placement_default = true;
      c.placement.clear();
    } else {
      c.placement_default = false;
      c.placement = parse_placements(key, v).at(0);
    }
  } else if (key == "expression") {
    one_of({"nonlinear", "linear"});
    c.expression = v == "linear" ? Expression::linear : Expression::nonlinear;
  } else if (key == "gate") {
    one_of({"channel", "modality"});
    c.granularity = v == "modality" ? GateGranularity::modality : GateGranularity::channel;
  } else if (key == "reduction") {
    c.reduction = to_int(key, v);
  } else if (key == "preset") {
    one_of({"desk", "paper"});
    c.preset = v;
    c.net = v == "paper" ? NetworkConfig::paper() : NetworkConfig::desk();
    c.sample_shape = c.net.input;
  } else if (key == "levels") {
    c.net.levels = static_cast<int>(to_int(key, v));
  } else if (key == "filters") {
    c.net.initial_filters = static_cast<int>(to_int(key, v));
  } else if (key == "dropout") {
    c.net.dropout = to_double(key, v);
  } else if (key == "norm") {
    one_of({"instance", "none"});
    c.net.norm = v == "none" ? NormKind::none : NormKind::instance;
  } else if (key == "shape") {
    c.net.input = parse_shape(key, v);
  } else if (key == "sample_shape") {
    c.sample_shape = parse_shape(key, v);
  } else if (key == "lr") {
    c.learning_rate = to_double(key, v);
  } else if (key == "lr_factor") {
    c.lr_factor = to_double(key, v);
  } else if (key == "lr_patience") {
    c.lr_patience = static_cast<int>(to_int(key, v));
  } else if (key == "early_stop_patience") {
    c.early_stop_patience = static_cast<int>(to_int(key, v));
  } else if (key == "min_delta") {
    c.min_delta = to_double(key, v);
  } else if (key == "epochs") {
    c.epochs = static_cast<int>(to_int(key, v));
  } else if (key == "split") {
    c.train_fraction = to_double(key, v);
  } else if (key == "seed") {
    c.seed = static_cast<std::uint64_t>(to_int(key, v));
  } else if (key == "deterministic") {
    c.deterministic = to_bool(key, v);
  } else if (key == "threads") {
    c.threads = static_cast<int>(to_int(key, v));
  } else if (key == "data") {
    if (v == "synthetic") {
      c.data = DataSource::synthetic;
      c.data_dir.clear();
    } else if (v.rfind("mmv:", 0) == 0) {
      c.data = DataSource::mmv_directory;
      c.data_dir = v.substr(4);
    } else {
      throw Error(ErrorKind::config, "data must be 'synthetic' or 'mmv:<dir>'");
    }
  } else if (key == "data_seed") {
    c.data_seed = static_cast<std::uint64_t>(to_int(key, v));
  } else if (key == "samples") {
    c.samples = static_cast<int>(to_int(key, v));
  } else if (key == "noise") {
    c.noise = to_double(key, v);
  } else if (key == "lambda_grid") {
    c.lambda_grid.clear();
    for (const auto& s : split(v, ',')) c.lambda_grid.push_back(to_double(key, s));
  } else if (key == "placements") {
    c.placements = v == "auto" ? std::vector<std::vector<int>>{} : parse_placements(key, v);
  } else if (key == "seeds") {
    c.seeds.clear();
    for (const auto& s : split(v, ',')) c.seeds.push_back(static_cast<std::uint64_t>(to_int(key, s)));
  } else {
    throw Error(ErrorKind::config, "unknown key '" + key + "'");
  }
}

inline ExperimentConfig parse_config(std::istream& is) {
  ExperimentConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::config, "line " + std::to_string(lineno) + ": expected 'key = value'");
    apply_setting(c, config_detail::trim(line.substr(0, eq)), config_detail::trim(line.substr(eq + 1)));
  }
  return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open config " + path.string());
  return parse_config(in);
}

inline std::string ExperimentConfig::to_text() const {
  using namespace config_detail;
  std::ostringstream os;
  auto shape = [](const Shape& s) {
    return std::to_string(s.d) + "," + std::to_string(s.h) + "," + std::to_string(s.w);
  };
  std::string pairs_text;
  for (std::size_t i = 0; i < base_pairs.size(); ++i)
    pairs_text += (i ? "," : "") + std::to_string(base_pairs[i].source) + ">" + std::to_string(base_pairs[i].target);
  std::string grid;
  for (std::size_t i = 0; i < lambda_grid.size(); ++i) grid += (i ? "," : "") + fmt(lambda_grid[i]);
  std::string place_sets;
  const auto sets = effective_placements();
  for (std::size_t i = 0; i < sets.size(); ++i)
    place_sets += (i ? ";" : "") + (sets[i].empty() ? std::string("-") : format_levels(sets[i]));
  std::string seed_list;
  for (std::size_t i = 0; i < seeds.size(); ++i) seed_list += (i ? "," : "") + std::to_string(seeds[i]);

  os << "mode = " << trifuse::to_string(mode) << '\n'
     << "lambda = " << fmt(lambda) << '\n'
     << "pairs = " << (pairs_text.empty() ? "none" : pairs_text) << '\n'
     << "pair_direction = "
     << (direction == PairDirection::forward ? "forward" : direction == PairDirection::reverse ? "reverse" : "both")
     << '\n'
     << "placement = " << (placement_default ? std::string("deepest") : (placement.empty() ? "-" : format_levels(placement)))
     << '\n'
     << "expression = " << (expression == Expression::linear ? "linear" : "nonlinear") << '\n'
     << "gate = " << (granularity == GateGranularity::modality ? "modality" : "channel") << '\n'
     << "reduction = " << reduction << '\n'
     << "preset = " << preset << '\n'
     << "levels = " << net.levels << '\n'
     << "filters = " << net.initial_filters << '\n'
     << "dropout = " << fmt(net.dropout) << '\n'
     << "norm = " << (net.norm == NormKind::none ? "none" : "instance") << '\n'
     << "shape = " << shape(net.input) << '\n'
     << "sample_shape = " << shape(sample_shape) << '\n'
     << "lr = " << fmt(learning_rate) << '\n'
     << "lr_factor = " << fmt(lr_factor) << '\n'
     << "lr_patience = " << lr_patience << '\n'
     << "early_stop_patience = " << early_stop_patience << '\n'
     << "min_delta = " << fmt(min_delta) << '\n'
     << "epochs = " << epochs << '\n'
     << "split = " << fmt(train_fraction) << '\n'
     << "seed = " << seed << '\n'
     << "deterministic = " << (deterministic ? "true" : "false") << '\n'
     << "threads = " << threads << '\n'
     << "data = " << (data == DataSource::synthetic ? std::string("synthetic") : "mmv:" + data_dir) << '\n'
     << "data_seed = " << data_seed << '\n'
     << "samples = " << samples << '\n'
     << "noise = " << fmt(noise) << '\n'
     << "lambda_grid = " << grid << '\n'
     << "placements = " << place_sets << '\n'
     << "seeds = " << seed_list << '\n';
  return os.str();
}

}  // namespace trifuse
