#include "cnf/experiments/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cnf/errors.hpp"
#include "cnf/ode_problem.hpp"

namespace cnf::experiments {

namespace {

struct ExperimentName {
  Experiment e;
  const char* name;
};

constexpr ExperimentName kExperiments[] = {
    {Experiment::EpochsSweep, "epochs_sweep"},
    {Experiment::DomainSweep, "domain_sweep"},
    {Experiment::PointsSweep, "points_sweep"},
    {Experiment::ScalingTable, "scaling_table"},
    {Experiment::CnfVsScnf, "cnf_vs_scnf"},
    {Experiment::OrderSweep, "order_sweep"},
    {Experiment::SubdomainSweep, "subdomain_sweep"},
    {Experiment::SubdomainError, "subdomain_error"},
    {Experiment::RigidBody, "rigid_body"},
    {Experiment::Single, "single"},
};

const std::vector<std::string> kKeys = {
    "experiment",  "problem",       "variants",
    "orders",      "inits",         "hidden",
    "points",      "subdomains",    "domain_end",
    "domain_list", "points_list",   "subdomain_list",
    "hidden_list", "cnf_hidden",    "cnf_points",
    "init_value",  "init_lo",       "init_hi",
    "seed",        "seeds",         "epochs",
    "batch",       "incremental",   "penalise_invariants",
    "adam_alpha",  "adam_beta1",    "adam_beta2",
    "adam_epsilon", "adam_reset_per_stage", "independent_init",
    "iv_set",      "threads",       "samples",
    "output",
};

// Settings shared by every experiment; domain_end "auto" means the
// problem's own interval.
constexpr const char* kBaseDefaults = R"(
problem = dahlquist
variants = TSM
orders = 1
inits = const
hidden = 5
points = 10
subdomains = 1
domain_end = auto
domain_list =
points_list =
subdomain_list =
hidden_list =
cnf_hidden = 100
cnf_points = 1000
init_value = -10
init_lo = -10.5
init_hi = -9.5
seed = 1
seeds = 1
epochs = 1000
batch = FB
incremental = false
penalise_invariants = false
adam_alpha = 0.001
adam_beta1 = 0.9
adam_beta2 = 0.999
adam_epsilon = 1e-08
adam_reset_per_stage = false
independent_init = false
iv_set = all
threads = 0
samples = 1000
output =
)";

// Oscillating problem experiments share p_const = 0, p_rnd in [-0.5, 0.5].
constexpr const char* kOscillating = R"(
problem = oscillating
init_value = 0
init_lo = -0.5
init_hi = 0.5
incremental = true
)";

bool uses_oscillating_preset(Experiment e) {
  return e != Experiment::EpochsSweep && e != Experiment::DomainSweep &&
         e != Experiment::PointsSweep && e != Experiment::Single;
}

std::string experiment_defaults(Experiment e) {
  switch (e) {
    case Experiment::EpochsSweep:
      return "orders = 1,2,3,4,5\n";
    case Experiment::DomainSweep:
      return "orders = 1,2,3,4,5\ninits = const,uniform\n"
             "domain_list = 0.5,1,1.5,2,2.5,3,3.5,4,4.5,5\n";
    case Experiment::PointsSweep:
      return "orders = 1,2,3,4,5\npoints_list = 5,10,20,30,40,50\n";
    case Experiment::ScalingTable:
      return "inits = uniform\nseeds = 10\ndomain_list = 1,2,3,4\n"
             "hidden_list = 5,10,15,20\npoints_list = 10,20,30,40\n";
    case Experiment::CnfVsScnf:
      return "orders = 3\nsubdomains = 100\nincremental = false\n";
    case Experiment::OrderSweep:
      return "variants = TSM,mTSM\norders = 1,2,3\nsubdomains = 60\n";
    case Experiment::SubdomainSweep:
      return "variants = TSM,mTSM\norders = 3\ninits = const,uniform\n"
             "subdomain_list = 10,50,100,200,300,400\n";
    case Experiment::SubdomainError:
      return "variants = TSM,mTSM\norders = 1,3,5\ninits = const,uniform\nsubdomains = 100\n";
    case Experiment::RigidBody:
      return "problem = rigid_body\norders = 3\nsubdomains = 40\npenalise_invariants = true\n";
    case Experiment::Single:
      return "";
  }
  return "";
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

// Reads typed values from merged settings; every failure names the key and
// where its value came from.
class Reader {
 public:
  explicit Reader(const Settings& s) : s_(s) {}

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    const std::string where = s_.origin(key);
    throw ConfigError((where.empty() ? std::string() : where + ": ") + "key '" + key + "': " + msg);
  }

  std::string text(const std::string& key) const { return s_.get(key).value_or(""); }

  double real(const std::string& key) const { return parse_real(key, text(key)); }

  double parse_real(const std::string& key, const std::string& v) const {
    double out = 0.0;
    const char* b = v.data();
    const char* e = b + v.size();
    const auto [p, ec] = std::from_chars(b, e, out);
    if (v.empty() || ec != std::errc() || p != e || !std::isfinite(out)) {
      fail(key, "expected a finite number, got '" + v + "'");
    }
    return out;
  }

  std::uint64_t unsigned_int(const std::string& key, const std::string& v) const {
    std::uint64_t out = 0;
    const char* b = v.data();
    const char* e = b + v.size();
    const auto [p, ec] = std::from_chars(b, e, out);
    if (v.empty() || ec != std::errc() || p != e) {
      fail(key, "expected a non-negative integer, got '" + v + "'");
    }
    return out;
  }

  std::uint64_t unsigned_int(const std::string& key) const { return unsigned_int(key, text(key)); }

  std::size_t count(const std::string& key, std::size_t lo, std::size_t hi) const {
    return count_value(key, text(key), lo, hi);
  }

  std::size_t count_value(const std::string& key, const std::string& v, std::size_t lo,
                          std::size_t hi) const {
    const std::uint64_t n = unsigned_int(key, v);
    if (n < lo || n > hi) {
      fail(key, "value " + v + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return static_cast<std::size_t>(n);
  }

  bool boolean(const std::string& key) const {
    const std::string v = text(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    fail(key, "expected true or false, got '" + v + "'");
  }

  std::vector<std::size_t> counts(const std::string& key, std::size_t lo, std::size_t hi) const {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(text(key))) out.push_back(count_value(key, item, lo, hi));
    return out;
  }

  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split_list(text(key))) out.push_back(parse_real(key, item));
    return out;
  }

 private:
  const Settings& s_;
};

constexpr std::size_t kMaxOrder = 10;
constexpr std::size_t kMaxHidden = 10000;
constexpr std::size_t kMaxPoints = 100000;
constexpr std::size_t kMaxSubdomains = 100000;
constexpr long kMaxEpochs = 100000000;
constexpr std::size_t kMaxGridIntervals = 10000000;
constexpr double kMinSpacing = 1e-9;

void require_nonempty(const Reader& r, const std::string& key, std::size_t n) {
  if (n == 0) r.fail(key, "list must not be empty");
}

}  // namespace

std::string to_string(Experiment e) {
  for (const auto& x : kExperiments) {
    if (x.e == e) return x.name;
  }
  return "unknown";
}

Experiment parse_experiment(const std::string& s) {
  std::string key = s;
  std::replace(key.begin(), key.end(), '-', '_');
  for (const auto& x : kExperiments) {
    if (key == x.name) return x.e;
  }
  std::string names;
  for (const auto& x : kExperiments) names += std::string(names.empty() ? "" : ", ") + x.name;
  throw ConfigError("unknown experiment '" + s + "' (expected one of: " + names + ")");
}

std::vector<std::string> experiment_names() {
  std::vector<std::string> out;
  for (const auto& x : kExperiments) out.emplace_back(x.name);
  return out;
}

std::string to_string(InitKind k) { return k == InitKind::Constant ? "const" : "uniform"; }

const std::vector<std::string>& known_keys() { return kKeys; }

Settings Settings::parse(std::string_view text, const std::string& source) {
  Settings s;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view raw =
        text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no);
    const std::string_view body = raw.substr(0, raw.find('#'));
    const std::string line = trim(body);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(where + ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": missing key before '='");
    if (s.contains(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    try {
      s.set(key, value, where);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  return s;
}

Settings Settings::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

void Settings::set(const std::string& key, const std::string& value, const std::string& origin) {
  if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
    throw ConfigError("unknown key '" + key + "'");
  }
  values_[key] = value;
  origins_[key] = origin;
}

std::optional<std::string> Settings::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string Settings::origin(const std::string& key) const {
  const auto it = origins_.find(key);
  return it == origins_.end() ? std::string() : it->second;
}

void Settings::merge(const Settings& other) {
  for (const auto& [k, v] : other.values_) {
    values_[k] = v;
    origins_[k] = other.origin(k);
  }
}

InitMode ExperimentConfig::init_mode(InitKind kind, std::uint64_t seed_offset) const {
  if (kind == InitKind::Constant) return ConstantInit{init_value};
  return UniformInit{init_lo, init_hi, seed + seed_offset};
}

TrainingConfig ExperimentConfig::training(InitKind kind, std::uint64_t seed_offset) const {
  TrainingConfig t;
  t.epochs = epochs;
  t.batch = batch;
  t.incremental = incremental;
  t.adam = adam;
  t.init = init_mode(kind, seed_offset);
  t.adam_reset_per_stage = adam_reset_per_stage;
  t.penalise_invariants = penalise_invariants;
  return t;
}

ExperimentConfig resolve(Experiment experiment, const Settings& settings) {
  Settings merged = Settings::parse(kBaseDefaults, "<defaults>");
  if (uses_oscillating_preset(experiment)) {
    merged.merge(Settings::parse(kOscillating, "<oscillating defaults>"));
  }
  merged.merge(Settings::parse(experiment_defaults(experiment), "<" + to_string(experiment) + " defaults>"));
  merged.merge(settings);
  const Reader r(merged);

  ExperimentConfig c;
  c.experiment = experiment;
  if (const auto e = settings.get("experiment"); e && parse_experiment(*e) != experiment) {
    r.fail("experiment", "'" + *e + "' conflicts with requested experiment " + to_string(experiment));
  }

  c.problem = r.text("problem");
  IvpSystem problem;
  try {
    problem = problem_by_name(c.problem);
  } catch (const ConfigError& e) {
    r.fail("problem", e.what());
  }

  c.variants.clear();
  for (const auto& v : split_list(r.text("variants"))) {
    try {
      c.variants.push_back(parse_variant(v));
    } catch (const ConfigError& e) {
      r.fail("variants", e.what());
    }
  }
  require_nonempty(r, "variants", c.variants.size());

  c.orders = r.counts("orders", 1, kMaxOrder);
  require_nonempty(r, "orders", c.orders.size());

  c.inits.clear();
  for (const auto& v : split_list(r.text("inits"))) {
    if (v == "const") {
      c.inits.push_back(InitKind::Constant);
    } else if (v == "uniform") {
      c.inits.push_back(InitKind::Uniform);
    } else {
      r.fail("inits", "expected const or uniform, got '" + v + "'");
    }
  }
  require_nonempty(r, "inits", c.inits.size());

  c.hidden = r.count("hidden", 1, kMaxHidden);
  c.points = r.count("points", 2, kMaxPoints);
  c.subdomains = r.count("subdomains", 1, kMaxSubdomains);
  if (r.text("domain_end") == "auto") {
    c.domain_end = problem.domain_end;
  } else {
    c.domain_end = r.real("domain_end");
  }
  if (!(c.domain_end > problem.t0)) r.fail("domain_end", "must exceed the initial time");

  c.domain_list = r.reals("domain_list");
  for (double d : c.domain_list) {
    if (!(d > problem.t0)) r.fail("domain_list", "every domain end must exceed the initial time");
  }
  c.points_list = r.counts("points_list", 2, kMaxPoints);
  c.subdomain_list = r.counts("subdomain_list", 1, kMaxSubdomains);
  c.hidden_list = r.counts("hidden_list", 1, kMaxHidden);
  c.cnf_hidden = r.count("cnf_hidden", 1, kMaxHidden);
  c.cnf_points = r.count("cnf_points", 2, kMaxPoints);

  auto check_grid = [&](const std::string& key, std::size_t subdomains) {
    if (subdomains * (c.points - 1) > kMaxGridIntervals) {
      r.fail(key, "subdomains x (points - 1) exceeds " + std::to_string(kMaxGridIntervals));
    }
  };
  check_grid("subdomains", c.subdomains);
  for (std::size_t h : c.subdomain_list) check_grid("subdomain_list", h);

  // Grids must stay resolvable in double precision.
  auto check_spacing = [&](const std::string& key, double t_end, std::size_t intervals) {
    if (!((t_end - problem.t0) / static_cast<double>(intervals) >= kMinSpacing)) {
      r.fail(key, "grid spacing below " + format_double(kMinSpacing));
    }
  };
  check_spacing("subdomains", c.domain_end, c.subdomains * (c.points - 1));
  for (std::size_t h : c.subdomain_list) check_spacing("subdomain_list", c.domain_end, h * (c.points - 1));
  for (double d : c.domain_list) check_spacing("domain_list", d, c.points - 1);
  for (std::size_t n : c.points_list) check_spacing("points_list", c.domain_end, n - 1);
  check_spacing("cnf_points", c.domain_end, c.cnf_points - 1);

  c.init_value = r.real("init_value");
  c.init_lo = r.real("init_lo");
  c.init_hi = r.real("init_hi");
  if (!(c.init_lo < c.init_hi)) r.fail("init_hi", "uniform range needs init_lo < init_hi");
  c.seed = r.unsigned_int("seed");
  c.seeds = r.count("seeds", 1, 10000);

  const std::uint64_t epochs = r.unsigned_int("epochs");
  if (epochs > static_cast<std::uint64_t>(kMaxEpochs)) r.fail("epochs", "too many epochs");
  c.epochs = static_cast<long>(epochs);
  try {
    c.batch = parse_batch_mode(r.text("batch"));
  } catch (const ConfigError& e) {
    r.fail("batch", e.what());
  }
  c.incremental = r.boolean("incremental");
  c.penalise_invariants = r.boolean("penalise_invariants");
  c.adam.alpha = r.real("adam_alpha");
  c.adam.beta1 = r.real("adam_beta1");
  c.adam.beta2 = r.real("adam_beta2");
  c.adam.epsilon = r.real("adam_epsilon");
  c.adam_reset_per_stage = r.boolean("adam_reset_per_stage");
  c.independent_init = r.boolean("independent_init");

  c.iv_set = r.text("iv_set");
  if (c.iv_set != "all" && c.iv_set != "0" && c.iv_set != "1" && c.iv_set != "2") {
    r.fail("iv_set", "expected all, 0, 1 or 2, got '" + c.iv_set + "'");
  }
  c.threads = r.count("threads", 0, 1024);
  c.samples = r.count("samples", 2, 10000000);
  c.output = r.text("output");

  if (c.penalise_invariants && !problem.invariants) {
    r.fail("penalise_invariants", "problem '" + c.problem + "' has no invariants");
  }
  const bool needs_closed_form = experiment != Experiment::RigidBody;
  if (needs_closed_form && experiment != Experiment::Single && !problem.analytic) {
    r.fail("problem", "experiment " + to_string(experiment) + " needs a closed-form solution");
  }
  if (experiment == Experiment::RigidBody && c.problem != "rigid_body") {
    r.fail("problem", "the rigid_body experiment needs problem = rigid_body");
  }
  if (experiment == Experiment::DomainSweep) require_nonempty(r, "domain_list", c.domain_list.size());
  if (experiment == Experiment::PointsSweep) require_nonempty(r, "points_list", c.points_list.size());
  if (experiment == Experiment::SubdomainSweep) {
    require_nonempty(r, "subdomain_list", c.subdomain_list.size());
  }
  if (experiment == Experiment::ScalingTable) {
    require_nonempty(r, "domain_list", c.domain_list.size());
    if (c.hidden_list.size() != c.domain_list.size() || c.points_list.size() != c.domain_list.size()) {
      r.fail("hidden_list", "domain_list, hidden_list and points_list must have equal lengths");
    }
  }

  try {
    c.training(c.inits.front()).validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("training parameters: ") + e.what());
  }
  return c;
}

ExperimentConfig resolve(const Settings& settings) {
  const auto e = settings.get("experiment");
  if (!e) throw ConfigError("missing key 'experiment'");
  Experiment ex;
  try {
    ex = parse_experiment(*e);
  } catch (const ConfigError& err) {
    const std::string where = settings.origin("experiment");
    throw ConfigError((where.empty() ? std::string() : where + ": ") + err.what());
  }
  return resolve(ex, settings);
}

std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

std::string to_settings_text(const ExperimentConfig& c) {
  auto join = [](const auto& xs, auto fmt) {
    std::string out;
    for (const auto& x : xs) out += (out.empty() ? "" : ",") + fmt(x);
    return out;
  };
  auto num = [](std::size_t x) { return std::to_string(x); };
  auto boolean = [](bool b) { return std::string(b ? "true" : "false"); };

  std::ostringstream o;
  o << "experiment = " << to_string(c.experiment) << '\n';
  o << "problem = " << c.problem << '\n';
  o << "variants = " << join(c.variants, [](Variant v) { return to_string(v); }) << '\n';
  o << "orders = " << join(c.orders, num) << '\n';
  o << "inits = " << join(c.inits, [](InitKind k) { return to_string(k); }) << '\n';
  o << "hidden = " << c.hidden << '\n';
  o << "points = " << c.points << '\n';
  o << "subdomains = " << c.subdomains << '\n';
  o << "domain_end = " << format_double(c.domain_end) << '\n';
  o << "domain_list = " << join(c.domain_list, format_double) << '\n';
  o << "points_list = " << join(c.points_list, num) << '\n';
  o << "subdomain_list = " << join(c.subdomain_list, num) << '\n';
  o << "hidden_list = " << join(c.hidden_list, num) << '\n';
  o << "cnf_hidden = " << c.cnf_hidden << '\n';
  o << "cnf_points = " << c.cnf_points << '\n';
  o << "init_value = " << format_double(c.init_value) << '\n';
  o << "init_lo = " << format_double(c.init_lo) << '\n';
  o << "init_hi = " << format_double(c.init_hi) << '\n';
  o << "seed = " << c.seed << '\n';
  o << "seeds = " << c.seeds << '\n';
  o << "epochs = " << c.epochs << '\n';
  o << "batch = " << to_string(c.batch) << '\n';
  o << "incremental = " << boolean(c.incremental) << '\n';
  o << "penalise_invariants = " << boolean(c.penalise_invariants) << '\n';
  o << "adam_alpha = " << format_double(c.adam.alpha) << '\n';
  o << "adam_beta1 = " << format_double(c.adam.beta1) << '\n';
  o << "adam_beta2 = " << format_double(c.adam.beta2) << '\n';
  o << "adam_epsilon = " << format_double(c.adam.epsilon) << '\n';
  o << "adam_reset_per_stage = " << boolean(c.adam_reset_per_stage) << '\n';
  o << "independent_init = " << boolean(c.independent_init) << '\n';
  o << "iv_set = " << c.iv_set << '\n';
  o << "threads = " << c.threads << '\n';
  o << "samples = " << c.samples << '\n';
  o << "output = " << c.output << '\n';
  return o.str();
}

std::string output_root() {
  const char* root = std::getenv("CNF_OUTPUT_ROOT");
  return root && *root ? std::string(root) : std::string("runs");
}

}  // namespace cnf::experiments
