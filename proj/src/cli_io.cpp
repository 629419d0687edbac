#include "beables/cli_io.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "beables/calibration.hpp"
#include "beables/errors.hpp"
#include "beables/serialization.hpp"
#include "beables/statistics.hpp"

namespace beables {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ConfigError(path + ": " + msg);
}

// Object view that remembers which keys were consumed so leftovers can be
// reported as unknown.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) fail(path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  double number(const std::string& key, double def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_number()) fail(at(key), "expected a number");
    return v->get<double>();
  }

  std::int64_t integer(const std::string& key, std::int64_t def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_number_integer()) fail(at(key), "expected an integer");
    if (v->is_number_unsigned() && v->get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX))
      fail(at(key), "integer out of range");
    return v->get<std::int64_t>();
  }

  int small_integer(const std::string& key, int def) {
    const auto v = integer(key, def);
    if (v < INT32_MIN || v > INT32_MAX) fail(at(key), "integer out of range");
    return static_cast<int>(v);
  }

  std::optional<std::uint64_t> seed(const std::string& key) {
    const json* v = find(key);
    if (!v || v->is_null()) return std::nullopt;
    if (v->is_number_unsigned()) return v->get<std::uint64_t>();
    if (v->is_number_integer()) fail(at(key), "seed must be non-negative");
    fail(at(key), "expected an unsigned integer");
  }

  bool boolean(const std::string& key, bool def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_boolean()) fail(at(key), "expected true or false");
    return v->get<bool>();
  }

  std::string string(const std::string& key, const std::string& def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_string()) fail(at(key), "expected a string");
    return v->get<std::string>();
  }

  template <class E>
  E choice(const std::string& key, E def, const std::vector<std::pair<std::string, E>>& table) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_string()) fail(at(key), "expected a string");
    const auto s = v->get<std::string>();
    std::string allowed;
    for (const auto& [name, value] : table) {
      if (name == s) return value;
      allowed += (allowed.empty() ? "" : ", ") + name;
    }
    fail(at(key), "unknown value \"" + s + "\" (allowed: " + allowed + ")");
  }

  std::optional<Section> child(const std::string& key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    return Section(*v, at(key));
  }

  void finish() const {
    for (const auto& item : obj_.items())
      if (!seen_.count(item.key())) fail(at(item.key()), "unknown key");
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

const std::vector<std::pair<std::string, PairSum>> kPairSum = {
    {"unordered_pairs", PairSum::unordered_pairs}, {"ordered_pairs", PairSum::ordered_pairs}};
const std::vector<std::pair<std::string, IntegratorMode>> kMode = {
    {"microcanonical", IntegratorMode::microcanonical}, {"langevin", IntegratorMode::langevin}};
const std::vector<std::pair<std::string, NoiseTarget>> kNoise = {
    {"all", NoiseTarget::all}, {"off_diagonal", NoiseTarget::off_diagonal}};
const std::vector<std::pair<std::string, DiffusionMethod>> kMethod = {
    {"msd_slope", DiffusionMethod::msd_slope},
    {"quadratic_variation", DiffusionMethod::quadratic_variation}};
const std::vector<std::pair<std::string, Boundary>> kBoundary = {
    {"periodic", Boundary::periodic}, {"dirichlet", Boundary::dirichlet}};
const std::vector<std::pair<std::string, HbarSource>> kHbar = {
    {"fixed", HbarSource::fixed}, {"emergent", HbarSource::emergent}};
const std::vector<std::pair<std::string, NuConvention>> kNu = {
    {"hbar_over_mu", NuConvention::hbar_over_mu},
    {"hbar_over_2mu", NuConvention::hbar_over_2mu},
    {"both", NuConvention::both}};

template <class E>
std::string name_of(E value, const std::vector<std::pair<std::string, E>>& table) {
  for (const auto& [name, v] : table)
    if (v == value) return name;
  return "?";
}

ModelParams read_model(Section s) {
  ModelParams m;
  m.d = s.small_integer("d", m.d);
  m.N = s.small_integer("N", m.N);
  m.mu = s.number("mu", m.mu);
  m.omega = s.number("omega", m.omega);
  m.kappa = s.number("kappa", m.kappa);
  m.pair_sum = s.choice("pair_sum", m.pair_sum, kPairSum);
  s.finish();
  return m;
}

IntegratorConfig read_integrator(Section s) {
  IntegratorConfig c;
  c.mode = s.choice("mode", c.mode, kMode);
  c.dt = s.number("dt", c.dt);
  c.steps = s.integer("steps", c.steps);
  c.gamma = s.number("gamma", c.gamma);
  c.temperature = s.number("temperature", c.temperature);
  c.record_every = s.small_integer("record_every", c.record_every);
  c.frame_every = s.small_integer("frame_every", c.frame_every);
  c.noise_target = s.choice("noise_target", c.noise_target, kNoise);
  c.project_trace = s.boolean("project_trace", c.project_trace);
  s.finish();
  return c;
}

EnsembleConfig read_ensemble(Section s) {
  EnsembleConfig e;
  e.replicas = s.small_integer("replicas", e.replicas);
  e.master_seed = s.seed("master_seed");
  e.initial_spread = s.number("initial_spread", e.initial_spread);
  e.burn_in_steps = s.integer("burn_in_steps", e.burn_in_steps);
  e.threads = s.small_integer("threads", e.threads);
  s.finish();
  return e;
}

AnalysisConfig read_analysis(Section s) {
  AnalysisConfig a;
  a.grid_cells = s.small_integer("grid_cells", a.grid_cells);
  a.bandwidth = s.number("bandwidth", a.bandwidth);
  a.fit_min = s.number("fit_min", a.fit_min);
  a.fit_max = s.number("fit_max", a.fit_max);
  a.method = s.choice("method", a.method, kMethod);
  a.lag = s.small_integer("lag", a.lag);
  if (const json* sw = s.find("sweep"); sw && !sw->is_null()) {
    Section q(*sw, s.at("sweep"));
    SweepRequest r;
    r.t_scaled = q.number("t_scaled", r.t_scaled);
    const json* list = q.find("N_list");
    if (!list) fail(q.at("N_list"), "required");
    if (!list->is_array()) fail(q.at("N_list"), "expected an array of integers");
    for (std::size_t k = 0; k < list->size(); ++k) {
      const auto& v = (*list)[k];
      if (!v.is_number_integer() || v.get<std::int64_t>() > INT32_MAX || v.get<std::int64_t>() < INT32_MIN)
        fail(q.at("N_list") + "[" + std::to_string(k) + "]", "expected an integer");
      r.N_list.push_back(v.get<int>());
    }
    q.finish();
    a.sweep = r;
  }
  s.finish();
  return a;
}

OracleConfig read_oracle(Section s) {
  OracleConfig o;
  o.grid_points = s.small_integer("grid_points", o.grid_points);
  o.length = s.number("length", o.length);
  o.boundary = s.choice("boundary", o.boundary, kBoundary);
  o.dt = s.number("dt", o.dt);
  o.hbar_source = s.choice("hbar_source", o.hbar_source, kHbar);
  o.hbar = s.number("hbar", o.hbar);
  o.mass = s.number("mass", o.mass);
  o.sigma0 = s.number("sigma0", o.sigma0);
  o.omega0 = s.number("omega0", o.omega0);
  o.walkers = s.small_integer("walkers", o.walkers);
  o.nu_convention = s.choice("nu_convention", o.nu_convention, kNu);
  s.finish();
  return o;
}

OutputConfig read_output(Section s) {
  OutputConfig o;
  o.directory = s.string("directory", o.directory);
  if (const json* f = s.find("formats")) {
    if (!f->is_array()) fail(s.at("formats"), "expected an array of strings");
    o.formats.clear();
    for (std::size_t k = 0; k < f->size(); ++k) {
      if (!(*f)[k].is_string()) fail(s.at("formats") + "[" + std::to_string(k) + "]", "expected a string");
      o.formats.push_back((*f)[k].get<std::string>());
    }
  }
  s.finish();
  return o;
}

std::string line_column(const std::string& text, std::size_t byte) {
  const std::size_t end = std::min(byte == 0 ? 0 : byte - 1, text.size());
  std::size_t line = 1, col = 1;
  for (std::size_t k = 0; k < end; ++k) {
    if (text[k] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

bool wants(const ExperimentConfig& c, const std::string& format) {
  return std::find(c.output.formats.begin(), c.output.formats.end(), format) != c.output.formats.end();
}

// Everything that influences the numbers; the output location and thread
// count do not, so reruns elsewhere still produce identical bytes.
json data_echo(const ExperimentConfig& c) {
  json j = to_json(c);
  j.erase("output");
  j["ensemble"].erase("threads");
  return j;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Runs fn(0..n-1) on a small pool. The first failure by index is rethrown so
// the reported error does not depend on scheduling.
void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(std::max(n, 0)));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int pool_size = std::max(1, std::min(threads, n));
  if (pool_size == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < pool_size; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct Run {
  const ExperimentConfig& config;
  std::string command;
  fs::path dir;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();
  std::string started_utc = utc_now();
  CommandResult result;

  Run(const ExperimentConfig& c, std::string cmd) : config(c), command(std::move(cmd)), dir(c.output.directory) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw io::IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  }

  void write(const std::string& name, const std::string& contents) {
    io::write_atomic(dir / name, contents);
    result.written.push_back(dir / name);
  }

  void manifest(json extra) {
    json m = {{"manifest_version", 1},
              {"code_version", kCodeVersion},
              {"command", command},
              {"config", to_json(config)},
              {"conventions", convention_flags(config)}};
    for (auto& [k, v] : extra.items()) m[k] = v;
    json files = json::array();
    for (const auto& p : result.written) files.push_back(p.filename().string());
    m["files"] = files;
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    m["wall_clock"] = {{"started_utc", started_utc}, {"elapsed_seconds", elapsed}};
    write("manifest.json", m.dump(2) + "\n");
  }
};

CommandResult guarded(const std::function<CommandResult()>& body) {
  CommandResult r;
  try {
    return body();
  } catch (const ConfigError& e) {
    r.exit_code = kExitUsage;
    r.message = std::string("configuration error: ") + e.what();
  } catch (const io::IoError& e) {
    r.exit_code = kExitIo;
    r.message = std::string("I/O error: ") + e.what();
  } catch (const NumericAbort& e) {
    r.exit_code = kExitNumeric;
    r.message = std::string("numeric abort: ") + e.what() + " (step " + std::to_string(e.step()) + ")";
  } catch (const EquilibrationError& e) {
    r.exit_code = kExitNumeric;
    r.message = std::string("equilibration failed: ") + e.what();
  } catch (const ContractError& e) {
    r.exit_code = kExitUsage;
    r.message = std::string("invalid request: ") + e.what();
  } catch (const DomainError& e) {
    r.exit_code = kExitUsage;
    r.message = std::string("invalid request: ") + e.what();
  } catch (const fs::filesystem_error& e) {
    r.exit_code = kExitIo;
    r.message = std::string("I/O error: ") + e.what();
  }
  return r;
}

std::uint64_t require_seed(const ExperimentConfig& c, const char* why) {
  if (!c.ensemble.master_seed) fail("ensemble.master_seed", std::string("required by ") + why);
  return *c.ensemble.master_seed;
}

json trajectory_json(const TrajectoryRecord& rec) {
  json j = {{"steps", rec.steps}, {"times", rec.times}};
  json energies = json::array(), com = json::array(), spectra = json::array();
  for (std::size_t k = 0; k < rec.size(); ++k) {
    energies.push_back({rec.energies[k].kinetic, rec.energies[k].potential});
    com.push_back(rec.com_momenta[k]);
    spectra.push_back(rec.spectra[k].lambda);
  }
  j["energies"] = energies;
  j["com_momenta"] = com;
  j["spectra"] = spectra;
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

ExperimentConfig parse_config_unvalidated(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::string what = e.what();
    const auto colon = what.rfind(": ");
    throw ConfigError("syntax error at " + line_column(text, e.byte) + ": " +
                      (colon == std::string::npos ? what : what.substr(colon + 2)));
  }
  if (!doc.is_object()) fail("(document)", "expected a JSON object");
  if (doc.contains("manifest_version")) {
    if (!doc.contains("config")) fail("config", "manifest has no configuration echo");
    doc = json(doc["config"]);
  }

  Section top(doc, "");
  ExperimentConfig c;
  auto model = top.child("model");
  if (!model) fail("model", "required");
  c.model = read_model(*model);
  auto integrator = top.child("integrator");
  if (!integrator) fail("integrator", "required");
  c.integrator = read_integrator(*integrator);
  if (auto s = top.child("ensemble")) c.ensemble = read_ensemble(*s);
  if (auto s = top.child("analysis")) c.analysis = read_analysis(*s);
  if (auto s = top.child("oracle")) c.oracle = read_oracle(*s);
  if (auto s = top.child("output")) c.output = read_output(*s);
  top.finish();
  return c;
}

ExperimentConfig parse_config(const std::string& text) {
  auto c = parse_config_unvalidated(text);
  validate(c);
  return c;
}

void validate(const ExperimentConfig& c) {
  try {
    c.model.validate();
  } catch (const ContractError& e) {
    fail("model", e.what());
  }
  try {
    c.integrator.validate();
  } catch (const ContractError& e) {
    fail("integrator", e.what());
  }

  const auto& e = c.ensemble;
  if (e.replicas < 1) fail("ensemble.replicas", "must be >= 1");
  if (e.threads < 1) fail("ensemble.threads", "must be >= 1");
  if (!(e.initial_spread >= 0.0)) fail("ensemble.initial_spread", "must be >= 0");
  if (e.burn_in_steps < 0) fail("ensemble.burn_in_steps", "must be >= 0");

  const auto& a = c.analysis;
  if (a.grid_cells < 3) fail("analysis.grid_cells", "must be >= 3");
  if (!(a.bandwidth >= 0.0)) fail("analysis.bandwidth", "must be >= 0 (0 selects the Silverman rule)");
  if (!(a.fit_min >= 0.0)) fail("analysis.fit_min", "must be >= 0");
  if (!(a.fit_max > a.fit_min)) fail("analysis.fit_max", "must exceed analysis.fit_min");
  if (a.lag < 1) fail("analysis.lag", "must be >= 1");
  if (a.sweep) {
    if (c.model.d < 2)
      fail("analysis.sweep", "a scaling sweep requires model.d >= 2 (the scaling laws are singular at d = 1)");
    if (!(a.sweep->t_scaled > 0.0)) fail("analysis.sweep.t_scaled", "must be > 0");
    if (a.sweep->N_list.empty()) fail("analysis.sweep.N_list", "must not be empty");
    for (std::size_t k = 0; k < a.sweep->N_list.size(); ++k)
      if (a.sweep->N_list[k] < 2) fail("analysis.sweep.N_list[" + std::to_string(k) + "]", "must be >= 2");
  }

  const bool stochastic = c.integrator.mode == IntegratorMode::langevin || a.sweep.has_value();
  if (stochastic && !e.master_seed)
    fail("ensemble.master_seed", "required when Langevin dynamics or a sweep is configured");

  const auto& o = c.oracle;
  if (o.grid_points < 16) fail("oracle.grid_points", "must be >= 16");
  if (!(o.length > 0.0)) fail("oracle.length", "must be > 0");
  if (!(o.dt > 0.0)) fail("oracle.dt", "must be > 0");
  if (!(o.hbar > 0.0)) fail("oracle.hbar", "must be > 0");
  if (!(o.mass > 0.0)) fail("oracle.mass", "must be > 0");
  if (!(o.sigma0 > 0.0)) fail("oracle.sigma0", "must be > 0");
  if (!(o.omega0 > 0.0)) fail("oracle.omega0", "must be > 0");
  if (o.walkers < 1) fail("oracle.walkers", "must be >= 1");
  if (o.hbar_source == HbarSource::emergent) {
    if (c.model.d < 2) fail("oracle.hbar_source", "emergent hbar requires model.d >= 2");
    if (!a.sweep && !(c.integrator.temperature > 0.0))
      fail("oracle.hbar_source", "emergent hbar needs integrator.temperature > 0 or analysis.sweep");
  }

  if (c.output.directory.empty()) fail("output.directory", "must not be empty");
  for (std::size_t k = 0; k < c.output.formats.size(); ++k) {
    const auto& f = c.output.formats[k];
    if (f != "csv" && f != "json")
      fail("output.formats[" + std::to_string(k) + "]", "unknown format \"" + f + "\" (allowed: csv, json)");
  }
}

json to_json(const ExperimentConfig& c) {
  json integrator = to_json(c.integrator);
  integrator.erase("seed");  // per-replica seeds derive from ensemble.master_seed

  json ensemble = {{"replicas", c.ensemble.replicas},
                   {"initial_spread", c.ensemble.initial_spread},
                   {"burn_in_steps", c.ensemble.burn_in_steps},
                   {"threads", c.ensemble.threads}};
  if (c.ensemble.master_seed) ensemble["master_seed"] = *c.ensemble.master_seed;

  const auto& a = c.analysis;
  json analysis = {{"grid_cells", a.grid_cells}, {"bandwidth", a.bandwidth},
                   {"fit_min", a.fit_min},       {"fit_max", a.fit_max},
                   {"method", name_of(a.method, kMethod)}, {"lag", a.lag}};
  if (a.sweep) analysis["sweep"] = {{"t_scaled", a.sweep->t_scaled}, {"N_list", a.sweep->N_list}};

  const auto& o = c.oracle;
  json oracle = {{"grid_points", o.grid_points},
                 {"length", o.length},
                 {"boundary", name_of(o.boundary, kBoundary)},
                 {"dt", o.dt},
                 {"hbar_source", name_of(o.hbar_source, kHbar)},
                 {"hbar", o.hbar},
                 {"mass", o.mass},
                 {"sigma0", o.sigma0},
                 {"omega0", o.omega0},
                 {"walkers", o.walkers},
                 {"nu_convention", name_of(o.nu_convention, kNu)}};

  return {{"model", to_json(c.model)},
          {"integrator", integrator},
          {"ensemble", ensemble},
          {"analysis", analysis},
          {"oracle", oracle},
          {"output", {{"directory", c.output.directory}, {"formats", c.output.formats}}}};
}

double oracle_hbar(const ExperimentConfig& c) {
  if (c.oracle.hbar_source == HbarSource::fixed) return c.oracle.hbar;
  const double t = c.analysis.sweep ? c.analysis.sweep->t_scaled
                                    : scaled_temperature(c.model, c.integrator.temperature, c.model.N);
  return emergent_hbar(c.model, predicted_diffusion(c.model, t));
}

json convention_flags(const ExperimentConfig& c) {
  return {{"potential_sign", "commuting_minima"},
          {"pair_sum", name_of(c.model.pair_sum, kPairSum)},
          {"continuity_sign", "standard"},
          {"nu_convention", name_of(c.oracle.nu_convention, kNu)},
          {"hbar_source", name_of(c.oracle.hbar_source, kHbar)},
          {"kinetic_masses", "diagonal 2mu, off-diagonal 4mu"},
          {"noise_target", name_of(c.integrator.noise_target, kNoise)}};
}

// ---------------------------------------------------------------------------
// simulate

CommandResult cmd_simulate(const ExperimentConfig& config) {
  return guarded([&] {
    validate(config);
    Run run_ctx(config, "simulate");
    const std::uint64_t master = config.ensemble.master_seed.value_or(0);
    const int R = config.ensemble.replicas;
    const json echo = data_echo(config);

    struct Output {
      std::string trajectory, frames, trajectory_json;
      json seeds;
    };
    std::vector<Output> out(R);

    parallel_for(R, config.ensemble.threads, [&](int r) {
      const auto idx = static_cast<std::uint64_t>(r);
      const std::uint64_t init_seed = derive_seed(master, idx, "simulate/init");
      const std::uint64_t burn_seed = derive_seed(master, idx, "simulate/burn_in");
      const std::uint64_t run_seed = derive_seed(master, idx, "simulate/integrator");
      out[r].seeds = {{"replica", r}, {"init", init_seed}, {"burn_in", burn_seed}, {"integrator", run_seed}};

      MatrixConfiguration start = random_config(config.model, config.ensemble.initial_spread, init_seed);
      if (config.ensemble.burn_in_steps > 0) {
        IntegratorConfig burn = config.integrator;
        burn.seed = burn_seed;
        Propagator p(start, config.model, burn);
        for (std::int64_t s = 0; s < config.ensemble.burn_in_steps; ++s) {
          p.advance();
          p.check_finite();
        }
        start = p.state();
        start.time = 0.0;
      }
      IntegratorConfig ic = config.integrator;
      ic.seed = run_seed;
      TrajectoryRecord rec;
      try {
        rec = run(start, config.model, ic);
      } catch (const NumericAbort& e) {
        throw NumericAbort("replica " + std::to_string(r) + ": " + e.what(), e.step(), e.energy());
      }

      json header = {{"artifact", "trajectory"},
                     {"code_version", kCodeVersion},
                     {"config", echo},
                     {"replica", r},
                     {"seeds", out[r].seeds},
                     {"conventions", convention_flags(config)},
                     {"com_conserved", rec.com_conserved},
                     {"kinetic_dof", rec.kinetic_dof}};
      out[r].trajectory = io::trajectory_csv(rec, header);
      if (wants(config, "json")) out[r].trajectory_json = (json{{"header", header}, {"record", trajectory_json(rec)}}).dump() + "\n";
      if (!rec.frames.empty()) {
        std::vector<double> times;
        for (auto k : rec.frame_records) times.push_back(rec.times[k]);
        header["artifact"] = "frames";
        out[r].frames = io::frames_csv(track_particles(rec.frames, times, r), header);
      }
    });

    json seeds = json::array();
    for (int r = 0; r < R; ++r) {
      const std::string tag = std::to_string(r);
      if (wants(config, "csv")) run_ctx.write("trajectory_r" + tag + ".csv", out[r].trajectory);
      if (!out[r].trajectory_json.empty()) run_ctx.write("trajectory_r" + tag + ".json", out[r].trajectory_json);
      if (!out[r].frames.empty()) run_ctx.write("frames_r" + tag + ".csv", out[r].frames);
      seeds.push_back(out[r].seeds);
    }
    run_ctx.manifest({{"replica_seeds", seeds}});
    run_ctx.result.message = "simulate: " + std::to_string(R) + " replica(s) written to " + run_ctx.dir.string();
    return run_ctx.result;
  });
}

// ---------------------------------------------------------------------------
// sweep

CommandResult cmd_sweep(const ExperimentConfig& config) {
  return guarded([&] {
    validate(config);
    if (!config.analysis.sweep) fail("analysis.sweep", "required by the sweep command");
    Run run_ctx(config, "sweep");
    const auto& sw = *config.analysis.sweep;

    SweepSettings s;
    s.replicas = config.ensemble.replicas;
    s.master_seed = *config.ensemble.master_seed;
    s.initial_spread = config.ensemble.initial_spread;
    s.dt = config.integrator.dt;
    s.gamma = config.integrator.gamma;
    s.burn_in_steps = config.ensemble.burn_in_steps;
    s.production_steps = config.integrator.steps;
    s.record_every = config.integrator.record_every;
    s.fit_min = config.analysis.fit_min;
    s.fit_max = config.analysis.fit_max;
    s.method = config.analysis.method;
    s.grid_cells = config.analysis.grid_cells;
    s.threads = config.ensemble.threads;

    const auto points = scaling_sweep(config.model, sw.t_scaled, sw.N_list, s);
    const json conv = convention_flags(config);
    run_ctx.write("sweep.csv", io::scaling_csv(points, conv));
    if (wants(config, "json")) {
      json rows = json::array();
      for (const auto& p : points)
        rows.push_back({{"N", p.N}, {"T", p.T}, {"t_scaled", p.t_scaled}, {"nu_hat", p.nu_hat},
                        {"nu_stderr", p.nu_stderr}, {"nu_pred", p.nu_pred},
                        {"hbar_emergent", p.hbar_emergent}, {"ratio", p.ratio()},
                        {"ratio_stderr", p.ratio_stderr()}, {"irrotationality", p.irrotationality},
                        {"jd_residual", p.jd_residual}, {"replicas", p.replicas}});
      run_ctx.write("sweep.json", json{{"config", data_echo(config)}, {"conventions", conv}, {"points", rows}}.dump(2) + "\n");
    }
    json seeds = json::array();
    for (int n : sw.N_list)
      for (int r = 0; r < s.replicas; ++r) {
        const std::string tag = "sweep/N=" + std::to_string(n) + "/";
        const auto idx = static_cast<std::uint64_t>(r);
        seeds.push_back({{"N", n},
                         {"replica", r},
                         {"init", derive_seed(s.master_seed, idx, tag + "init")},
                         {"burn_in", derive_seed(s.master_seed, idx, tag + "burn")},
                         {"production", derive_seed(s.master_seed, idx, tag + "production")}});
      }
    run_ctx.manifest({{"replica_seeds", seeds}});
    run_ctx.result.message = "sweep: " + std::to_string(points.size()) + " point(s) written";
    return run_ctx.result;
  });
}

// ---------------------------------------------------------------------------
// oracle

CommandResult cmd_oracle(const ExperimentConfig& config) {
  return guarded([&] {
    validate(config);
    const std::uint64_t master = require_seed(config, "the oracle walkers");
    Run run_ctx(config, "oracle");
    const auto& o = config.oracle;
    const double hbar = oracle_hbar(config);
    const double mass = o.mass;
    const Grid1D grid{o.grid_points, o.length, o.boundary};
    const double h = grid.spacing();
    std::vector<std::string> warnings;

    // Ground state over one classical period.
    const auto ground = harmonic_ground_state(grid, o.omega0, hbar, mass);
    const auto V = harmonic_potential(grid, o.omega0, mass);
    const double period = 2.0 * M_PI / o.omega0;
    const auto period_steps = static_cast<std::int64_t>(std::ceil(period / o.dt - 1e-9));
    EvolveReport rep;
    EvolveOptions eopt;
    eopt.report = &rep;
    const auto evolved = evolve_schrodinger(ground, V, period / period_steps, period_steps, eopt);
    for (const auto& w : rep.warnings) warnings.push_back("harmonic: " + w);
    const auto rho0 = ground.density();
    const auto rho1 = evolved.density();
    double max_dev = 0.0;
    for (std::size_t j = 0; j < rho0.size(); ++j) max_dev = std::max(max_dev, std::abs(rho1[j] - rho0[j]));
    const double norm_drift = std::abs(evolved.norm() - ground.norm());
    const json harmonic = {{"omega0", o.omega0},
                           {"evolved_time", period},
                           {"steps", period_steps},
                           {"max_density_deviation", max_dev},
                           {"norm_drift", norm_drift},
                           {"norm_drift_per_1e4_steps", norm_drift * 1e4 / static_cast<double>(period_steps)},
                           {"accuracy_ratio", rep.accuracy_ratio}};

    // Free packet width against σ(t) = σ₀√(1 + (ħt/2μσ₀²)²).
    const double t_final = 2.0 * mass * o.sigma0 * o.sigma0 / hbar;
    const std::vector<double> zeros(static_cast<std::size_t>(grid.n), 0.0);
    json widths = json::array();
    std::string packet_error;
    WaveFunction packet = gaussian_packet(grid, o.sigma0, 0.0, 0.0, hbar, mass);
    const auto packet0 = packet;
    try {
      const int segments = 4;
      const auto seg_steps = static_cast<std::int64_t>(std::ceil(t_final / segments / o.dt - 1e-9));
      const double seg_dt = t_final / segments / static_cast<double>(seg_steps);
      for (int k = 0; k <= segments; ++k) {
        if (k > 0) packet = evolve_schrodinger(packet, zeros, seg_dt, seg_steps);
        const double t = k * t_final / segments;
        const double tau = hbar * t / (2.0 * mass * o.sigma0 * o.sigma0);
        const double analytic = o.sigma0 * std::sqrt(1.0 + tau * tau);
        widths.push_back({{"t", t},
                          {"width", packet.width()},
                          {"analytic", analytic},
                          {"relative_error", std::abs(packet.width() - analytic) / analytic}});
      }
    } catch (const std::exception& e) {
      packet_error = e.what();
    }
    json free_packet = {{"sigma0", o.sigma0}, {"t_final", t_final}, {"rows", widths}};
    if (!packet_error.empty()) free_packet["error"] = packet_error;

    // Nelson walkers under each ν convention. The osmotic velocity is pinned
    // to (ħ/2μ)∇ln ρ by ψ itself; only the walker noise follows the
    // convention, so a mismatched ν shows up as a density that drifts away
    // from |ψ|².
    const double osmotic_nu = hbar / (2.0 * mass);
    std::vector<std::pair<std::string, double>> conventions;
    if (o.nu_convention != NuConvention::hbar_over_2mu) conventions.emplace_back("hbar_over_mu", hbar / mass);
    if (o.nu_convention != NuConvention::hbar_over_mu) conventions.emplace_back("hbar_over_2mu", hbar / (2.0 * mass));
    const int coarsen = std::max(1, grid.n / 128);
    const double bin = coarsen * h;
    const double relax = 5.0 / o.omega0;
    const auto relax_steps = static_cast<std::int64_t>(std::ceil(relax / o.dt - 1e-9));
    json ab = json::array();
    EigenTrajectory walker_frames;
    for (std::size_t k = 0; k < conventions.size(); ++k) {
      const auto& [name, nu] = conventions[k];
      json entry = {{"convention", name}, {"nu", nu}, {"osmotic_nu", osmotic_nu}};
      auto ens = sample_walkers(ground, static_cast<std::size_t>(o.walkers), nu,
                                derive_seed(master, k, "oracle/ground/init/" + name));
      ens = nelson_evolve(ens, ground, relax / relax_steps, relax_steps,
                          derive_seed(master, k, "oracle/ground/walk/" + name), osmotic_nu);
      const double var = stats::variance(ens.walkers);
      entry["ground_state"] = {{"walker_variance", var},
                               {"target_variance", hbar / (2.0 * mass * o.omega0)},
                               {"l1", compare_densities(histogram_density(ens.walkers, grid, coarsen),
                                                        coarsen_density(rho0, coarsen), bin, DensityMetric::L1)}};
      if (packet_error.empty()) {
        try {
          auto fp = sample_walkers(packet0, static_cast<std::size_t>(o.walkers), nu,
                                   derive_seed(master, k, "oracle/packet/init/" + name));
          const auto fsteps = static_cast<std::int64_t>(std::ceil(t_final / o.dt - 1e-9));
          WaveFunction psi_t;
          fp = nelson_evolve_coevolved(fp, packet0, zeros, t_final / fsteps, fsteps,
                                       derive_seed(master, k, "oracle/packet/walk/" + name), &psi_t,
                                       osmotic_nu);
          entry["free_packet"] = {
              {"t", t_final},
              {"walker_width", std::sqrt(stats::variance(fp.walkers))},
              {"psi_width", psi_t.width()},
              {"l1", compare_densities(histogram_density(fp.walkers, grid, coarsen),
                                       coarsen_density(psi_t.density(), coarsen), bin, DensityMetric::L1)}};
        } catch (const std::exception& e) {
          entry["free_packet"] = {{"error", e.what()}};
        }
      }
      ab.push_back(entry);
      if (walker_frames.frames() == 0 || name == "hbar_over_2mu") {
        walker_frames = EigenTrajectory{};
        walker_frames.times = {ens.time};
        walker_frames.residuals = {0.0};
        std::vector<Eigen::VectorXd> pos;
        pos.reserve(ens.walkers.size());
        for (double x : ens.walkers) pos.push_back(Eigen::VectorXd::Constant(1, x));
        walker_frames.positions.push_back(std::move(pos));
      }
    }

    const json report = {{"code_version", kCodeVersion},
                         {"config", data_echo(config)},
                         {"conventions", convention_flags(config)},
                         {"hbar", hbar},
                         {"mass", mass},
                         {"harmonic", harmonic},
                         {"free_packet", free_packet},
                         {"nu_conventions", ab},
                         {"histogram_coarsening", coarsen},
                         {"warnings", warnings},
                         {"reference_density", {{"x0", grid.x(0)}, {"spacing", h}, {"rho", rho0}}}};
    run_ctx.write("oracle.json", report.dump(2) + "\n");

    std::ostringstream psi;
    psi << "x,re,im,rho\n";
    for (int j = 0; j < grid.n; ++j)
      psi << io::fmt(grid.x(j)) << ',' << io::fmt(ground.psi[j].real()) << ','
          << io::fmt(ground.psi[j].imag()) << ',' << io::fmt(rho0[j]) << '\n';
    run_ctx.write("oracle_psi.csv", psi.str());
    run_ctx.write("walkers.csv", io::frames_csv(walker_frames, {{"artifact", "nelson_walkers"},
                                                               {"config", data_echo(config)},
                                                               {"hbar", hbar}}));
    run_ctx.manifest({{"replica_seeds", json::array({{{"master_seed", master}}})}});
    run_ctx.result.message = "oracle: report written to " + (run_ctx.dir / "oracle.json").string();
    return run_ctx.result;
  });
}

// ---------------------------------------------------------------------------
// compare

CommandResult cmd_compare(const ExperimentConfig& config, const fs::path& trajectory,
                          const fs::path& oracle) {
  return guarded([&] {
    validate(config);
    const auto frames = io::parse_frames_csv(io::read_file(trajectory));
    json ref;
    try {
      ref = json::parse(io::read_file(oracle));
    } catch (const json::exception& e) {
      throw io::IoError("oracle report " + oracle.string() + " is not valid JSON: " + e.what());
    }
    if (!ref.contains("reference_density")) throw io::IoError("oracle report has no reference_density");
    const auto& rd = ref["reference_density"];
    const double x0 = rd.at("x0").get<double>();
    const double h = rd.at("spacing").get<double>();
    const auto rho_ref = rd.at("rho").get<std::vector<double>>();
    const auto& traj = frames.trajectory;
    if (traj.frames() == 0 || traj.particles() == 0) throw io::IoError("trajectory file has no samples");

    Run run_ctx(config, "compare");
    const int n = static_cast<int>(rho_ref.size());
    const double lo = x0 - 0.5 * h;
    const Grid grid = Grid::line(lo, lo + n * h, n, 0);
    Eigen::MatrixXd pts(static_cast<Eigen::Index>(traj.frames()) * traj.particles(), 1);
    Eigen::Index row = 0;
    for (const auto& f : traj.positions)
      for (const auto& p : f) pts(row++, 0) = p(0);
    const double bw = config.analysis.bandwidth > 0.0 ? config.analysis.bandwidth : silverman_bandwidth(pts);
    const auto kde = kde_density(pts, {}, grid, bw);

    json diag;
    double jd = 0.0;
    for (double r : traj.residuals) jd += r;
    diag["jd_residual_mean"] = traj.residuals.empty() ? 0.0 : jd / traj.residuals.size();
    const std::vector<EigenTrajectory> trajs{traj};
    try {
      if (traj.dims() < 2) throw ContractError("needs at least two directions");
      if (traj.frames() < 3) throw ContractError("needs at least three frames");
      const double tq = traj.times[traj.frames() / 2];
      const auto p2 = ensemble_points(trajs, tq, Grid::square(0.0, 1.0, 1));
      const double glo = std::min(p2.col(0).minCoeff(), p2.col(1).minCoeff());
      const double ghi = std::max(p2.col(0).maxCoeff(), p2.col(1).maxCoeff());
      const auto v = estimate_current_velocity(trajs, tq, Grid::square(glo, ghi, config.analysis.grid_cells),
                                               silverman_bandwidth(p2), config.analysis.lag);
      diag["irrotationality"] = irrotationality_residual(v);
    } catch (const std::exception& e) {
      diag["irrotationality"] = std::string("unavailable: ") + e.what();
    }
    try {
      DiffusionOptions opts;
      opts.bootstrap_seed = derive_seed(config.ensemble.master_seed.value_or(0), 0, "compare/bootstrap");
      const auto est = estimate_diffusion(trajs, config.analysis.fit_min, config.analysis.fit_max,
                                          config.analysis.method, opts);
      diag["nu_hat"] = est.nu_hat;
      diag["nu_stderr"] = est.std_error;
      if (config.model.d >= 2 && config.integrator.temperature > 0.0) {
        const double t = scaled_temperature(config.model, config.integrator.temperature, traj.particles());
        const double pred = predicted_diffusion(config.model, t);
        diag["nu_pred"] = pred;
        diag["nu_ratio"] = est.nu_hat / pred;
        diag["nu_ratio_stderr"] = est.std_error / pred;
      } else {
        diag["nu_ratio"] = "unavailable: needs model.d >= 2 and a positive temperature";
      }
    } catch (const std::exception& e) {
      diag["nu_hat"] = std::string("unavailable: ") + e.what();
    }

    const json report = {{"report_only", true},
                         {"code_version", kCodeVersion},
                         {"trajectory", trajectory.filename().string()},
                         {"oracle", oracle.filename().string()},
                         {"hbar", ref.value("hbar", 0.0)},
                         {"conventions", convention_flags(config)},
                         {"samples", pts.rows()},
                         {"bandwidth", bw},
                         {"l1", compare_densities(kde.rho, rho_ref, h, DensityMetric::L1)},
                         {"ks", compare_densities(kde.rho, rho_ref, h, DensityMetric::KS)},
                         {"diagnostics", diag}};
    run_ctx.write("compare.json", report.dump(2) + "\n");
    run_ctx.manifest({{"inputs", {{"trajectory", trajectory.string()}, {"oracle", oracle.string()}}}});
    run_ctx.result.message = "compare: L1 = " + io::fmt(report["l1"].get<double>());
    return run_ctx.result;
  });
}

// ---------------------------------------------------------------------------
// calibrate

CommandResult cmd_calibrate(const ExperimentConfig& config) {
  return guarded([&] {
    validate(config);
    Run run_ctx(config, "calibrate");
    const std::uint64_t seed = config.ensemble.master_seed.value_or(0);
    const auto report = run_calibration(seed);
    json j = to_json(report);
    j["code_version"] = kCodeVersion;
    j["seed"] = seed;
    run_ctx.write("calibration.json", j.dump(2) + "\n");
    run_ctx.manifest({{"replica_seeds", json::array({{{"master_seed", seed}}})}});
    run_ctx.result.message = "calibrate: report written";
    return run_ctx.result;
  });
}

// ---------------------------------------------------------------------------
// Command line

int cli_main(int argc, char** argv) {
  CLI::App app{"Matrix-model beables: simulation, scaling sweeps and quantum reference runs"};
  app.set_version_flag("--version", kCodeVersion);
  app.require_subcommand(1);

  struct Flags {
    std::string config, out, trajectory, oracle;
    std::optional<std::uint64_t> seed;
    std::optional<int> replicas, threads;
  } flags;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "JSON configuration or run manifest")->required();
    sub->add_option("--out", flags.out, "output directory (overrides env and config)");
    sub->add_option("--seed", flags.seed, "master seed override");
    sub->add_option("--replicas", flags.replicas, "replica count override")->check(CLI::PositiveNumber);
    sub->add_option("--threads", flags.threads, "worker threads")->check(CLI::PositiveNumber);
  };
  auto* simulate = app.add_subcommand("simulate", "run matrix-model dynamics");
  auto* sweep = app.add_subcommand("sweep", "scaling sweep over N at fixed t");
  auto* oracle = app.add_subcommand("oracle", "Schrodinger and Nelson reference runs");
  auto* compare = app.add_subcommand("compare", "compare eigenvalue marginals with an oracle");
  auto* calibrate = app.add_subcommand("calibrate", "synthetic estimator calibration suite");
  for (auto* s : {simulate, sweep, oracle, compare, calibrate}) common(s);
  compare->add_option("--trajectory", flags.trajectory, "frames CSV")->required();
  compare->add_option("--oracle", flags.oracle, "oracle JSON report")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  ExperimentConfig config;
  try {
    config = parse_config_unvalidated(io::read_file(flags.config));
  } catch (const io::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const ConfigError& e) {
    std::cerr << flags.config << ": " << e.what() << '\n';
    return kExitUsage;
  }
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) config.output.directory = env;
  if (!flags.out.empty()) config.output.directory = flags.out;
  if (flags.seed) config.ensemble.master_seed = *flags.seed;
  if (flags.replicas) config.ensemble.replicas = *flags.replicas;
  if (flags.threads) config.ensemble.threads = *flags.threads;

  CommandResult r;
  if (*simulate) r = cmd_simulate(config);
  else if (*sweep) r = cmd_sweep(config);
  else if (*oracle) r = cmd_oracle(config);
  else if (*compare) r = cmd_compare(config, flags.trajectory, flags.oracle);
  else r = cmd_calibrate(config);

  (r.exit_code == kExitOk ? std::cout : std::cerr) << r.message << '\n';
  return r.exit_code;
}

}  // namespace beables
