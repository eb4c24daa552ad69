// qbatt: sweeps, protocol comparison and spectrum info for quantum-battery
// charging protocols.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <qbatt/qbatt.hpp>

namespace {

struct Common {
  int d = 2;
  int n = 1;
  double omega = 1.0;
  std::string temp;
  std::string temps;
  std::string out;
  std::string format = "csv";
  int jobs = 1;
};

void add_common(CLI::App* sub, Common& c, bool with_grid_temps = true) {
  sub->add_option("--d", c.d, "Local dimension of each subsystem")->check(CLI::PositiveNumber);
  sub->add_option("--n-qubits", c.n, "Number of subsystems N");
  sub->add_option("--omega", c.omega, "Level spacing");
  sub->add_option("--temp", c.temp, "Temperature (value or grid)");
  if (with_grid_temps) sub->add_option("--temps", c.temps, "Temperature grid min:max:step");
  sub->add_option("--out", c.out, "Output file (default stdout)");
  sub->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  sub->add_option("--jobs", c.jobs, "Worker threads");
}

std::vector<double> temperatures(const Common& c, const std::string& fallback) {
  if (!c.temp.empty() && !c.temps.empty()) throw qbatt::ValidationError("give either --temp or --temps");
  const std::string& t = !c.temps.empty() ? c.temps : (!c.temp.empty() ? c.temp : fallback);
  return qbatt::parse_grid(t);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// Opens --out or falls back to stdout.
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (path.empty() || path == "-") return;
    file_ = std::make_unique<std::ofstream>(path);
    if (!*file_) throw qbatt::ValidationError("cannot write output file '" + path + "'");
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }
  void finish() {
    stream().flush();
    if (!stream()) throw qbatt::RuntimeFailure("write failed");
  }

 private:
  std::unique_ptr<std::ofstream> file_;
};

struct SweepFlags {
  Common common;
  std::string delta_eps;
  double step = 0.05;
  std::string protocol;
  std::uint64_t seed = 0;
  int restarts = 64;
  int samples = 100;
  bool no_timing = false;
  std::string trace_out;
};

void add_sweep_flags(CLI::App* sub, SweepFlags& f, const std::string& default_protocol) {
  add_common(sub, f.common);
  f.protocol = default_protocol;
  sub->add_option("--delta-eps", f.delta_eps, "Charge grid min:max:step (default 0..max)");
  sub->add_option("--step", f.step, "Step of the default charge grid");
  sub->add_option("--protocol", f.protocol, "Comma-separated protocol tags")->capture_default_str();
  sub->add_option("--seed", f.seed, "Seed for randomized searches");
  sub->add_option("--restarts", f.restarts, "Restarts for oracle and local searches");
  sub->add_option("--samples", f.samples, "Samples per point for local-rand");
  sub->add_flag("--no-timing", f.no_timing, "Leave elapsed_ms empty");
  sub->add_option("--trace-out", f.trace_out, "Write the step list of a single run as JSON lines");
}

int run_sweep(const SweepFlags& f) {
  qbatt::SweepConfig cfg;
  cfg.d = f.common.d;
  cfg.n_subsystems = f.common.n;
  cfg.omega = f.common.omega;
  cfg.temperatures = temperatures(f.common, "1");
  if (!f.delta_eps.empty()) cfg.delta_eps = qbatt::parse_grid(f.delta_eps);
  cfg.default_step = f.step;
  cfg.protocols = split_list(f.protocol);
  cfg.seed = f.seed;
  cfg.restarts = f.restarts;
  cfg.samples = f.samples;
  cfg.jobs = f.common.jobs;
  cfg.timing = !f.no_timing;

  if (!f.trace_out.empty()) {
    if (cfg.protocols.size() != 1 || cfg.temperatures.size() != 1 || cfg.delta_eps.size() != 1)
      throw qbatt::ValidationError("--trace-out needs one protocol, one temperature and one delta_eps");
    const auto& tag = cfg.protocols.front();
    if (tag != "precision" && tag != "fluctuation")
      throw qbatt::ValidationError("--trace-out supports precision and fluctuation only");
    auto spec = qbatt::build_spectrum(cfg.d, cfg.n_subsystems, cfg.omega);
    const auto beta = qbatt::Beta::from_temperature(cfg.temperatures.front());
    qbatt::FluctOptions fo;
    fo.seed = cfg.seed;
    const auto run = tag == "precision" ? qbatt::charge_min_variance(spec, beta, cfg.delta_eps.front())
                                        : qbatt::charge_min_fluct(spec, beta, cfg.delta_eps.front(), fo);
    std::ofstream tf(f.trace_out);
    if (!tf) throw qbatt::ValidationError("cannot write trace file '" + f.trace_out + "'");
    qbatt::write_trace_jsonl(tf, run.trace.steps());
  }

  const auto res = qbatt::run_sweep(cfg);
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
  Sink sink(f.common.out);
  if (f.common.format == "json") qbatt::write_json(sink.stream(), res.rows);
  else qbatt::write_csv(sink.stream(), res.rows);
  sink.finish();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Charging protocols for finite-dimensional quantum batteries"};
  app.require_subcommand(1);

  SweepFlags sweep_f, local_f, oracle_f;
  auto* sweep = app.add_subcommand("sweep", "Run protocols over temperature and charge grids");
  add_sweep_flags(sweep, sweep_f, "precision");

  auto* local = app.add_subcommand("local", "Local charging of N qubits (SLCP, optimal, random)");
  add_sweep_flags(local, local_f, "slcp,local-opt-v,local-opt-w");

  auto* oracle = app.add_subcommand("oracle", "Brute-force Givens search (D <= 16)");
  add_sweep_flags(oracle, oracle_f, "oracle-v,oracle-w");

  Common cmp_c;
  double cmp_step = 0.01;
  std::string cmp_eval = "ideal,realized";
  std::uint64_t cmp_seed = 0;
  auto* cmp = app.add_subcommand("compare", "Precision vs fluctuation protocol metrics");
  add_common(cmp, cmp_c);
  cmp->add_option("--step", cmp_step, "Charge grid step");
  cmp->add_option("--evaluation", cmp_eval, "ideal, realized or both")->capture_default_str();
  cmp->add_option("--seed", cmp_seed, "Seed for the chain search");

  Common info_c;
  info_c.format = "text";
  auto* inf = app.add_subcommand("info", "Spectrum, initial energy and charge range");
  inf->add_option("--d", info_c.d, "Local dimension");
  inf->add_option("--n-qubits", info_c.n, "Number of subsystems N");
  inf->add_option("--omega", info_c.omega, "Level spacing");
  inf->add_option("--temp", info_c.temp, "Temperature");
  inf->add_option("--out", info_c.out, "Output file");
  inf->add_option("--format", info_c.format, "text or json")->check(CLI::IsMember({"text", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*sweep) return run_sweep(sweep_f);
    if (*local) {
      local_f.common.d = 2;
      return run_sweep(local_f);
    }
    if (*oracle) return run_sweep(oracle_f);
    if (*cmp) {
      qbatt::CompareConfig cfg;
      cfg.d = cmp_c.d;
      cfg.n_subsystems = cmp_c.n;
      cfg.omega = cmp_c.omega;
      cfg.temperatures = temperatures(cmp_c, "1");
      cfg.step = cmp_step;
      cfg.evaluations = split_list(cmp_eval);
      cfg.seed = cmp_seed;
      cfg.jobs = cmp_c.jobs;
      const auto rows = qbatt::compare(cfg);
      Sink sink(cmp_c.out);
      if (cmp_c.format == "json") {
        auto arr = nlohmann::json::array();
        for (const auto& r : rows) arr.push_back(qbatt::to_json(r));
        sink.stream() << arr.dump(2) << '\n';
      } else {
        sink.stream() << qbatt::compare_csv_header << '\n';
        for (const auto& r : rows) sink.stream() << qbatt::compare_csv_row(r) << '\n';
      }
      sink.finish();
      return 0;
    }
    if (*inf) {
      const double t = info_c.temp.empty() ? 1.0 : qbatt::parse_grid(info_c.temp).front();
      const auto r = qbatt::info(info_c.d, info_c.n, info_c.omega, t);
      Sink sink(info_c.out);
      if (info_c.format == "json") sink.stream() << qbatt::to_json(r).dump(2) << '\n';
      else qbatt::write_info_text(sink.stream(), r);
      sink.finish();
      return 0;
    }
  } catch (const qbatt::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}
