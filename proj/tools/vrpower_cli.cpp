// Benchmark driver: `run` sweeps solvers over seeds and emits traces, `rate`
// prints the analytic epoch-rate quantities, `check` exercises the identity
// suites on random inputs. Exit code 0 on success, 1 on any failure.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "vrpower/vrpower.hpp"

namespace {

using namespace vrpower;

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw argument_error("cannot parse " + what + " '" + s + "'");
  }
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw argument_error("cannot parse " + what + " '" + s + "'");
  }
}

// "synthetic:lambda=1.0,0.95,0.5;n=200;seed=7[;rotate=0]" or a LIBSVM path.
DatasetSpec parse_dataset(const std::string& arg, const std::string& preproc) {
  DatasetSpec spec;
  if (preproc == "standardize")
    spec.preproc = Preproc::standardize;
  else if (preproc == "minmax")
    spec.preproc = Preproc::minmax;
  else if (preproc == "none")
    spec.preproc = Preproc::none;
  else
    throw argument_error("unknown preprocessing '" + preproc + "'");

  if (arg.rfind("synthetic:", 0) != 0) {
    spec.source = DatasetSpec::Source::libsvm;
    spec.path = arg;
    spec.name = arg;
    return spec;
  }
  spec.source = DatasetSpec::Source::synthetic;
  spec.name = "synthetic";
  bool have_lambda = false, have_n = false;
  for (const auto& field : split(arg.substr(10), ';')) {
    if (field.empty()) continue;
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw argument_error("synthetic spec field '" + field + "' is not key=value");
    const std::string key = field.substr(0, eq);
    const std::string val = field.substr(eq + 1);
    if (key == "lambda") {
      for (const auto& tok : split(val, ','))
        if (!tok.empty()) spec.spectrum.push_back(parse_double(tok, "eigenvalue"));
      have_lambda = !spec.spectrum.empty();
    } else if (key == "n") {
      spec.n = static_cast<std::size_t>(parse_u64(val, "n"));
      have_n = true;
    } else if (key == "seed") {
      spec.seed = parse_u64(val, "seed");
    } else if (key == "rotate") {
      spec.rotate = parse_u64(val, "rotate") != 0;
    } else {
      throw argument_error("unknown synthetic spec key '" + key + "'");
    }
  }
  if (!have_lambda || !have_n) throw argument_error("synthetic spec needs lambda=... and n=...");
  return spec;
}

// "12" is a count (seeds 1..12); anything with a comma is an explicit list.
std::vector<std::uint64_t> parse_seeds(const std::string& arg) {
  std::vector<std::uint64_t> seeds;
  if (arg.find(',') == std::string::npos) {
    const std::uint64_t count = parse_u64(arg, "seed count");
    if (count < 1) throw argument_error("seed count must be >= 1");
    for (std::uint64_t s = 1; s <= count; ++s) seeds.push_back(s);
    return seeds;
  }
  for (const auto& tok : split(arg, ','))
    if (!tok.empty()) seeds.push_back(parse_u64(tok, "seed"));
  if (seeds.empty()) throw argument_error("seed list is empty");
  return seeds;
}

struct EtaChoice {
  bool grid = false;
  double value = 1.0;
  std::vector<double> grid_values;
};

EtaChoice parse_eta(const std::string& arg) {
  EtaChoice c;
  if (arg == "grid") {
    c.grid = true;
    c.grid_values = kDefaultEtaGrid;
    return c;
  }
  if (arg.rfind("grid:", 0) == 0) {
    c.grid = true;
    for (const auto& tok : split(arg.substr(5), ','))
      if (!tok.empty()) c.grid_values.push_back(parse_double(tok, "grid step size"));
    if (c.grid_values.empty()) throw argument_error("custom grid is empty");
    return c;
  }
  c.value = parse_double(arg, "eta");
  return c;
}

void apply_momentum(const std::string& arg, SolverSpec& spec) {
  if (arg == "none") {
    spec.config.momentum = Momentum::none;
  } else if (arg == "oracle") {
    spec.oracle_momentum = true;
  } else if (arg == "adaptive") {
    spec.config.momentum = Momentum::adaptive;
  } else if (arg.rfind("fixed:", 0) == 0) {
    spec.config.momentum = Momentum::fixed;
    spec.config.beta = parse_double(arg.substr(6), "momentum weight");
  } else {
    throw argument_error("unknown momentum mode '" + arg + "'");
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

int cmd_run(const std::string& data_arg, const std::string& preproc, const std::string& solver,
            const std::string& eta_arg, const std::string& momentum, double batch_frac,
            const std::string& epoch_len, std::size_t epochs, const std::string& seeds_arg,
            const std::string& out, const std::string& format) {
  if (format != "json" && format != "csv") throw argument_error("unknown format '" + format + "'");
  const TraceFormat tf = format == "json" ? TraceFormat::json : TraceFormat::csv;

  ExperimentPlan plan;
  plan.dataset = parse_dataset(data_arg, preproc);
  plan.seeds = parse_seeds(seeds_arg);

  SolverSpec spec;
  spec.id = solver;
  if (solver != "power" && solver != "power-m" && solver != "vr-pca" && solver != "vr-power-m" &&
      solver != "vr-hb-power")
    throw argument_error("unknown solver '" + solver + "'");
  spec.config.epochs = epochs;
  spec.batch_frac = batch_frac;
  if (epoch_len == "auto")
    spec.config.epoch_len = 0;
  else
    spec.config.epoch_len = static_cast<std::size_t>(parse_u64(epoch_len, "epoch length"));
  apply_momentum(momentum, spec);

  const EtaChoice eta = parse_eta(eta_arg);
  spec.config.eta = eta.grid ? 1.0 : eta.value;
  plan.solvers = {spec};

  if (eta.grid) {
    if (solver != "vr-hb-power" && solver != "vr-pca")
      throw argument_error("step-size grid search applies to vr-hb-power and vr-pca only");
    // The adaptive variant inherits the step size tuned for oracle momentum.
    ExperimentPlan tuned = plan;
    if (spec.config.momentum == Momentum::adaptive && solver == "vr-hb-power") {
      tuned.solvers[0].config.momentum = Momentum::none;
      tuned.solvers[0].oracle_momentum = true;
    }
    const GridResult grid = grid_search_eta(tuned, eta.grid_values);
    std::cout << "grid search (mean final error gap per step size):\n";
    for (const auto& [e, gap] : grid.table) std::cout << "  eta " << fmt(e) << "  gap " << fmt(gap) << '\n';
    std::cout << "selected eta = " << fmt(grid.best_eta) << '\n';
    plan.solvers[0].config.eta = grid.best_eta;
  }

  const auto traces = run_experiment(plan);
  if (out.empty()) {
    std::cout << (tf == TraceFormat::csv ? trace_csv(traces) : trace_json(traces));
  } else {
    emit_trace(traces, out, tf);
    std::cout << "wrote " << traces.size() << " trace(s) to " << out << '\n';
  }

  std::size_t diverged = 0;
  for (const auto& tr : traces) diverged += tr.diverged ? 1 : 0;
  const auto agg = aggregate_gaps(traces, solver);
  if (!agg.empty()) {
    const auto& last = agg.back();
    std::cout << solver << ": " << plan.seeds.size() << " seed(s), final mean gap " << fmt(last.mean_gap)
              << " (sd " << fmt(last.sd_gap) << ") after " << fmt(last.mean_passes) << " data passes";
    if (diverged > 0) std::cout << ", " << diverged << " diverged run(s)";
    std::cout << '\n';
  }
  return 0;
}

int cmd_rate(double lambda1, double lambda2, double eta, std::size_t m) {
  const RateParams r = rate_params(eta, lambda1, lambda2);
  std::cout << "gamma = " << fmt(r.gamma) << '\n'
            << "g = " << fmt(g_of_eta(eta, lambda1, lambda2, m)) << '\n'
            << "alpha1 = " << fmt(r.alpha1) << '\n'
            << "alpha2 = " << fmt(r.alpha2) << '\n'
            << "beta = " << fmt(r.beta) << '\n';
  return 0;
}

bool report(const char* name, bool ok) {
  std::cout << (ok ? "[pass] " : "[FAIL] ") << name << '\n';
  return ok;
}

int cmd_check() {
  bool ok = true;
  Rng rng(0xC0FFEE);

  {  // commutator identity on random symmetric matrices
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
      Mat g(8, 8);
      for (Eigen::Index j = 0; j < 8; ++j)
        for (Eigen::Index i = 0; i < 8; ++i) g(i, j) = rng.normal();
      const Mat c = 0.5 * (g + g.transpose());
      Vec w(8);
      for (Eigen::Index i = 0; i < 8; ++i) w[i] = rng.normal();
      w = normalize(w);
      worst = std::max(worst, commutator_identity_check(c, w));
    }
    ok &= report("commutator identity residual <= 1e-9 over 100 draws", worst <= 1e-9);
  }

  {  // quadratic-form bound on random covariances
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
      Mat a(8, 20);
      for (Eigen::Index j = 0; j < 20; ++j)
        for (Eigen::Index i = 0; i < 8; ++i) a(i, j) = rng.normal();
      const DataMatrix data = make_dense(a);
      const SpectralReference ref = reference_eigenpairs(data);
      Vec w(8);
      for (Eigen::Index i = 0; i < 8; ++i) w[i] = rng.normal();
      w = normalize(w);
      worst = std::min(worst, quadratic_form_bound_margin(explicit_covariance(data), ref.lambda1(), ref.u1, w));
    }
    ok &= report("quadratic-form variance bound margin >= -1e-12 over 100 draws", worst >= -1e-12);
  }

  {  // trace bound on matrices built from sampled batch deviations
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
      Mat a(8, 20);
      for (Eigen::Index j = 0; j < 20; ++j)
        for (Eigen::Index i = 0; i < 8; ++i) a(i, j) = rng.normal();
      const DataMatrix data = make_dense(a);
      const Mat c = explicit_covariance(data);
      const MiniBatch b = sample_minibatch(20, 4, rng);
      const Mat dev = minibatch_covariance(data, b) - c;
      Vec u(8), w(8);
      for (Eigen::Index i = 0; i < 8; ++i) u[i] = rng.normal();
      for (Eigen::Index i = 0; i < 8; ++i) w[i] = rng.normal();
      u = normalize(u);
      w = normalize(w);
      const Mat m = dev * u * u.transpose() * dev;
      const Mat p = Mat::Identity(8, 8) - w * w.transpose();
      worst = std::min(worst, trace_bound_margin(m, p, w));
    }
    ok &= report("projected trace bound margin >= -1e-12 over 100 draws", worst >= -1e-12);
  }

  {  // recurrence vs closed forms across regimes
    double worst = 0.0;
    bool bounds_ok = true;
    for (int rep = 0; rep < 200; ++rep) {
      const double b = 0.05 + 2.0 * rng.uniform01();
      const std::size_t t = static_cast<std::size_t>(rng.next_below(41));
      const double a_real = 4.0 * b * (1.01 + rng.uniform01());
      worst = std::max(worst, std::abs(p_poly(t, a_real, b) - p_closed_form(t, a_real, b)) /
                                  std::max(1e-300, std::abs(p_closed_form(t, a_real, b))));
      worst = std::max(worst, std::abs(q_poly(t, a_real, b) - q_closed_form(t, a_real, b)) /
                                  std::max(1e-300, std::abs(q_closed_form(t, a_real, b))));
      const double bt = std::pow(b, static_cast<double>(t));
      worst = std::max(worst, std::abs(p_poly(t, 4.0 * b, b) - bt) / bt);
      const double a_osc = 4.0 * b * (0.05 + 0.9 * rng.uniform01());
      bounds_ok &= p_poly(t, a_osc, b) <= bt * (1.0 + 1e-12);
      bounds_ok &= q_poly(t, a_osc, b) <= q_poly(t, 4.0 * b, b) * (1.0 + 1e-12);
    }
    ok &= report("recurrence/closed-form agreement <= 1e-9 across regimes", worst <= 1e-9);
    ok &= report("oscillatory-regime coefficients below the boundary envelope", bounds_ok);
  }

  {  // epoch rate function sanity
    bool good = g_of_eta(0.0, 1.0, 0.95, 20) == 1.0;
    double prev = 1.0;
    for (const double eta : {0.05, 0.1, 0.25, 0.5, 0.75, 1.0}) {
      const double g = g_of_eta(eta, 1.0, 0.95, 20);
      good &= g < prev;
      prev = g;
    }
    for (int rep = 0; rep < 50; ++rep) {
      const double l2 = 0.2 + 0.7 * rng.uniform01();
      const double eta = 0.05 + 0.95 * rng.uniform01();
      const std::size_t m = 1 + static_cast<std::size_t>(rng.next_below(15));
      const RateParams r = rate_params(eta, 1.0, l2);
      const double via_p = p_poly(m, r.alpha2, r.beta) / p_poly(m, r.alpha1, r.beta);
      const double g = g_of_eta(eta, 1.0, l2, m);
      good &= std::abs(g - via_p) <= 1e-9 * via_p;
    }
    ok &= report("epoch rate: g(0) = 1, strictly decreasing, matches the coefficient ratio", good);
  }

  return ok ? 0 : 1;
}

// key = value lines; blank lines and full-line '#' comments are skipped. The
// value is everything after the first '=', so synthetic specs pass through
// unharmed. A key whose flag appeared on the command line is ignored.
void apply_config(const std::string& path, const CLI::App& run, std::string& data_arg,
                  std::string& preproc, std::string& solver, std::string& eta_arg,
                  std::string& momentum, double& batch_frac, std::string& epoch_len,
                  std::size_t& epochs, std::string& seeds_arg, std::string& out,
                  std::string& format) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config file '" + path + "'");
  const auto trim = [](const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) throw parse_error(lineno, "expected key = value");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) throw parse_error(lineno, "missing key");
    static const std::vector<std::string> known = {"data",      "preproc",   "solver", "eta",
                                                   "momentum",  "batch-frac", "epoch-len",
                                                   "epochs",    "seeds",     "out",    "format"};
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw argument_error("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (run.count("--" + key) > 0) continue;
    if (key == "data") data_arg = value;
    else if (key == "preproc") preproc = value;
    else if (key == "solver") solver = value;
    else if (key == "eta") eta_arg = value;
    else if (key == "momentum") momentum = value;
    else if (key == "batch-frac") batch_frac = parse_double(value, "batch-frac");
    else if (key == "epoch-len") epoch_len = value;
    else if (key == "epochs") epochs = static_cast<std::size_t>(parse_u64(value, "epochs"));
    else if (key == "seeds") seeds_arg = value;
    else if (key == "out") out = value;
    else if (key == "format") format = value;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stochastic variance-reduced heavy-ball power iteration benchmark"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run solvers over seeds and emit traces");
  std::string data_arg, preproc = "none", solver = "vr-hb-power", eta_arg = "grid";
  std::string momentum = "adaptive", epoch_len = "auto", seeds_arg = "10", out, format = "csv";
  double batch_frac = 0.05;
  std::size_t epochs = 50;
  run->add_option("--data", data_arg, "LIBSVM path or synthetic:lambda=...;n=...;seed=...");
  run->add_option("--preproc", preproc, "standardize | minmax | none (default none)");
  run->add_option("--solver", solver, "power | power-m | vr-pca | vr-power-m | vr-hb-power");
  run->add_option("--eta", eta_arg, "step size, 'grid', or 'grid:0.1,0.5,...'");
  run->add_option("--momentum", momentum, "none | fixed:<beta> | oracle | adaptive");
  run->add_option("--batch-frac", batch_frac, "mini-batch size as a fraction of n (default 0.05)");
  run->add_option("--epoch-len", epoch_len, "inner steps per epoch, or 'auto' for m = n/|S|");
  run->add_option("--epochs", epochs, "epochs (iterations for the one-loop solvers)");
  run->add_option("--seeds", seeds_arg, "seed count ('10' means seeds 1..10) or comma list");
  run->add_option("--out", out, "output path; stdout when omitted");
  run->add_option("--format", format, "csv | json");
  std::string config_path;
  run->add_option("--config", config_path, "config file with key = value lines; flags override");

  auto* rate = app.add_subcommand("rate", "print rate quantities for a two-eigenvalue model");
  double lambda1 = 0.0, lambda2 = 0.0, eta_val = 1.0;
  std::size_t m_len = 20;
  rate->add_option("--lambda1", lambda1)->required();
  rate->add_option("--lambda2", lambda2)->required();
  rate->add_option("--eta", eta_val)->required();
  rate->add_option("--m", m_len, "epoch length (default 20)");

  auto* check = app.add_subcommand("check", "run the identity and bound suites");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      if (!config_path.empty())
        apply_config(config_path, *run, data_arg, preproc, solver, eta_arg, momentum, batch_frac,
                     epoch_len, epochs, seeds_arg, out, format);
      if (data_arg.empty()) throw argument_error("--data is required (flag or config file)");
      return cmd_run(data_arg, preproc, solver, eta_arg, momentum, batch_frac, epoch_len, epochs,
                     seeds_arg, out, format);
    }
    if (rate->parsed()) return cmd_rate(lambda1, lambda2, eta_val, m_len);
    if (check->parsed()) return cmd_check();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
