#include "cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "dmlsl/error.hpp"
#include "dmlsl/numfmt.hpp"
#include "dmlsl/resampling.hpp"
#include "dmlsl/rng.hpp"

namespace dmlsl::cli {

namespace {

constexpr std::string_view kDgpPrefix = "dgp:";

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t comma = text.find(',', start);
    if (comma == std::string_view::npos) comma = text.size();
    const auto item = trim(text.substr(start, comma - start));
    if (!item.empty()) out.emplace_back(item);
    start = comma + 1;
  }
  return out;
}

PlrDgpConfig parse_dgp_spec(std::string_view spec, std::uint64_t seed) {
  PlrDgpConfig dgp;
  dgp.seed = seed;
  for (const auto& item : split_list(spec)) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw DmlError(ErrorCode::kInvalidArgument, fmt::format("bad dgp item '{}'", item));
    const std::string key = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    const auto num = [&] {
      const auto v = parse_double(value);
      if (!v) throw DmlError(ErrorCode::kInvalidArgument, fmt::format("dgp {} needs a number", key));
      return *v;
    };
    const auto count = [&] {
      const auto v = parse_int(value);
      if (!v || *v < 0) throw DmlError(ErrorCode::kInvalidArgument, fmt::format("dgp {} needs a count", key));
      return static_cast<std::size_t>(*v);
    };
    if (key == "n") {
      dgp.n_obs = count();
    } else if (key == "dim_x") {
      dgp.dim_x = count();
    } else if (key == "theta") {
      dgp.theta0 = num();
    } else if (key == "g") {
      dgp.g_form = parse_function_form(value);
    } else if (key == "m") {
      dgp.m_form = parse_function_form(value);
    } else if (key == "noise_u") {
      dgp.noise_sd_u = num();
    } else if (key == "noise_v") {
      dgp.noise_sd_v = num();
    } else {
      throw DmlError(ErrorCode::kInvalidArgument, fmt::format("unknown dgp key '{}'", key));
    }
  }
  validate(dgp);
  return dgp;
}

DmlDataset load_dataset(const RunConfig& cfg) {
  if (cfg.dataset.empty()) throw DmlError(ErrorCode::kInvalidArgument, "no dataset given (--data)");
  if (cfg.dataset.starts_with(kDgpPrefix)) {
    const DmlDataset generated =
        generate_plr(parse_dgp_spec(std::string_view(cfg.dataset).substr(kDgpPrefix.size()), cfg.seed));
    if (cfg.y_col == "y" && cfg.d_col == "d" && cfg.x_cols.empty()) return generated;
    ColumnRoles roles{cfg.y_col, cfg.d_col, cfg.x_cols};
    if (roles.x_cols.empty()) roles.x_cols = generated.roles().x_cols;
    return DmlDataset::create(generated.columns(), roles);
  }

  if (!std::filesystem::is_regular_file(cfg.dataset)) {
    throw DmlError(ErrorCode::kIo, fmt::format("dataset file '{}' not found", cfg.dataset));
  }
  ColumnRoles roles{cfg.y_col, cfg.d_col, cfg.x_cols};
  if (roles.x_cols.empty()) {
    std::ifstream in(cfg.dataset);
    std::string header;
    std::getline(in, header);
    for (auto& name : split_list(header)) {
      if (name != roles.y_col && name != roles.d_col) roles.x_cols.push_back(name);
    }
  }
  return load_csv(cfg.dataset, roles);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DmlError(ErrorCode::kIo, fmt::format("cannot write '{}'", path.string()));
  out << text;
  if (!out) throw DmlError(ErrorCode::kIo, fmt::format("write to '{}' failed", path.string()));
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DmlError(ErrorCode::kIo, fmt::format("cannot open '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string invocations_csv(const std::vector<InvocationTiming>& timings) {
  std::string out = "task_id,duration_ms\n";
  for (const auto& t : timings) out += fmt::format("{},{}\n", t.task_id, t.duration_ms);
  return out;
}

std::string ledger_record(const BillingLedger& ledger) {
  return fmt::format("memory_mb={}\ninvocations={}\ntime_makespan_ms={}\ntime_gb_seconds={}\ntime_usd={}\n",
                     ledger.memory_mb, ledger.invocations, ledger.makespan_ms, format_double(ledger.total_gb_seconds),
                     format_double(ledger.total_usd));
}

const std::map<std::string, BackendKind>& backend_names() {
  static const std::map<std::string, BackendKind> names{
      {"serial", BackendKind::kSerial}, {"pool", BackendKind::kPool}, {"faas-sim", BackendKind::kFaasSim}};
  return names;
}

// Only registered for --help; the value is consumed by expand_config_files.
void add_config_option(CLI::App& cmd) {
  static std::string unused;
  cmd.add_option("--config", unused, "key=value file with default flag values");
}

// Replaces "--config FILE" by one "--key=value" token per file line, placed
// right after the subcommand so explicit flags (take-last policy) win.
std::vector<std::string> expand_config_files(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::vector<std::string> from_files;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::optional<std::string> path;
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw CLI::ArgumentMismatch("--config", 1, 0);
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    }
    if (!path) {
      rest.push_back(args[i]);
      continue;
    }
    std::istringstream in(read_text(*path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string_view body = trim(line);
      if (body.empty() || body.front() == '#') continue;
      const auto eq = body.find('=');
      if (eq == std::string_view::npos) {
        throw DmlError(ErrorCode::kInvalidArgument, fmt::format("{}:{}: expected key=value", *path, line_no));
      }
      std::string key(trim(body.substr(0, eq)));
      if (key.rfind("--", 0) == 0) key.erase(0, 2);
      from_files.push_back(fmt::format("--{}={}", key, trim(body.substr(eq + 1))));
    }
  }
  if (from_files.empty() || rest.empty()) return rest;
  rest.insert(rest.begin() + 1, from_files.begin(), from_files.end());
  return rest;
}

// Flags shared by fit and sweep.
void add_run_options(CLI::App& cmd, RunConfig& cfg, bool& bonus_preset, std::string& x_list) {
  cmd.add_option("--data", cfg.dataset, "CSV path or dgp:n=..,dim_x=..,theta=..");
  cmd.add_flag("--preset-bonus", bonus_preset, "Bonus-data roles and 500-tree forests, K=5, M=100");
  cmd.add_option("--y", cfg.y_col, "Outcome column");
  cmd.add_option("--d", cfg.d_col, "Treatment column");
  cmd.add_option("--x", x_list, "Comma-separated control columns (default: all others)");
  cmd.add_option("--learner-g", cfg.learner_g, "Learner for the outcome regression");
  cmd.add_option("--learner-m", cfg.learner_m, "Learner for the treatment regression");
  cmd.add_option("--n-folds", cfg.n_folds, "Number of folds K")->check(CLI::Range(2, 1 << 20));
  cmd.add_option("--n-rep", cfg.n_rep, "Number of repeated splits M")->check(CLI::Range(1, 1 << 20));
  cmd.add_option_function<std::string>(
      "--scaling",
      [&cfg](const std::string& text) {
        try {
          cfg.scaling = parse_scaling_mode(text);
        } catch (const DmlError& e) {
          throw CLI::ValidationError("--scaling", e.what());
        }
      },
      "per_rep or per_fold");
  cmd.add_option("--workers", cfg.workers, "Pool backend worker threads")->check(CLI::PositiveNumber);
  cmd.add_option("--sim-config", cfg.sim_config, "Simulator key=value config file");
  cmd.add_option("--memory-mb", cfg.memory_mb, "Simulated memory allocation");
  cmd.add_option("--time-limit-ms", cfg.time_limit_ms, "Per-task wall-time limit for serial/pool (0 = none)");
  cmd.add_option("--seed", cfg.seed, "Master seed for folds, learners and simulation");
  cmd.add_option("--level", cfg.level, "Confidence level")->check(CLI::Range(0.0, 1.0));
  cmd.add_option("--store", cfg.store, "Object store directory");
  add_config_option(cmd);
}

void finish_run_options(RunConfig& cfg, bool bonus_preset, const std::string& x_list, const CLI::App& cmd) {
  if (bonus_preset) {
    RunConfig preset = cfg;
    apply_bonus_preset(preset);
    // Explicit flags still win over the preset.
    if (cmd.count("--y") == 0) cfg.y_col = preset.y_col;
    if (cmd.count("--d") == 0) cfg.d_col = preset.d_col;
    if (x_list.empty()) cfg.x_cols = preset.x_cols;
    if (cmd.count("--learner-g") == 0) cfg.learner_g = preset.learner_g;
    if (cmd.count("--learner-m") == 0) cfg.learner_m = preset.learner_m;
    if (cmd.count("--n-folds") == 0) cfg.n_folds = preset.n_folds;
    if (cmd.count("--n-rep") == 0) cfg.n_rep = preset.n_rep;
  }
  if (!x_list.empty()) cfg.x_cols = split_list(x_list);
}

}  // namespace

void apply_bonus_preset(RunConfig& cfg) {
  cfg.y_col = "inuidur1";
  cfg.d_col = "tg";
  cfg.x_cols = {"female", "black", "othrace", "dep1", "dep2", "q2",      "q3",     "q4",
                "q5",     "q6",    "agelt35", "agegt54", "durable", "lusd", "husd"};
  cfg.learner_g = "random_forest(n_estimators=500)";
  cfg.learner_m = "random_forest(n_estimators=500)";
  cfg.n_folds = 5;
  cfg.n_rep = 100;
}

SimConfig resolve_sim_config(const RunConfig& cfg) {
  SimConfig sim;
  sim.seed = derive_seed(cfg.seed, {2});
  if (cfg.sim_config) sim = load_sim_config(*cfg.sim_config, sim);
  if (cfg.memory_mb) sim.memory_mb = *cfg.memory_mb;
  validate(sim);
  return sim;
}

FitOutcome cmd_fit(const RunConfig& cfg) {
  PlrFitOptions options;
  options.learner_g = parse_learner_spec(cfg.learner_g);
  options.learner_m = parse_learner_spec(cfg.learner_m);
  options.scaling = cfg.scaling;
  options.level = cfg.level;
  options.seed = derive_seed(cfg.seed, {1});
  normal_critical_value(cfg.level);
  const SimConfig sim = resolve_sim_config(cfg);

  const DmlDataset ds = load_dataset(cfg);
  const FoldPlan plan = draw_folds(ds.n_obs(), cfg.n_folds, cfg.n_rep, derive_seed(cfg.seed, {0}));
  const ObjectStore store(cfg.store);
  const DatasetRef ref = store_dataset(ds, store);

  FitOutcome outcome;
  std::unique_ptr<ExecutionBackend> backend;
  FaasSimBackend* faas = nullptr;
  switch (cfg.backend) {
    case BackendKind::kSerial: backend = std::make_unique<SerialBackend>(store, cfg.time_limit_ms); break;
    case BackendKind::kPool: backend = std::make_unique<PoolBackend>(store, cfg.workers, cfg.time_limit_ms); break;
    case BackendKind::kFaasSim: {
      auto sim_backend = std::make_unique<FaasSimBackend>(store, sim);
      faas = sim_backend.get();
      backend = std::move(sim_backend);
      break;
    }
  }

  outcome.fit = fit_dml_plr(ds, ref, plan, *backend, options);
  outcome.record = to_record(outcome.fit);
  outcome.record += fmt::format("dataset_key={}\nseed={}\n", ref.store_key, cfg.seed);
  if (faas) {
    outcome.ledger = faas->last_ledger();
    outcome.profile = faas->last_profile();
    outcome.record += ledger_record(*outcome.ledger);
  }
  return outcome;
}

void cmd_generate(const PlrDgpConfig& dgp, const std::filesystem::path& out) {
  const DmlDataset ds = generate_plr(dgp);
  write_csv(ds, out);
  write_text(out.string() + ".meta",
             fmt::format("theta0={}\nn_obs={}\ndim_x={}\ng_form={}\nm_form={}\nnoise_sd_u={}\nnoise_sd_v={}\nseed={}\n",
                         format_double(dgp.theta0), dgp.n_obs, dgp.dim_x, to_string(dgp.g_form),
                         to_string(dgp.m_form), format_double(dgp.noise_sd_u), format_double(dgp.noise_sd_v),
                         dgp.seed));
}

std::vector<SweepRow> cmd_sweep(const SweepOptions& opts) {
  if (opts.run.backend != BackendKind::kFaasSim) {
    throw DmlError(ErrorCode::kInvalidArgument, "sweep requires the faas-sim backend");
  }
  if (opts.memory_grid.empty()) throw DmlError(ErrorCode::kInvalidArgument, "memory grid is empty");
  if (opts.repeats < 1) throw DmlError(ErrorCode::kInvalidArgument, "repeats must be >= 1");
  const SimConfig tmpl = resolve_sim_config(opts.run);
  for (int memory : opts.memory_grid) {
    SimConfig probe = tmpl;
    probe.memory_mb = memory;
    validate(probe);
  }

  // Profiles are measured at the reference allocation with no runtime cap so
  // that every grid cell can be replayed, including the ones that time out.
  RunConfig measure = opts.run;
  SimConfig uncapped = tmpl;
  uncapped.max_runtime_ms = std::numeric_limits<std::int64_t>::max();
  uncapped.memory_mb = std::clamp(tmpl.cpu_reference_mb, kMinMemoryMb, kMaxMemoryMb);
  const auto config_path = opts.run.store / "sweep-measure.simconfig";
  std::filesystem::create_directories(opts.run.store);
  write_text(config_path, to_config_text(uncapped));
  measure.sim_config = config_path;
  measure.memory_mb.reset();

  std::vector<ScalingWorkload> workloads;
  for (ScalingMode scaling : opts.scalings) {
    for (std::size_t r = 0; r < opts.repeats; ++r) {
      measure.scaling = scaling;
      FitOutcome run = cmd_fit(measure);
      workloads.push_back({scaling, r, std::move(*run.profile)});
    }
  }
  return sweep_cost(workloads, opts.memory_grid, tmpl);
}

BillingLedger cmd_simulate_cost(const WorkloadProfile& profile, const SimConfig& cfg) {
  return simulate_ledger(profile, cfg);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Distributed double machine learning for the partially linear model", "dmlsl"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  // generate
  PlrDgpConfig dgp;
  std::string g_form = "linear";
  std::string m_form = "linear";
  std::filesystem::path gen_out;
  auto* gen = app.add_subcommand("generate", "Write a synthetic partially linear dataset as CSV");
  gen->add_option("--n", dgp.n_obs, "Observations")->required();
  gen->add_option("--dim-x", dgp.dim_x, "Number of controls");
  gen->add_option("--theta", dgp.theta0, "True causal parameter");
  gen->add_option("--g-form", g_form, "zero, linear or nonlinear");
  gen->add_option("--m-form", m_form, "zero, linear or nonlinear");
  gen->add_option("--noise-u", dgp.noise_sd_u, "Outcome noise standard deviation");
  gen->add_option("--noise-v", dgp.noise_sd_v, "Treatment noise standard deviation");
  gen->add_option("--seed", dgp.seed, "Generator seed");
  gen->add_option("--out", gen_out, "Output CSV path")->required();
  add_config_option(*gen);

  // fit
  RunConfig fit_cfg;
  bool fit_bonus = false;
  std::string fit_x;
  std::optional<std::filesystem::path> fit_out, fit_invocations, fit_profile;
  auto* fit_cmd = app.add_subcommand("fit", "Estimate the causal parameter with repeated cross-fitting");
  add_run_options(*fit_cmd, fit_cfg, fit_bonus, fit_x);
  fit_cmd->add_option("--backend", fit_cfg.backend, "serial, pool or faas-sim")
      ->transform(CLI::CheckedTransformer(backend_names(), CLI::ignore_case))
      ->option_text("serial|pool|faas-sim");
  fit_cmd->add_option("--out", fit_out, "Write the key=value result record here");
  fit_cmd->add_option("--invocations-out", fit_invocations, "Per-invocation CSV (billing ledger on faas-sim)");
  fit_cmd->add_option("--profile-out", fit_profile, "Measured workload profile CSV (faas-sim only)");

  // sweep
  SweepOptions sweep_opts;
  sweep_opts.run.backend = BackendKind::kFaasSim;
  bool sweep_bonus = false;
  std::string sweep_x;
  std::string grid_text = "256,512,1024,2048";
  std::string scalings_text = "per_rep,per_fold";
  std::optional<std::filesystem::path> sweep_out;
  auto* sweep_cmd = app.add_subcommand("sweep", "Simulated time/cost over memory settings and scaling modes");
  add_run_options(*sweep_cmd, sweep_opts.run, sweep_bonus, sweep_x);
  sweep_cmd->add_option("--backend", sweep_opts.run.backend, "Must be faas-sim")
      ->transform(CLI::CheckedTransformer(backend_names(), CLI::ignore_case))
      ->option_text("serial|pool|faas-sim");
  sweep_cmd->add_option("--memory-grid", grid_text, "Comma-separated memory sizes in MB");
  sweep_cmd->add_option("--scalings", scalings_text, "Comma-separated scaling modes");
  sweep_cmd->add_option("--repeats", sweep_opts.repeats, "Independent measured runs per scaling")
      ->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--out", sweep_out, "Sweep CSV path (default: stdout)");

  // simulate-cost
  std::filesystem::path profile_path;
  std::optional<std::filesystem::path> sim_cfg_path, ledger_out;
  std::optional<int> sim_memory;
  std::uint64_t sim_seed = 0;
  auto* sim_cmd = app.add_subcommand("simulate-cost", "Replay a recorded workload profile through the simulator");
  sim_cmd->add_option("--profile", profile_path, "Profile CSV (task_id,base_ms)")->required();
  sim_cmd->add_option("--sim-config", sim_cfg_path, "Simulator key=value config file");
  sim_cmd->add_option("--memory-mb", sim_memory, "Memory allocation override");
  sim_cmd->add_option("--seed", sim_seed, "Seed for cold/warm draws");
  sim_cmd->add_option("--ledger-out", ledger_out, "Per-invocation ledger CSV");
  add_config_option(*sim_cmd);

  std::vector<std::string> expanded;
  try {
    expanded = expand_config_files(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return 1;
  }

  try {
    std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*gen) {
      dgp.g_form = parse_function_form(g_form);
      dgp.m_form = parse_function_form(m_form);
      cmd_generate(dgp, gen_out);
      out << "path=" << gen_out.string() << "\nn_obs=" << dgp.n_obs << "\ncolumns=" << dgp.dim_x + 2 << "\n";
    } else if (*fit_cmd) {
      finish_run_options(fit_cfg, fit_bonus, fit_x, *fit_cmd);
      const FitOutcome result = cmd_fit(fit_cfg);
      out << result.record;
      out.flush();
      if (fit_out) write_text(*fit_out, result.record);
      if (fit_invocations) {
        write_text(*fit_invocations, result.ledger ? ledger_to_csv(*result.ledger) : invocations_csv(result.fit.diagnostics.invocations));
      }
      if (fit_profile) {
        if (!result.profile) throw DmlError(ErrorCode::kInvalidArgument, "--profile-out needs --backend faas-sim");
        write_text(*fit_profile, profile_to_csv(*result.profile));
      }
      const InferenceSummary s = infer(result.fit);
      fmt::print(err, "theta = {:.6f} (se {:.6f}), {:.0f}% CI [{:.6f}, {:.6f}] from {} invocations, {} learner fits\n",
                 s.theta, s.se, 100 * s.level, s.ci_lower, s.ci_upper, result.fit.diagnostics.n_invocations,
                 result.fit.diagnostics.n_learner_fits);
    } else if (*sweep_cmd) {
      finish_run_options(sweep_opts.run, sweep_bonus, sweep_x, *sweep_cmd);
      sweep_opts.memory_grid.clear();
      for (const auto& item : split_list(grid_text)) {
        const auto v = parse_int(item);
        if (!v) throw DmlError(ErrorCode::kInvalidArgument, fmt::format("bad memory size '{}'", item));
        sweep_opts.memory_grid.push_back(static_cast<int>(*v));
      }
      sweep_opts.scalings.clear();
      for (const auto& item : split_list(scalings_text)) sweep_opts.scalings.push_back(parse_scaling_mode(item));
      const std::string csv = sweep_to_csv(cmd_sweep(sweep_opts));
      if (sweep_out) {
        write_text(*sweep_out, csv);
        out << "path=" << sweep_out->string() << "\n";
      } else {
        out << csv;
      }
    } else if (*sim_cmd) {
      SimConfig sim;
      sim.seed = sim_seed;
      if (sim_cfg_path) sim = load_sim_config(*sim_cfg_path, sim);
      if (sim_memory) sim.memory_mb = *sim_memory;
      validate(sim);
      const BillingLedger ledger = cmd_simulate_cost(parse_profile_csv(read_text(profile_path)), sim);
      out << ledger_record(ledger);
      if (ledger.first_timeout) out << "timed_out_task=" << *ledger.first_timeout << "\n";
      if (ledger_out) write_text(*ledger_out, ledger_to_csv(ledger));
    }
  } catch (const DmlError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}

}  // namespace dmlsl::cli
