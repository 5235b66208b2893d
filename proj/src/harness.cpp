#include "fusion/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <thread>

#include <json.hpp>

#include "fusion/common.hpp"
#include "fusion/discrepancy.hpp"
#include "fusion/metrics.hpp"
#include "fusion/moments.hpp"
#include "fusion/rng.hpp"

namespace fusion {

namespace fs = std::filesystem;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string format_dial(double dial) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", dial);
  return buf;
}

}  // namespace

std::string MethodSpec::label() const {
  std::string base = to_string(method);
  if (method == TrainMethod::kWeighted && alpha.has_value() && *alpha != 1.0) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s_a%g", base.c_str(), *alpha);
    return buf;
  }
  return base;
}

void ExperimentConfig::validate() const {
  if (n_seeds < 1) throw ConfigError("experiment: seeds must be positive");
  if (dials.empty()) throw ConfigError("experiment: dial list is empty");
  for (double d : dials)
    if (!(d >= 0.0 && d <= 1.0)) throw ConfigError("experiment: dial outside [0,1]");
  if (jobs < 1) throw ConfigError("experiment: jobs must be positive");
  if (!(eval_frac > 0.0 && eval_frac < 1.0))
    throw ConfigError("experiment: eval_frac must lie in (0,1)");
  if (methods.empty()) throw ConfigError("experiment: no methods selected");
  if (out_dir.empty()) throw ConfigError("experiment: out_dir is empty");
  data.validate();
  train.validate();
}

namespace {

const std::vector<MethodSpec> kDefaultMethods = {
    {TrainMethod::kPd, {}},       {TrainMethod::kDualOnly, {}},
    {TrainMethod::kIpmOnly, {}},  {TrainMethod::kWeighted, {}},
    {TrainMethod::kObsOnly, {}},  {TrainMethod::kRctOnly, {}},
    {TrainMethod::kTLearner, {}},
};

void require_keys(const json& j, const std::vector<std::string>& allowed,
                  const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
void maybe(const json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

void parse_data(const json& j, SyntheticConfig& d) {
  require_keys(j,
               {"n_rct", "n_obs", "n_cont", "n_cat", "n_levels", "sigma_rct", "sigma_obs",
                "overlap_dial", "exclusion_frac"},
               "data");
  maybe(j, "n_rct", d.n_rct);
  maybe(j, "n_obs", d.n_obs);
  maybe(j, "n_cont", d.n_cont);
  maybe(j, "n_cat", d.n_cat);
  maybe(j, "n_levels", d.n_levels);
  maybe(j, "sigma_rct", d.sigma_rct);
  maybe(j, "sigma_obs", d.sigma_obs);
  maybe(j, "overlap_dial", d.overlap_dial);
  maybe(j, "exclusion_frac", d.exclusion_frac);
}

void parse_sizes(const json& j, NetSizes& s) {
  require_keys(j, {"rep_hidden", "rep_out", "pred_hidden", "critic_hidden", "hidden_act"},
               "train.sizes");
  maybe(j, "rep_hidden", s.rep_hidden);
  maybe(j, "rep_out", s.rep_out);
  maybe(j, "pred_hidden", s.pred_hidden);
  maybe(j, "critic_hidden", s.critic_hidden);
  if (j.contains("hidden_act"))
    s.hidden_act = activation_from_string(j.at("hidden_act").get<std::string>());
}

void parse_train(const json& j, TrainConfig& t) {
  require_keys(j,
               {"rho", "lambda_ov", "lambda_cap", "alpha", "steps", "batch_obs", "batch_rct",
                "eta_primal", "eta_dual", "eta_critic", "critic_steps", "step_s0", "use_rep",
                "log_every", "sizes"},
               "train");
  maybe(j, "rho", t.rho);
  maybe(j, "lambda_ov", t.lambda_ov);
  maybe(j, "lambda_cap", t.lambda_cap);
  maybe(j, "alpha", t.alpha);
  maybe(j, "steps", t.steps);
  maybe(j, "batch_obs", t.batch_obs);
  maybe(j, "batch_rct", t.batch_rct);
  maybe(j, "eta_primal", t.eta_primal);
  maybe(j, "eta_dual", t.eta_dual);
  maybe(j, "eta_critic", t.eta_critic);
  maybe(j, "critic_steps", t.critic_steps);
  maybe(j, "step_s0", t.step_s0);
  maybe(j, "use_rep", t.use_rep);
  maybe(j, "log_every", t.log_every);
  if (j.contains("sizes")) parse_sizes(j.at("sizes"), t.sizes);
}

std::vector<MethodSpec> parse_methods(const json& j) {
  std::vector<MethodSpec> out;
  for (const auto& item : j) {
    MethodSpec spec;
    if (item.is_string()) {
      spec.method = train_method_from_string(item.get<std::string>());
    } else if (item.is_object()) {
      require_keys(item, {"name", "alpha"}, "methods[]");
      spec.method = train_method_from_string(item.at("name").get<std::string>());
      if (item.contains("alpha")) spec.alpha = item.at("alpha").get<double>();
    } else {
      throw ConfigError("config: method entries must be strings or objects");
    }
    out.push_back(spec);
  }
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  require_keys(j,
               {"preset", "out_dir", "master_seed", "seeds", "dials", "jobs", "eval_frac",
                "data", "train", "methods"},
               "top level");

  ExperimentConfig cfg;
  if (j.contains("preset")) cfg = preset_by_name(j.at("preset").get<std::string>());
  maybe(j, "out_dir", cfg.out_dir);
  maybe(j, "master_seed", cfg.master_seed);
  maybe(j, "seeds", cfg.n_seeds);
  maybe(j, "dials", cfg.dials);
  maybe(j, "jobs", cfg.jobs);
  maybe(j, "eval_frac", cfg.eval_frac);
  if (j.contains("data")) parse_data(j.at("data"), cfg.data);
  if (j.contains("train")) parse_train(j.at("train"), cfg.train);
  if (j.contains("methods")) cfg.methods = parse_methods(j.at("methods"));
  if (cfg.methods.empty()) cfg.methods = kDefaultMethods;
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_string(text);
}

std::string ExperimentConfig::to_json_string() const {
  json j;
  j["out_dir"] = out_dir;
  j["master_seed"] = master_seed;
  j["seeds"] = n_seeds;
  j["dials"] = dials;
  j["jobs"] = jobs;
  j["eval_frac"] = eval_frac;
  j["data"] = {{"n_rct", data.n_rct},
               {"n_obs", data.n_obs},
               {"n_cont", data.n_cont},
               {"n_cat", data.n_cat},
               {"n_levels", data.n_levels},
               {"sigma_rct", data.sigma_rct},
               {"sigma_obs", data.sigma_obs},
               {"overlap_dial", data.overlap_dial},
               {"exclusion_frac", data.exclusion_frac}};
  j["train"] = {{"rho", train.rho},
                {"lambda_ov", train.lambda_ov},
                {"lambda_cap", train.lambda_cap},
                {"alpha", train.alpha},
                {"steps", train.steps},
                {"batch_obs", train.batch_obs},
                {"batch_rct", train.batch_rct},
                {"eta_primal", train.eta_primal},
                {"eta_dual", train.eta_dual},
                {"eta_critic", train.eta_critic},
                {"critic_steps", train.critic_steps},
                {"step_s0", train.step_s0},
                {"use_rep", train.use_rep},
                {"log_every", train.log_every},
                {"sizes",
                 {{"rep_hidden", train.sizes.rep_hidden},
                  {"rep_out", train.sizes.rep_out},
                  {"pred_hidden", train.sizes.pred_hidden},
                  {"critic_hidden", train.sizes.critic_hidden},
                  {"hidden_act", to_string(train.sizes.hidden_act)}}}};
  json methods_json = json::array();
  for (const MethodSpec& m : methods) {
    if (m.alpha.has_value())
      methods_json.push_back({{"name", to_string(m.method)}, {"alpha", *m.alpha}});
    else
      methods_json.push_back(to_string(m.method));
  }
  j["methods"] = methods_json;
  return j.dump(2) + "\n";
}

ExperimentConfig grid_preset_large() {
  ExperimentConfig cfg;
  cfg.out_dir = "out_grid";
  cfg.n_seeds = 10;
  cfg.dials = {0.0, 0.5, 1.0};
  cfg.data.n_rct = 1000;
  cfg.data.n_obs = 4000;
  cfg.train.steps = 1000;
  cfg.train.batch_obs = 128;
  cfg.train.batch_rct = 128;
  cfg.train.critic_steps = 2;
  cfg.train.step_s0 = 300.0;
  cfg.methods = kDefaultMethods;
  return cfg;
}

ExperimentConfig grid_preset_small() {
  ExperimentConfig cfg = grid_preset_large();
  cfg.out_dir = "out_smoke";
  cfg.n_seeds = 2;
  cfg.dials = {0.0, 1.0};
  cfg.data.n_rct = 400;
  cfg.data.n_obs = 1600;
  cfg.train.steps = 200;
  cfg.methods = {{TrainMethod::kPd, {}},
                 {TrainMethod::kDualOnly, {}},
                 {TrainMethod::kWeighted, {}},
                 {TrainMethod::kTLearner, {}}};
  return cfg;
}

SyntheticConfig data_preset_severe() {
  SyntheticConfig d;
  d.n_rct = 1000;
  d.n_obs = 4000;
  d.overlap_dial = 0.0;
  d.exclusion_frac = 0.25;
  return d;
}

ExperimentConfig preset_by_name(const std::string& name) {
  if (name == "large") return grid_preset_large();
  if (name == "small") return grid_preset_small();
  if (name == "severe") {
    ExperimentConfig cfg = grid_preset_large();
    cfg.out_dir = "out_severe";
    cfg.dials = {0.0};
    cfg.data = data_preset_severe();
    return cfg;
  }
  throw ConfigError("unknown preset: " + name);
}

namespace {

std::string cell_dir_name(const std::string& label, double dial, int seed_index) {
  return label + "_d" + format_dial(dial) + "_s" + std::to_string(seed_index);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const std::vector<std::string>& only) {
  cfg.validate();
  std::vector<MethodSpec> methods = cfg.methods;
  if (!only.empty()) {
    std::vector<MethodSpec> filtered;
    for (const std::string& want : only) {
      bool found = false;
      for (const MethodSpec& m : cfg.methods)
        if (m.label() == want) {
          filtered.push_back(m);
          found = true;
        }
      if (!found) throw ConfigError("run: --only names unknown method: " + want);
    }
    methods = filtered;
  }

  fs::create_directories(cfg.out_dir);
  fs::create_directories(fs::path(cfg.out_dir) / "out");
  {
    std::ofstream out(fs::path(cfg.out_dir) / "config_resolved.json");
    if (!out) throw IoError("cannot write resolved config");
    out << cfg.to_json_string();
  }

  struct Task {
    int dial_index;
    int seed_index;
  };
  std::vector<Task> tasks;
  for (int di = 0; di < static_cast<int>(cfg.dials.size()); ++di)
    for (int si = 0; si < cfg.n_seeds; ++si) tasks.push_back({di, si});

  const long n_methods = static_cast<long>(methods.size());
  std::vector<CellResult> cells(tasks.size() * static_cast<std::size_t>(n_methods));
  std::atomic<std::size_t> next{0};
  std::atomic<int> failed{0};

  auto worker = [&]() {
    for (;;) {
      const std::size_t ti = next.fetch_add(1);
      if (ti >= tasks.size()) return;
      const Task task = tasks[ti];
      const double dial = cfg.dials[static_cast<std::size_t>(task.dial_index)];
      const std::uint64_t data_seed =
          mix_seed(mix_seed(cfg.master_seed, 0xDA7A),
                   static_cast<std::uint64_t>(task.dial_index) * 1000003ull +
                       static_cast<std::uint64_t>(task.seed_index));

      SyntheticConfig dc = cfg.data;
      dc.overlap_dial = dial;
      std::optional<SyntheticDataset> sd;
      std::optional<Split> split;
      std::string gen_error;
      try {
        sd = gen_synthetic(dc, data_seed);
        split = make_split(sd->data, cfg.eval_frac, mix_seed(data_seed, 0x5917));
      } catch (const std::exception& e) {
        gen_error = e.what();
      }

      for (long mi = 0; mi < n_methods; ++mi) {
        const MethodSpec& spec = methods[static_cast<std::size_t>(mi)];
        CellResult& cell = cells[ti * static_cast<std::size_t>(n_methods) +
                                 static_cast<std::size_t>(mi)];
        cell.method_label = spec.label();
        cell.dial = dial;
        cell.seed_index = task.seed_index;
        cell.data_seed = data_seed;
        if (!gen_error.empty()) {
          cell.ok = false;
          cell.error = "data generation failed: " + gen_error;
          failed.fetch_add(1);
          continue;
        }
        const fs::path cell_dir =
            fs::path(cfg.out_dir) / "out" / cell_dir_name(cell.method_label, dial,
                                                          task.seed_index);
        try {
          fs::create_directories(cell_dir);
          TrainConfig tc = cfg.train;
          tc.seed = mix_seed(data_seed, fnv1a(cell.method_label));
          if (spec.alpha.has_value()) tc.alpha = *spec.alpha;
          ModelBundle bundle = train_model(sd->data, *split, tc, spec.method);
          bundle.trace.write_csv((cell_dir / "trace.csv").string());
          cell.metrics = evaluate_model(bundle, sd->data, *split, mix_seed(data_seed, 0xE7A1));
          cell.ok = true;
        } catch (const std::exception& e) {
          cell.ok = false;
          cell.error = e.what();
          failed.fetch_add(1);
          log_error(std::string("cell ") + cell_dir_name(cell.method_label, dial,
                                                         task.seed_index) +
                    " failed: " + e.what());
        }
      }
    }
  };

  const int n_threads = std::min<int>(cfg.jobs, static_cast<int>(tasks.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }

  ExperimentResult result;
  result.cells = std::move(cells);
  result.n_failed = failed.load();
  result.out_dir = cfg.out_dir;
  write_metrics_csv((fs::path(cfg.out_dir) / "metrics.csv").string(), result.cells);
  write_aggregate_table((fs::path(cfg.out_dir) / "table.txt").string(), result.cells);
  return result;
}

void write_metrics_csv(const std::string& path, const std::vector<CellResult>& cells) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open metrics output: " + path);
  out << "method,dial,seed_index,data_seed,status,qini,mse_tau,mape,g_norm,mmd,"
         "marginal_tv,r_obs,error\n";
  for (const CellResult& c : cells) {
    out << c.method_label << ',' << format_double(c.dial) << ',' << c.seed_index << ','
        << c.data_seed << ',' << (c.ok ? "ok" : "failed") << ',';
    if (c.ok) {
      out << format_double(c.metrics.qini) << ',' << format_double(c.metrics.mse_tau) << ','
          << format_double(c.metrics.mape) << ',' << format_double(c.metrics.g_norm) << ','
          << format_double(c.metrics.mmd) << ',' << format_double(c.metrics.marginal_tv) << ','
          << format_double(c.metrics.r_obs) << ',';
    } else {
      out << ",,,,,,,";
    }
    std::string err = c.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << err << '\n';
  }
}

void write_aggregate_table(const std::string& path, const std::vector<CellResult>& cells) {
  std::vector<double> dials;
  std::vector<std::string> methods;
  for (const CellResult& c : cells) {
    if (std::find(dials.begin(), dials.end(), c.dial) == dials.end()) dials.push_back(c.dial);
    if (std::find(methods.begin(), methods.end(), c.method_label) == methods.end())
      methods.push_back(c.method_label);
  }
  std::sort(dials.begin(), dials.end());

  std::ofstream out(path);
  if (!out) throw IoError("cannot open table output: " + path);
  auto block = [&](const std::string& title, auto getter) {
    out << title << " (mean +- sd over seeds)\n";
    out << "method";
    for (double d : dials) out << "\tdial=" << format_dial(d);
    out << '\n';
    for (const std::string& m : methods) {
      out << m;
      for (double d : dials) {
        std::vector<double> vals;
        for (const CellResult& c : cells)
          if (c.ok && c.method_label == m && c.dial == d) {
            const double v = getter(c.metrics);
            if (std::isfinite(v)) vals.push_back(v);
          }
        if (vals.empty()) {
          out << "\t-";
        } else {
          Aggregate a = aggregate(vals);
          char buf[64];
          std::snprintf(buf, sizeof buf, "\t%.4f +- %.4f", a.mean, a.sd);
          out << buf;
        }
      }
      out << '\n';
    }
    out << '\n';
  };
  block("qini", [](const EvalMetrics& m) { return m.qini; });
  block("mse_tau", [](const EvalMetrics& m) { return m.mse_tau; });
  block("mape", [](const EvalMetrics& m) { return m.mape; });
  block("g_norm", [](const EvalMetrics& m) { return m.g_norm; });
  block("mmd", [](const EvalMetrics& m) { return m.mmd; });
}

void run_severe_audit(const std::string& out_dir, std::uint64_t master_seed, int n_datasets,
                      const GapConfig& gap_cfg) {
  if (n_datasets < 1) throw ConfigError("severe audit: need at least one dataset");
  fs::create_directories(out_dir);
  std::ofstream summary(fs::path(out_dir) / "severe_summary.csv");
  if (!summary) throw IoError("cannot open severe audit summary");
  summary << "index,data_seed,gap_raw_linear,gap_raw_net,gap_rep_net,c0_hat,delta_hat,"
             "p_region,eps_ov,eps_info,bound_ok\n";
  for (int i = 0; i < n_datasets; ++i) {
    const std::uint64_t seed = mix_seed(mix_seed(master_seed, 0x5E5E), static_cast<std::uint64_t>(i));
    SyntheticDataset sd = gen_synthetic(data_preset_severe(), seed);
    GapConfig gc = gap_cfg;
    gc.seed = mix_seed(seed, 0xAAD1);
    FeasibilityAudit audit = run_feasibility_audit(sd.data, gc);
    write_feasibility_audit_json(
        audit, (fs::path(out_dir) / ("audit_" + std::to_string(i) + ".json")).string());
    const double min_gap =
        std::min(audit.gap_raw_linear, std::min(audit.gap_raw_net, audit.gap_rep_net));
    const bool bound_ok = !std::isfinite(audit.c0_hat) || audit.c0_hat <= min_gap + 1e-9;
    summary << i << ',' << seed << ',' << format_double(audit.gap_raw_linear) << ','
            << format_double(audit.gap_raw_net) << ',' << format_double(audit.gap_rep_net)
            << ',' << format_double(audit.c0_hat) << ',' << format_double(audit.delta_hat)
            << ',' << format_double(audit.p_region) << ',' << format_double(audit.eps_ov)
            << ',' << format_double(audit.eps_info) << ',' << (bound_ok ? 1 : 0) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Theory checks
// ---------------------------------------------------------------------------

namespace {

struct LinFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r2 = 0.0;
};

LinFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const long n = static_cast<long>(x.size());
  if (n < 2 || y.size() != x.size()) throw DimensionError("linear_fit: bad inputs");
  double mx = 0.0, my = 0.0;
  for (long i = 0; i < n; ++i) {
    mx += x[static_cast<std::size_t>(i)];
    my += y[static_cast<std::size_t>(i)];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (long i = 0; i < n; ++i) {
    const double dx = x[static_cast<std::size_t>(i)] - mx;
    const double dy = y[static_cast<std::size_t>(i)] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  LinFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

// Shared fixtures built lazily; criterion suites reuse the same draws.
struct VerifyContext {
  VerifyOptions opts;
  std::optional<SyntheticDataset> big;  // large randomized sample
  std::vector<LqInstance> toys;
  std::vector<double> caps;
  std::vector<LqPdResult> pd_runs;

  const SyntheticDataset& big_sample() {
    if (!big) {
      SyntheticConfig cfg;
      cfg.n_rct = 100000;
      cfg.n_obs = 1;
      big = gen_synthetic(cfg, mix_seed(opts.seed, 0xB16));
    }
    return *big;
  }

  void ensure_lq_suite() {
    if (!toys.empty()) return;
    for (int i = 0; i < 20; ++i) {
      LqToyOptions opts_lq;
      opts_lq.infeasibility = 1.0;
      LqInstance inst = gen_lq_toy(8, 2, mix_seed(opts.seed, 0x19, static_cast<std::uint64_t>(i)),
                                   opts_lq);
      const double cap = std::max(50.0, 20.0 * inst.lambda_star.norm());
      LqPdConfig pd_cfg;
      pd_cfg.steps = 8000;
      pd_cfg.rho = 1.0;
      pd_cfg.lambda_cap = cap;
      // Dense logging so the decay transition leaves enough trace rows for
      // the log-linear tail fit.
      pd_cfg.log_every = 5;
      pd_runs.push_back(lq_pd_run(inst, pd_cfg));
      toys.push_back(std::move(inst));
      caps.push_back(cap);
    }
  }
};

CheckResult check_gradients(VerifyContext& ctx) {
  CheckResult res;
  res.name = "gradient-check";
  Rng rng(mix_seed(ctx.opts.seed, 0x6AD));
  double worst = 0.0;
  const int per_type = 100;
  for (int type = 0; type < 3; ++type) {
    for (int it = 0; it < per_type; ++it) {
      NetSizes sizes;
      sizes.rep_hidden = {3 + rng.uniform_int(5)};
      if (rng.bernoulli(0.5)) sizes.rep_hidden.push_back(3 + rng.uniform_int(5));
      sizes.rep_out = 2 + rng.uniform_int(3);
      sizes.pred_hidden = {3 + rng.uniform_int(5)};
      sizes.critic_hidden = {3 + rng.uniform_int(5)};
      // Smooth activations only: central differences straddling a relu kink
      // are not an oracle for the subgradient convention.
      sizes.hidden_act = Activation::kTanh;
      const int d_in = 2 + rng.uniform_int(4);
      const int arms = 2 + rng.uniform_int(2);
      Layout layout;
      if (type == 0) layout = rep_layout(d_in, sizes);
      else if (type == 1) layout = predictor_layout(d_in, arms, sizes);
      else layout = critic_layout(d_in, arms, sizes);

      Mlp net(layout, InitScheme::kScaledUniform, rng);
      const long batch = 1 + rng.uniform_int(4);
      MatrixXd x(batch, net.in_dim());
      for (long r = 0; r < batch; ++r)
        for (int c = 0; c < net.in_dim(); ++c) x(r, c) = rng.normal();
      MatrixXd w(batch, net.out_dim());
      for (long r = 0; r < batch; ++r)
        for (int c = 0; c < net.out_dim(); ++c) w(r, c) = rng.normal();

      net.forward(x);
      const VectorXd analytic = net.backward(w).param_grad;
      Mlp probe = net;
      auto f = [&](const VectorXd& p) {
        probe.set_param_values(p);
        return (probe.forward(x).array() * w.array()).sum();
      };
      const VectorXd fd = finite_diff_grad(f, net.params().values);
      const double rel = (analytic - fd).norm() / std::max(fd.norm(), 1e-10);
      worst = std::max(worst, rel);
    }
  }
  res.measured["max_rel_err"] = worst;
  res.measured["tolerance"] = 1e-4;
  res.pass = worst < 1e-4;
  res.detail = "analytic vs central finite-difference parameter gradients, 100 random "
               "configurations per net type";
  return res;
}

CheckResult check_baseline_invariance(VerifyContext& ctx) {
  CheckResult res;
  res.name = "baseline-invariance";
  const SyntheticDataset& sd = ctx.big_sample();
  const std::vector<int> rct = sd.data.rows_of(Source::kRct);
  Rng rng(mix_seed(ctx.opts.seed, 0xBA5E));
  double worst = 0.0;
  for (int f = 0; f < 10; ++f) {
    VectorXd w(sd.data.dim());
    for (long i = 0; i < w.size(); ++i)
      w(i) = rng.normal() / std::sqrt(static_cast<double>(sd.data.dim()));
    const double b = rng.normal();
    VectorXd u(static_cast<long>(rct.size()));
    for (std::size_t i = 0; i < rct.size(); ++i)
      u(static_cast<long>(i)) = std::tanh(sd.data.x.row(rct[i]).dot(w) + b);
    InvarianceReport rep = invariance_report(sd.data, rct, u);
    worst = std::max(worst, rep.z.cwiseAbs().maxCoeff());
  }
  res.measured["max_abs_z"] = worst;
  res.measured["bound"] = 4.0;
  res.pass = worst <= 4.0;
  res.detail = "randomization kills baseline-shift moments: 10 random u maps at n=100k";
  return res;
}

CheckResult check_moment_at_truth(VerifyContext& ctx) {
  CheckResult res;
  res.name = "moment-at-truth";
  const SyntheticDataset& sd = ctx.big_sample();
  const std::vector<int> rct = sd.data.rows_of(Source::kRct);
  const VectorXd mu0 = true_mu0(sd);
  const VectorXd tau = true_tau(sd);
  VectorXd m(static_cast<long>(rct.size()));
  for (std::size_t i = 0; i < rct.size(); ++i) {
    const int r = rct[i];
    m(static_cast<long>(i)) = mu0(r) + sd.data.t[static_cast<std::size_t>(r)] * tau(r);
  }
  const MatrixXd contrib = moment_contributions(sd.data, rct, m);
  const VectorXd g = contrib.colwise().mean();
  double sd_max = 0.0;
  for (long c = 0; c < contrib.cols(); ++c) {
    const double mean = g(c);
    const double var = (contrib.col(c).array() - mean).square().sum() /
                       static_cast<double>(contrib.rows() - 1);
    sd_max = std::max(sd_max, std::sqrt(var));
  }
  const double bound = 4.0 * sd_max / std::sqrt(static_cast<double>(contrib.rows()));
  res.measured["g_norm"] = g.norm();
  res.measured["bound"] = bound;
  res.pass = g.norm() <= bound;
  res.detail = "sample moment at the generator's conditional mean is noise-level";
  return res;
}

CheckResult check_moment_decomposition(VerifyContext& ctx) {
  CheckResult res;
  res.name = "moment-decomposition";
  const SyntheticDataset& sd = ctx.big_sample();
  const std::vector<int> rct = sd.data.rows_of(Source::kRct);
  const VectorXd mu0 = true_mu0(sd);
  const VectorXd tau = true_tau(sd);
  const VectorXd y0 = potential_outcome(sd, 0);
  const VectorXd y1 = potential_outcome(sd, 1);

  const long n = static_cast<long>(rct.size());
  VectorXd y(n), u(n);
  MatrixXd y_all(n, 2), h(n, 1);
  std::vector<int> t(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    const int r = rct[static_cast<std::size_t>(i)];
    y(i) = sd.data.y(r);
    u(i) = mu0(r);
    h(i, 0) = tau(r);
    y_all(i, 0) = y0(r);
    y_all(i, 1) = y1(r);
    t[static_cast<std::size_t>(i)] = sd.data.t[static_cast<std::size_t>(r)];
  }
  const double gap = decomposition_max_gap(y, t, y_all, u, h);
  res.measured["max_gap"] = gap;
  res.measured["tolerance"] = 1e-12;
  res.pass = gap <= 1e-12;
  res.detail = "per-row residual decomposition identity at the generator's components";
  return res;
}

CheckResult check_pd_feasibility(VerifyContext& ctx) {
  CheckResult res;
  res.name = "pd-feasibility";
  ctx.ensure_lq_suite();
  double worst_ratio = 0.0;
  for (std::size_t i = 0; i < ctx.toys.size(); ++i) {
    const LqPdResult& r = ctx.pd_runs[i];
    const double lhs = ctx.caps[i] * r.g_norm;
    const double rhs = 1.1 * r.eps_opt + 1e-12;
    worst_ratio = std::max(worst_ratio, lhs / std::max(rhs, 1e-300));
    if (lhs > rhs) {
      res.measured["failed_instance"] = static_cast<double>(i);
    }
  }
  res.measured["max_capped_residual_over_bound"] = worst_ratio;
  res.pass = worst_ratio <= 1.0;
  res.detail = "cap * ||g|| <= 1.1 * saddle gap on 20 random constrained quadratics";
  return res;
}

CheckResult check_pd_convergence(VerifyContext& ctx) {
  CheckResult res;
  res.name = "pd-convergence";
  ctx.ensure_lq_suite();
  double min_r2 = 1.0;
  double max_slope = -std::numeric_limits<double>::infinity();
  for (const LqPdResult& run : ctx.pd_runs) {
    double g_max = 0.0;
    for (const TraceRow& row : run.trace) g_max = std::max(g_max, row.g_norm);
    std::vector<double> xs, ys;
    for (const TraceRow& row : run.trace) {
      if (row.g_norm > 1e-12 && row.g_norm <= g_max / 10.0) {
        xs.push_back(static_cast<double>(row.step));
        ys.push_back(std::log(row.g_norm));
      }
    }
    if (xs.size() < 6) {
      res.measured["insufficient_tail_points"] = static_cast<double>(xs.size());
      res.pass = false;
      res.detail = "tail of ||g|| trace too short for a log-linear fit";
      return res;
    }
    LinFit fit = linear_fit(xs, ys);
    min_r2 = std::min(min_r2, fit.r2);
    max_slope = std::max(max_slope, fit.slope);
  }
  res.measured["min_r2"] = min_r2;
  res.measured["max_slope"] = max_slope;
  res.pass = min_r2 > 0.95 && max_slope < 0.0;
  res.detail = "log ||g|| decays linearly along the primal-dual tail on every instance";
  return res;
}

CheckResult check_penalty_conditioning(VerifyContext& ctx) {
  CheckResult res;
  res.name = "penalty-conditioning";
  ctx.ensure_lq_suite();
  const std::vector<double> rhos = {1.0, 10.0, 100.0, 1000.0};
  double min_r2 = 1.0, min_slope = std::numeric_limits<double>::infinity();
  double min_required_rho = std::numeric_limits<double>::infinity();
  double max_pd_g = 0.0;
  std::vector<double> rho_grid;
  for (double r = 1.0; r <= 1e7; r *= 1.2589254117941673) rho_grid.push_back(r);
  for (std::size_t i = 0; i < ctx.toys.size(); ++i) {
    const LqInstance& inst = ctx.toys[i];
    std::vector<double> kappas;
    for (double rho : rhos) kappas.push_back(penalty_condition_number(inst, rho));
    LinFit fit = linear_fit(rhos, kappas);
    min_r2 = std::min(min_r2, fit.r2);
    min_slope = std::min(min_slope, fit.slope);
    const double req = lq_penalty_required_rho(inst, 1e-3, rho_grid);
    min_required_rho = std::min(min_required_rho, req);
    max_pd_g = std::max(max_pd_g, ctx.pd_runs[i].g_norm);
  }
  res.measured["min_r2_affine"] = min_r2;
  res.measured["min_slope"] = min_slope;
  res.measured["min_required_rho_penalty"] = min_required_rho;
  res.measured["max_pd_g_at_rho1"] = max_pd_g;
  res.pass = min_r2 > 0.99 && min_slope > 0.0 && min_required_rho >= 10.0 &&
             max_pd_g <= 1e-3;
  res.detail = "penalty Hessian conditioning grows affinely in rho; dual ascent reaches the "
               "same residual at rho=1 that pure penalty needs rho>=10 for";
  return res;
}

CheckResult check_weighted_path(VerifyContext& ctx) {
  CheckResult res;
  res.name = "weighted-path";
  ctx.ensure_lq_suite();
  double worst_dist_violation = -std::numeric_limits<double>::infinity();
  double worst_g_violation = -std::numeric_limits<double>::infinity();
  for (const LqInstance& inst : ctx.toys) {
    const ExclusionConstants k = exclusion_constants(inst);
    const double alpha_max = std::max(k.alpha_bar, 0.5);
    // Path-law constants must dominate the grid actually tested.
    double m_r = 0.0;
    const int grid_n = 101;
    std::vector<VectorXd> path;
    for (int i = 0; i < grid_n; ++i) {
      const double alpha = alpha_max * static_cast<double>(i) / (grid_n - 1);
      VectorXd th = weighted_minimizer(inst, alpha);
      m_r = std::max(m_r, inst.grad_r(th).norm());
      path.push_back(std::move(th));
    }
    const VectorXd theta0 = path.front();
    const double g0 = inst.g(theta0).norm();
    for (int i = 0; i < grid_n; ++i) {
      const double alpha = alpha_max * static_cast<double>(i) / (grid_n - 1);
      const double dist = (path[static_cast<std::size_t>(i)] - theta0).norm();
      const double g = inst.g(path[static_cast<std::size_t>(i)]).norm();
      worst_dist_violation =
          std::max(worst_dist_violation, dist - (m_r / k.mu) * alpha);
      worst_g_violation =
          std::max(worst_g_violation, (g0 - (k.l_g * m_r / k.mu) * alpha) - g);
    }
  }
  res.measured["max_dist_bound_violation"] = worst_dist_violation;
  res.measured["max_g_bound_violation"] = worst_g_violation;
  res.measured["tolerance"] = 1e-8;
  res.pass = worst_dist_violation <= 1e-8 && worst_g_violation <= 1e-8;
  res.detail = "closed-form weighted path obeys the parameter-distance and residual "
               "lower-bound laws at every grid point";
  return res;
}

CheckResult check_exclusion_region(VerifyContext& ctx) {
  CheckResult res;
  res.name = "exclusion-region";
  int entered = 0;
  double min_c0 = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 10; ++i) {
    // Small engineered infeasibility keeps the certified radius positive;
    // shrink until it is.
    LqInstance inst;
    ExclusionConstants k;
    double kappa = 0.5;
    bool ok = false;
    for (int attempt = 0; attempt < 12; ++attempt) {
      LqToyOptions o;
      o.infeasibility = kappa;
      inst = gen_lq_toy(6, 2, mix_seed(ctx.opts.seed, 0xEC, static_cast<std::uint64_t>(i)), o);
      k = exclusion_constants(inst);
      if (inst.delta_o > 0.0 && k.c0 > 0.0) {
        ok = true;
        break;
      }
      kappa *= 0.5;
    }
    if (!ok) {
      res.pass = false;
      res.detail = "failed to engineer a positive exclusion radius";
      return res;
    }
    min_c0 = std::min(min_c0, k.c0);
    const double r_star = inst.risk_o(inst.theta_unconstrained);
    const int grid_n = 201;
    for (int gi = 0; gi < grid_n; ++gi) {
      const double alpha = k.alpha_bar * static_cast<double>(gi) / (grid_n - 1);
      const VectorXd th = weighted_minimizer(inst, alpha);
      const bool in_u = inst.risk_o(th) < r_star + k.eps0 && inst.g(th).norm() < k.c0;
      if (in_u) ++entered;
    }
  }
  res.measured["grid_points_inside_region"] = entered;
  res.measured["min_c0"] = min_c0;
  res.pass = entered == 0 && min_c0 > 0.0;
  res.detail = "weighted path up to alpha_bar never reaches near-optimal obs risk and small "
               "moment residual simultaneously (engineered positive infeasibility)";
  return res;
}

CheckResult check_irreducible_overlap(VerifyContext& ctx) {
  CheckResult res;
  res.name = "irreducible-overlap";
  SyntheticConfig cfg;
  // Power-of-two counts keep the empirical arm frequencies exactly
  // representable, so the identity below is bitwise.
  cfg.n_rct = 4096;
  cfg.n_obs = 4096;
  cfg.n_cont = 12;
  cfg.n_cat = 2;
  SyntheticDataset sd = gen_synthetic(cfg, mix_seed(ctx.opts.seed, 0x1BD));
  Dataset ds = sd.data;
  // All-control observational policy: arm 1 becomes marginally unreachable.
  for (long i = 0; i < ds.n(); ++i)
    if (ds.source[static_cast<std::size_t>(i)] == Source::kObs)
      ds.t[static_cast<std::size_t>(i)] = 0;

  const std::vector<int> rct = ds.rows_of(Source::kRct);
  const std::vector<int> obs = ds.rows_of(Source::kObs);
  TvResult tv = marginal_treatment_tv(ds, rct, obs);
  double p_missing = 0.0;
  for (int r : rct)
    if (ds.t[static_cast<std::size_t>(r)] == 1) p_missing += 1.0;
  p_missing /= static_cast<double>(rct.size());

  const double base_gap = std::abs(tv.tv - p_missing);
  bool missing_flagged =
      std::find(tv.missing_in_b.begin(), tv.missing_in_b.end(), 1) != tv.missing_in_b.end();

  // Marginal discrepancy is invariant to any covariate reparameterization.
  double max_shift = 0.0;
  Rng rng(mix_seed(ctx.opts.seed, 0x1BE));
  for (int rmap = 0; rmap < 5; ++rmap) {
    MatrixXd w(ds.dim(), 6);
    for (long a = 0; a < w.rows(); ++a)
      for (long b = 0; b < w.cols(); ++b) w(a, b) = rng.normal();
    Dataset mapped = ds;
    mapped.x = (ds.x * w).array().tanh().matrix();
    TvResult tv2 = marginal_treatment_tv(mapped, rct, obs);
    max_shift = std::max(max_shift, std::abs(tv2.tv - tv.tv));
  }

  res.measured["tv_minus_p_missing"] = base_gap;
  res.measured["max_shift_under_rep_maps"] = max_shift;
  res.pass = base_gap == 0.0 && max_shift == 0.0 && missing_flagged;
  res.detail = "all-control observational policy: marginal treatment TV equals the "
               "randomized mass of the missing arm and no representation changes it";
  return res;
}

CheckResult check_minimax_toy(VerifyContext& ctx) {
  CheckResult res;
  res.name = "minimax-toy";
  const double eps = ctx.opts.epsilon;
  std::vector<double> grid;
  for (int i = 0; i <= 1000; ++i) grid.push_back(static_cast<double>(i) * 1e-3);
  MinimaxAnalysis an = solve_minimax_toy(eps, grid);

  // The population curve from the law must match eps - alpha/2 identically.
  double curve_dev = 0.0;
  for (const MinimaxCurvePoint& pt : an.curve)
    curve_dev = std::max(curve_dev, std::abs(pt.g_treated - (eps - pt.alpha / 2.0)));

  // Empirical sanity at alpha = 0 on a sampled instance.
  Dataset toy = gen_minimax_toy(eps, 20000, mix_seed(ctx.opts.seed, 0x3A1));
  const double emp = minimax_treated_moment(toy, toy.rows_of(Source::kRct), 0.0);

  res.measured["grid_infimum"] = an.abs_g_min;
  res.measured["alpha_star"] = an.alpha_star;
  res.measured["tv"] = an.tv;
  res.measured["zero_crossing"] = an.zero_crossing;
  res.measured["curve_formula_dev"] = curve_dev;
  res.measured["empirical_moment_alpha0_err"] = std::abs(emp - eps);
  res.pass = an.abs_g_min <= 5e-4 && std::abs(an.alpha_star - 2.0 * eps) <= 1e-3 &&
             curve_dev <= 1e-12 && std::abs(emp - eps) <= 0.03;
  res.flagged = true;
  res.detail =
      "measured: the treated-arm moment of the two-point construction crosses zero at "
      "alpha = 2*eps, so its infimum over the merged-representation class is 0, not the "
      "claimed positive c*eps lower bound; the curve itself matches the stated form "
      "eps - alpha/2 exactly. Reported as a documented discrepancy, not a failure.";
  return res;
}

}  // namespace

std::vector<std::string> verify_check_names() {
  return {"gradient-check",    "baseline-invariance", "moment-at-truth",
          "moment-decomposition", "pd-feasibility",   "pd-convergence",
          "penalty-conditioning", "weighted-path",    "exclusion-region",
          "irreducible-overlap",  "minimax-toy"};
}

std::vector<CheckResult> verify_theory(const VerifyOptions& opts) {
  VerifyContext ctx;
  ctx.opts = opts;
  struct Entry {
    const char* name;
    CheckResult (*fn)(VerifyContext&);
  };
  const std::vector<Entry> entries = {
      {"gradient-check", check_gradients},
      {"baseline-invariance", check_baseline_invariance},
      {"moment-at-truth", check_moment_at_truth},
      {"moment-decomposition", check_moment_decomposition},
      {"pd-feasibility", check_pd_feasibility},
      {"pd-convergence", check_pd_convergence},
      {"penalty-conditioning", check_penalty_conditioning},
      {"weighted-path", check_weighted_path},
      {"exclusion-region", check_exclusion_region},
      {"irreducible-overlap", check_irreducible_overlap},
      {"minimax-toy", check_minimax_toy},
  };
  if (!opts.only.empty()) {
    for (const std::string& name : opts.only) {
      bool known = false;
      for (const Entry& e : entries)
        if (name == e.name) known = true;
      if (!known) throw ConfigError("verify: unknown check: " + name);
    }
  }
  std::vector<CheckResult> out;
  for (const Entry& e : entries) {
    if (!opts.only.empty() &&
        std::find(opts.only.begin(), opts.only.end(), e.name) == opts.only.end())
      continue;
    try {
      out.push_back(e.fn(ctx));
    } catch (const Error& err) {
      CheckResult res;
      res.name = e.name;
      res.pass = false;
      res.detail = std::string("check aborted: ") + err.what();
      out.push_back(std::move(res));
    }
  }
  return out;
}

void write_verdicts_json(const std::string& path, const std::vector<CheckResult>& checks) {
  json arr = json::array();
  for (const CheckResult& c : checks) {
    json j;
    j["name"] = c.name;
    j["pass"] = c.pass;
    j["flagged"] = c.flagged;
    j["detail"] = c.detail;
    j["measured"] = json::object();
    for (const auto& [k, v] : c.measured) {
      if (std::isfinite(v)) j["measured"][k] = v;
      else j["measured"][k] = nullptr;
    }
    arr.push_back(std::move(j));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open verdicts output: " + path);
  out << arr.dump(2) << "\n";
}

int checks_exit_code(const std::vector<CheckResult>& checks) {
  for (const CheckResult& c : checks)
    if (!c.pass) return 1;
  return 0;
}

}  // namespace fusion
