#include "metamdl/harness.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "metamdl/error.hpp"
#include "metamdl/rng.hpp"

namespace metamdl {

using json = nlohmann::ordered_json;

SetupDef parse_setup(const std::string& name) {
  SetupDef def;
  def.name = name;
  static const std::regex fixed_re(R"(^F(\d{1,3})-T(\d{1,3})$)");
  static const std::regex ours_re(R"(^Ours-([GC])-(\d+)$)");
  std::smatch m;
  if (std::regex_match(name, m, fixed_re)) {
    const int p = std::stoi(m[1].str());
    const int q = std::stoi(m[2].str());
    if (p + q != 100) {
      throw ConfigError("fixed setup weights must sum to 100: " + name);
    }
    def.rule = UpdateRule::fixed;
    def.fixed_lambda = static_cast<double>(p) / 100.0;
    return def;
  }
  if (name == "Simple-G") {
    def.rule = UpdateRule::simple_g;
    return def;
  }
  if (name == "Simple-C") {
    def.rule = UpdateRule::simple_c;
    return def;
  }
  if (std::regex_match(name, m, ours_re)) {
    def.rule = m[1].str() == "G" ? UpdateRule::greedy : UpdateRule::conservative;
    def.window = std::stoi(m[2].str());
    if (def.window < 1) throw ConfigError("window must be >= 1: " + name);
    return def;
  }
  throw ConfigError("unknown setup name: " + name);
}

namespace {

const std::vector<std::string> kDefaultSetups = {
    "F50-T50",  "F10-T90",  "F90-T10",  "Simple-G",  "Simple-C",
    "Ours-G-25", "Ours-G-100", "Ours-C-25", "Ours-C-100"};

void reject_unknown_keys(const json& obj, const char* where,
                         std::initializer_list<const char*> known) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (std::find_if(known.begin(), known.end(), [&](const char* k) {
          return key == k;
        }) == known.end()) {
      throw ConfigError(std::string("unknown config key ") + where + "." + key);
    }
  }
}

}  // namespace

ModelSpec ExperimentConfig::effective_model() const {
  if (model_spec_given) return model;
  ModelSpec spec;
  spec.input_dim = grid * grid;
  spec.hidden = {};
  spec.output_dim = grid * grid;
  spec.activation = Activation::tanh;
  spec.sigmoid_output = true;
  return spec;
}

void ExperimentConfig::validate() const {
  if (grid < 2) throw ConfigError("grid must be >= 2");
  if (train_samples < 2) throw ConfigError("train_samples must be >= 2");
  if (eval_samples < 1) throw ConfigError("eval_samples must be >= 1");
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  if (setups.empty()) throw ConfigError("setup list is empty");
  const ModelSpec spec = effective_model();
  validate_spec(spec);
  if (spec.input_dim != grid * grid || spec.output_dim != grid * grid) {
    throw ConfigError("model must map grid^2 inputs to grid^2 outputs");
  }
  if (!(downsample_a > 0.0 && downsample_a <= 1.0)) {
    throw ConfigError("downsample_a must lie in (0, 1]");
  }
  // Per-setup training configs are validated again at run time; fail fast on
  // the shared fields here.
  TrainConfig tc;
  tc.eta = eta;
  tc.inner_eta = inner_eta;
  tc.split_ratio = split_ratio;
  tc.batch_size = batch_size;
  tc.steps = steps;
  tc.prior_alpha = prior_alpha;
  tc.prior_beta = prior_beta;
  tc.rule = UpdateRule::conservative;
  tc.validate(2);
}

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  for (const auto& name : kDefaultSetups) cfg.setups.push_back(parse_setup(name));
  return cfg;
}

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config root must be an object");
  reject_unknown_keys(root, "", {"model", "data", "train", "matrix"});

  ExperimentConfig cfg = default_config();

  if (root.contains("model")) {
    const json& m = root["model"];
    reject_unknown_keys(m, "model", {"hidden", "activation", "sigmoid_output"});
    cfg.model_spec_given = true;
    cfg.model.hidden.clear();
    if (m.contains("hidden")) {
      for (const auto& h : m["hidden"]) cfg.model.hidden.push_back(h.get<int>());
    }
    if (m.contains("activation")) {
      cfg.model.activation = activation_from_name(m["activation"].get<std::string>());
    }
    if (m.contains("sigmoid_output")) {
      cfg.model.sigmoid_output = m["sigmoid_output"].get<bool>();
    }
  }

  if (root.contains("data")) {
    const json& d = root["data"];
    reject_unknown_keys(d, "data",
                        {"grid", "train_samples", "eval_samples", "domain_a",
                         "domain_b", "downsample_a"});
    if (d.contains("grid")) cfg.grid = d["grid"].get<int>();
    if (d.contains("train_samples")) cfg.train_samples = d["train_samples"].get<int>();
    if (d.contains("eval_samples")) cfg.eval_samples = d["eval_samples"].get<int>();
    if (d.contains("downsample_a")) cfg.downsample_a = d["downsample_a"].get<double>();
    auto read_domain = [](const json& obj, const char* where, double& contrast,
                          double& noise) {
      reject_unknown_keys(obj, where, {"contrast", "noise_sigma"});
      if (obj.contains("contrast")) contrast = obj["contrast"].get<double>();
      if (obj.contains("noise_sigma")) noise = obj["noise_sigma"].get<double>();
    };
    if (d.contains("domain_a")) read_domain(d["domain_a"], "data.domain_a", cfg.contrast_a, cfg.noise_a);
    if (d.contains("domain_b")) read_domain(d["domain_b"], "data.domain_b", cfg.contrast_b, cfg.noise_b);
  }

  if (root.contains("train")) {
    const json& t = root["train"];
    reject_unknown_keys(t, "train",
                        {"eta", "inner_eta", "split_ratio", "batch_size",
                         "steps", "loss_a", "loss_b", "prior_alpha",
                         "prior_beta", "simple_init"});
    if (t.contains("eta")) cfg.eta = t["eta"].get<double>();
    if (t.contains("inner_eta")) cfg.inner_eta = t["inner_eta"].get<double>();
    if (t.contains("split_ratio")) cfg.split_ratio = t["split_ratio"].get<double>();
    if (t.contains("batch_size")) cfg.batch_size = t["batch_size"].get<int>();
    if (t.contains("steps")) cfg.steps = t["steps"].get<int>();
    if (t.contains("loss_a")) cfg.loss_a = loss_from_name(t["loss_a"].get<std::string>());
    if (t.contains("loss_b")) cfg.loss_b = loss_from_name(t["loss_b"].get<std::string>());
    if (t.contains("prior_alpha")) cfg.prior_alpha = t["prior_alpha"].get<double>();
    if (t.contains("prior_beta")) cfg.prior_beta = t["prior_beta"].get<double>();
    if (t.contains("simple_init")) cfg.simple_init = t["simple_init"].get<double>();
  }

  if (root.contains("matrix")) {
    const json& x = root["matrix"];
    reject_unknown_keys(x, "matrix", {"setups", "repeats", "seed_base"});
    if (x.contains("setups")) {
      cfg.setups.clear();
      for (const auto& s : x["setups"]) {
        cfg.setups.push_back(parse_setup(s.get<std::string>()));
      }
    }
    if (x.contains("repeats")) cfg.repeats = x["repeats"].get<int>();
    if (x.contains("seed_base")) cfg.seed_base = x["seed_base"].get<std::uint64_t>();
  }

  // The fixed grid^2 model is re-derived after "data" may have changed grid.
  if (cfg.model_spec_given) {
    cfg.model.input_dim = cfg.grid * cfg.grid;
    cfg.model.output_dim = cfg.grid * cfg.grid;
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json root;
  const ModelSpec spec = cfg.effective_model();
  root["model"] = {{"hidden", spec.hidden},
                   {"activation", activation_name(spec.activation)},
                   {"sigmoid_output", spec.sigmoid_output}};
  root["data"] = {{"grid", cfg.grid},
                  {"train_samples", cfg.train_samples},
                  {"eval_samples", cfg.eval_samples},
                  {"domain_a", {{"contrast", cfg.contrast_a}, {"noise_sigma", cfg.noise_a}}},
                  {"domain_b", {{"contrast", cfg.contrast_b}, {"noise_sigma", cfg.noise_b}}},
                  {"downsample_a", cfg.downsample_a}};
  root["train"] = {{"eta", cfg.eta},
                   {"inner_eta", cfg.inner_eta},
                   {"split_ratio", cfg.split_ratio},
                   {"batch_size", cfg.batch_size},
                   {"steps", cfg.steps},
                   {"loss_a", loss_name(cfg.loss_a)},
                   {"loss_b", loss_name(cfg.loss_b)},
                   {"prior_alpha", cfg.prior_alpha},
                   {"prior_beta", cfg.prior_beta},
                   {"simple_init", cfg.simple_init}};
  std::vector<std::string> names;
  for (const auto& s : cfg.setups) names.push_back(s.name);
  root["matrix"] = {{"setups", names},
                    {"repeats", cfg.repeats},
                    {"seed_base", cfg.seed_base}};
  return root.dump(2);
}

namespace {

// Per-run seed streams.
constexpr std::uint64_t kTrainMaskStream = 1;
constexpr std::uint64_t kTrainRenderA = 2;
constexpr std::uint64_t kTrainRenderB = 3;
constexpr std::uint64_t kEvalMaskStream = 4;
constexpr std::uint64_t kEvalRenderA = 5;
constexpr std::uint64_t kEvalRenderB = 6;
constexpr std::uint64_t kDownsampleStream = 7;
constexpr std::uint64_t kTrainerStream = 8;

Dataset make_domain(const ExperimentConfig& cfg, int domain, int count,
                    std::uint64_t mask_seed, std::uint64_t render_seed) {
  DomainSpec spec;
  spec.grid = cfg.grid;
  spec.contrast = domain == 0 ? cfg.contrast_a : cfg.contrast_b;
  spec.noise_sigma = domain == 0 ? cfg.noise_a : cfg.noise_b;
  spec.count = count;
  spec.mask_seed = mask_seed;
  spec.render_seed = render_seed;
  spec.domain_id = domain;
  return gen_domain(spec);
}

struct EvalMetrics {
  double dsc = std::numeric_limits<double>::quiet_NaN();
  double auc = std::numeric_limits<double>::quiet_NaN();
};

EvalMetrics evaluate(const ModelSpec& spec, const ParamVector& params,
                     const Dataset& eval_set) {
  const Matrix probs = forward(spec, params, eval_set.inputs);
  const PredTargetPair pt = make_pair(probs, eval_set.labels);
  Vector hard(pt.pred.size());
  for (Eigen::Index i = 0; i < pt.pred.size(); ++i) {
    hard[i] = pt.pred[i] > 0.5 ? 1.0 : 0.0;
  }
  EvalMetrics m;
  m.dsc = dsc_metric(PredTargetPair{hard, pt.target});
  try {
    m.auc = auc_metric(pt);
  } catch (const MetricError&) {
    // single-class eval pool: leave nan
  }
  return m;
}

}  // namespace

RunRecord run_single(const ExperimentConfig& cfg, const SetupDef& setup,
                     std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelSpec spec = cfg.effective_model();

  // Paired training domains: identical masks, different appearance.
  const std::uint64_t mask = mix_seed(seed, kTrainMaskStream);
  Dataset train_a = make_domain(cfg, 0, cfg.train_samples, mask,
                                mix_seed(seed, kTrainRenderA));
  Dataset train_b = make_domain(cfg, 1, cfg.train_samples, mask,
                                mix_seed(seed, kTrainRenderB));
  if (cfg.downsample_a < 1.0) {
    train_a = downsample(train_a, cfg.downsample_a,
                         mix_seed(seed, kDownsampleStream));
  }

  const std::uint64_t eval_mask = mix_seed(seed, kEvalMaskStream);
  const Dataset eval_a = make_domain(cfg, 0, cfg.eval_samples, eval_mask,
                                     mix_seed(seed, kEvalRenderA));
  const Dataset eval_b = make_domain(cfg, 1, cfg.eval_samples, eval_mask,
                                     mix_seed(seed, kEvalRenderB));

  TrainConfig tc;
  tc.rule = setup.rule;
  tc.fixed_lambda = setup.fixed_lambda;
  tc.simple_init = cfg.simple_init;
  tc.prior_alpha = cfg.prior_alpha;
  tc.prior_beta = cfg.prior_beta;
  tc.window = setup.window;
  tc.eta = cfg.eta;
  tc.inner_eta = cfg.inner_eta;
  tc.split_ratio = cfg.split_ratio;
  tc.batch_size = cfg.batch_size;
  tc.steps = cfg.steps;
  tc.seed = mix_seed(seed, kTrainerStream);

  const std::vector<LossFn> losses = {cfg.loss_a, cfg.loss_b};
  const std::vector<Dataset> datasets = {train_a, train_b};
  const TrainResult trained = train(tc, spec, losses, datasets);

  RunRecord rec;
  rec.setup = setup.name;
  rec.seed = seed;
  rec.steps_completed = static_cast<int>(trained.log.steps.size());
  rec.diverged = trained.log.diverged;
  rec.log = trained.log;
  const EvalMetrics ma = evaluate(spec, trained.params, eval_a);
  const EvalMetrics mb = evaluate(spec, trained.params, eval_b);
  rec.dsc = {ma.dsc, mb.dsc};
  rec.auc = {ma.auc, mb.auc};
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return rec;
}

namespace {

void mean_sd(const std::vector<double>& xs, double& mean, double& sd) {
  const double n = static_cast<double>(xs.size());
  mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  if (xs.size() < 2) {
    sd = 0.0;
    return;
  }
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  sd = std::sqrt(ss / (n - 1.0));
}

}  // namespace

void compute_gain(ResultRow& row, const ResultRow& baseline) {
  if (row.dsc_mean.size() != baseline.dsc_mean.size()) {
    throw ConfigError("gain: domain count mismatch with baseline");
  }
  row.gain_mu = 0.0;
  row.gain_sigma = 0.0;
  for (std::size_t d = 0; d < row.dsc_mean.size(); ++d) {
    row.gain_mu += row.dsc_mean[d] - baseline.dsc_mean[d];
    row.gain_sigma += baseline.dsc_sd[d] - row.dsc_sd[d];
  }
}

MatrixResult run_matrix(const ExperimentConfig& cfg) {
  cfg.validate();
  MatrixResult result;
  for (const auto& setup : cfg.setups) {
    for (int i = 0; i < cfg.repeats; ++i) {
      result.records.push_back(
          run_single(cfg, setup, cfg.seed_base + static_cast<std::uint64_t>(i)));
    }
  }

  const int domains = 2;
  result.table.num_domains = domains;
  for (const auto& setup : cfg.setups) {
    ResultRow row;
    row.setup = setup.name;
    std::vector<std::vector<double>> dsc(domains), auc(domains);
    for (const auto& rec : result.records) {
      if (rec.setup != setup.name) continue;
      if (rec.diverged) {
        ++row.n_diverged;
        continue;
      }
      ++row.n_runs;
      for (int d = 0; d < domains; ++d) {
        dsc[static_cast<std::size_t>(d)].push_back(rec.dsc[static_cast<std::size_t>(d)]);
        auc[static_cast<std::size_t>(d)].push_back(rec.auc[static_cast<std::size_t>(d)]);
      }
    }
    row.dsc_mean.assign(domains, std::numeric_limits<double>::quiet_NaN());
    row.dsc_sd = row.dsc_mean;
    row.auc_mean = row.dsc_mean;
    row.auc_sd = row.dsc_mean;
    if (row.n_runs > 0) {
      for (int d = 0; d < domains; ++d) {
        mean_sd(dsc[static_cast<std::size_t>(d)],
                row.dsc_mean[static_cast<std::size_t>(d)],
                row.dsc_sd[static_cast<std::size_t>(d)]);
        mean_sd(auc[static_cast<std::size_t>(d)],
                row.auc_mean[static_cast<std::size_t>(d)],
                row.auc_sd[static_cast<std::size_t>(d)]);
      }
    }
    result.table.rows.push_back(std::move(row));
  }

  const auto base = std::find_if(
      result.table.rows.begin(), result.table.rows.end(),
      [](const ResultRow& r) { return r.setup == "F50-T50" && r.n_runs > 0; });
  if (base != result.table.rows.end()) {
    const ResultRow baseline = *base;  // copy: gain of the baseline row is 0
    for (auto& row : result.table.rows) {
      if (row.n_runs > 0) compute_gain(row, baseline);
    }
  } else {
    for (auto& row : result.table.rows) {
      row.gain_mu = std::numeric_limits<double>::quiet_NaN();
      row.gain_sigma = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return result;
}

namespace {

std::string fmt(const char* spec, double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string safe_name(const std::string& name) {
  std::string out;
  for (char c : name) {
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-') ? c : '_';
  }
  return out;
}

}  // namespace

void emit_results(const MatrixResult& result, const ExperimentConfig& cfg,
                  const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output dir: " + out_dir);

  {
    std::ofstream out(out_dir + "/results.csv");
    if (!out) throw IoError("cannot write results.csv in " + out_dir);
    out << "setup,domain,metric,mean,sd,gain_mu,gain_sigma,n_runs\n";
    for (const auto& row : result.table.rows) {
      for (int d = 0; d < result.table.num_domains; ++d) {
        const auto di = static_cast<std::size_t>(d);
        out << row.setup << ',' << d << ",dsc," << fmt("%.6f", row.dsc_mean[di])
            << ',' << fmt("%.6f", row.dsc_sd[di]) << ','
            << fmt("%.6f", row.gain_mu) << ',' << fmt("%.6f", row.gain_sigma)
            << ',' << row.n_runs << "\n";
        out << row.setup << ',' << d << ",auc," << fmt("%.6f", row.auc_mean[di])
            << ',' << fmt("%.6f", row.auc_sd[di]) << ','
            << fmt("%.6f", row.gain_mu) << ',' << fmt("%.6f", row.gain_sigma)
            << ',' << row.n_runs << "\n";
      }
    }
    if (!out) throw IoError("short write: results.csv");
  }

  {
    std::ofstream out(out_dir + "/runs.csv");
    if (!out) throw IoError("cannot write runs.csv in " + out_dir);
    out << "setup,seed,domain,dsc,auc,steps_completed,diverged,wall_seconds\n";
    for (const auto& rec : result.records) {
      for (std::size_t d = 0; d < rec.dsc.size(); ++d) {
        out << rec.setup << ',' << rec.seed << ',' << d << ','
            << fmt("%.17g", rec.dsc[d]) << ',' << fmt("%.17g", rec.auc[d])
            << ',' << rec.steps_completed << ',' << (rec.diverged ? 1 : 0)
            << ',' << fmt("%.3f", rec.wall_seconds) << "\n";
      }
    }
    if (!out) throw IoError("short write: runs.csv");
  }

  for (const auto& rec : result.records) {
    const std::string path = out_dir + "/lambda_traj_" + safe_name(rec.setup) +
                             "_" + std::to_string(rec.seed) + ".csv";
    write_trajectory_csv(path, rec.log.trajectory());
  }

  {
    json manifest;
    manifest["artifact"] = "metamdl";
    manifest["format_version"] = 1;
    manifest["config"] = json::parse(config_to_json(cfg));
    std::vector<std::string> setups;
    for (const auto& s : cfg.setups) setups.push_back(s.name);
    manifest["setups"] = setups;
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < cfg.repeats; ++i) {
      seeds.push_back(cfg.seed_base + static_cast<std::uint64_t>(i));
    }
    manifest["seeds"] = seeds;
    int diverged = 0;
    for (const auto& rec : result.records) diverged += rec.diverged ? 1 : 0;
    manifest["runs"] = result.records.size();
    manifest["diverged_runs"] = diverged;
    std::ofstream out(out_dir + "/manifest.json");
    if (!out) throw IoError("cannot write manifest.json in " + out_dir);
    out << manifest.dump(2) << "\n";
    if (!out) throw IoError("short write: manifest.json");
  }
}

std::string format_table(const ResultTable& table) {
  std::ostringstream out;
  out << "setup         runs  ";
  for (int d = 0; d < table.num_domains; ++d) {
    out << "dsc" << d << "          ";
  }
  out << "gain_mu   gain_sigma\n";
  for (const auto& row : table.rows) {
    char line[256];
    std::snprintf(line, sizeof(line), "%-12s  %4d  ", row.setup.c_str(),
                  row.n_runs);
    out << line;
    for (int d = 0; d < table.num_domains; ++d) {
      const auto di = static_cast<std::size_t>(d);
      std::snprintf(line, sizeof(line), "%.3f±%.3f  ", row.dsc_mean[di],
                    row.dsc_sd[di]);
      out << line;
    }
    std::snprintf(line, sizeof(line), "%+.4f   %+.4f", row.gain_mu,
                  row.gain_sigma);
    out << line << "\n";
  }
  return out.str();
}

}  // namespace metamdl
