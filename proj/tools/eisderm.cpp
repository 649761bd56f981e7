// eisderm command line: data generation, training, prediction, evaluation,
// statistical comparison, and full-matrix reproduction.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "eisderm/checkpoint.hpp"
#include "eisderm/harness.hpp"
#include "eisderm/synth.hpp"

namespace fs = std::filesystem;
using namespace eisderm;

namespace {

// Flat key=value configuration. Files use INI-style [section] headers that
// prefix keys with "section."; command-line overrides are bare key=value.
class Config {
 public:
  void load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ContractError("cannot open config file " + path);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw ContractError(path + ":" + std::to_string(lineno) +
                              ": malformed section header");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ContractError(path + ":" + std::to_string(lineno) +
                            ": expected key=value");
      std::string key = trim(line.substr(0, eq));
      if (!section.empty()) key = section + "." + key;
      values_[key] = trim(line.substr(eq + 1));
    }
  }

  void set_override(const std::string& kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ContractError("override '" + kv + "' is not key=value");
    values_[trim(kv.substr(0, eq))] = trim(kv.substr(eq + 1));
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string str(const std::string& key, const std::string& dflt) const {
    auto it = values_.find(key);
    return it == values_.end() ? dflt : it->second;
  }
  std::string require(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end())
      throw ContractError("missing required config key '" + key + "'");
    return it->second;
  }
  long integer(const std::string& key, long dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    try {
      size_t pos;
      long v = std::stol(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ContractError("config key '" + key + "': '" + it->second +
                          "' is not an integer");
    }
  }
  double real(const std::string& key, double dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    try {
      size_t pos;
      double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ContractError("config key '" + key + "': '" + it->second +
                          "' is not a number");
    }
  }
  bool flag(const std::string& key, bool dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ContractError("config key '" + key + "': '" + v + "' is not a bool");
  }

 private:
  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }
  std::map<std::string, std::string> values_;
};

ExperimentConfig build_experiment(const Config& c) {
  ExperimentConfig cfg;
  if (c.flag("preset.paper", false)) cfg.apply_paper_preset();
  cfg.model_tag = c.str("model.tag", cfg.model_tag);
  cfg.seed = (uint64_t)c.integer("run.seed", (long)cfg.seed);
  std::string mode = c.str("run.mode", "test");
  if (mode == "test")
    cfg.mode = RunMode::Test;
  else if (mode == "validate")
    cfg.mode = RunMode::Validate;
  else
    throw ContractError("run.mode must be 'test' or 'validate'");
  cfg.eis_epochs = (int)c.integer("train.eis_epochs", cfg.eis_epochs);
  cfg.eis_batch = (int)c.integer("train.eis_batch", cfg.eis_batch);
  cfg.eis_lr = c.real("train.eis_lr", cfg.eis_lr);
  cfg.cnn_epochs = (int)c.integer("train.cnn_epochs", cfg.cnn_epochs);
  cfg.cnn_batch = (int)c.integer("train.cnn_batch", cfg.cnn_batch);
  cfg.cnn_lr = c.real("train.cnn_lr", cfg.cnn_lr);
  cfg.joint_epochs = (int)c.integer("train.joint_epochs", cfg.joint_epochs);
  cfg.joint_batch = (int)c.integer("train.joint_batch", cfg.joint_batch);
  cfg.joint_lr = c.real("train.joint_lr", cfg.joint_lr);
  cfg.crop_size = (int)c.integer("eval.crop_size", cfg.crop_size);
  cfg.n_crops = (int)c.integer("eval.n_crops", cfg.n_crops);
  cfg.n_perm_eval = (int)c.integer("eval.n_perm", cfg.n_perm_eval);
  cfg.stats.target_sensitivity =
      c.real("stats.target_sensitivity", cfg.stats.target_sensitivity);
  cfg.stats.n_ci = (int)c.integer("stats.n_ci", cfg.stats.n_ci);
  cfg.stats.n_perm = (int)c.integer("stats.n_perm", cfg.stats.n_perm);
  cfg.stats.alpha = c.real("stats.alpha", cfg.stats.alpha);
  cfg.stats.seed = (uint64_t)c.integer("stats.seed", (long)cfg.stats.seed);
  if (!is_known_tag(cfg.model_tag))
    throw ContractError("unknown model tag '" + cfg.model_tag + "'");
  if (cfg.eis_epochs <= 0 || cfg.cnn_epochs <= 0 || cfg.joint_epochs <= 0 ||
      cfg.eis_batch <= 0 || cfg.cnn_batch <= 0 || cfg.joint_batch <= 0 ||
      cfg.eis_lr <= 0 || cfg.cnn_lr <= 0 || cfg.joint_lr <= 0 ||
      cfg.crop_size <= 0 || cfg.n_crops <= 0 || cfg.n_perm_eval <= 0)
    throw ContractError("training hyperparameters must be positive");
  return cfg;
}

GenConfig build_gen(const Config& c) {
  GenConfig g;
  g.n_lesions = (size_t)c.integer("gen.n_lesions", (long)g.n_lesions);
  g.n_benign = (size_t)c.integer("gen.n_benign", (long)g.n_benign);
  g.n_malignant = (size_t)c.integer("gen.n_malignant", (long)g.n_malignant);
  if (c.has("gen.n_lesions") && !c.has("gen.n_benign")) {
    // Keep the default 631:357 class balance when only the total is given.
    g.n_malignant = (size_t)((double)g.n_lesions * 357.0 / 988.0 + 0.5);
    g.n_benign = g.n_lesions - g.n_malignant;
  }
  g.seed = (uint64_t)c.integer("gen.seed", (long)g.seed);
  g.complementarity = c.real("gen.complementarity", g.complementarity);
  g.class_sep = c.real("gen.class_sep", g.class_sep);
  g.img_h = (int)c.integer("gen.img_h", g.img_h);
  g.img_w = (int)c.integer("gen.img_w", g.img_w);
  g.pixel_noise = c.real("gen.pixel_noise", g.pixel_noise);
  g.eis_log_noise = c.real("gen.eis_log_noise", g.eis_log_noise);
  g.eis_phase_noise = c.real("gen.eis_phase_noise", g.eis_phase_noise);
  g.max_measurements =
      (int)c.integer("gen.max_measurements", g.max_measurements);
  g.mean_measurements = c.real("gen.mean_measurements", g.mean_measurements);
  g.off_signal_frac = c.real("gen.off_signal_frac", g.off_signal_frac);
  if (g.complementarity < 0.0 || g.complementarity > 1.0)
    throw ContractError("gen.complementarity must lie in [0,1]");
  return g;
}

std::string predictions_model_tag(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ContractError("cannot read " + path);
  std::string header, line;
  std::getline(is, header);
  if (!std::getline(is, line))
    throw ContractError(path + ": no prediction rows");
  auto f = split_csv_line(line);
  if (f.size() < 5) throw ContractError(path + ": bad prediction row");
  return f[f.size() - 2];
}

// Restrict a scored set to the evaluation subset (benign + melanoma).
stats::ScoredSet eval_subset_of(const stats::ScoredSet& s,
                                const Dataset* data) {
  if (!data) return s;
  std::set<std::string> keep;
  for (const auto& l : data->lesions)
    if (l.in_eval_subset()) keep.insert(l.id);
  stats::ScoredSet out;
  for (size_t i = 0; i < s.size(); ++i)
    if (keep.count(s.ids[i])) out.push(s.ids[i], s.labels[i], s.scores[i]);
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw ContractError("cannot write " + path);
  os << text;
}

std::vector<size_t> train_indices(const Dataset& data, long holdout_fold) {
  if (holdout_fold < 0) {
    std::vector<size_t> all(data.lesions.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  if (holdout_fold > 4) throw ContractError("fold must lie in [0,4] or be -1");
  return data.indices_except_fold((int)holdout_fold);
}

int cmd_gen_data(const Config& c) {
  GenConfig g = build_gen(c);
  std::string out = c.require("out");
  gen_dataset(g, out);
  std::cout << "wrote " << g.n_lesions << " lesions to " << out << "\n";
  return 0;
}

int cmd_train(const Config& c) {
  ExperimentConfig cfg = build_experiment(c);
  Dataset data = load_dataset(c.require("data.dir"));
  std::string out = c.require("out");
  long fold = c.integer("fold", -1);
  auto idx = train_indices(data, fold);
  Rng init_rng(Rng::mix(cfg.seed ^ 0x1417));
  auto clf = make_classifier(cfg.model_tag, init_rng);
  clf->train(data, idx, cfg, Rng::mix(cfg.seed ^ 0x7EA1));
  clf->save(out);
  std::cout << "trained " << cfg.model_tag << " on " << idx.size()
            << " lesions; checkpoint " << out << "\n";
  return 0;
}

int cmd_predict(const Config& c) {
  ExperimentConfig cfg = build_experiment(c);
  Dataset data = load_dataset(c.require("data.dir"));
  std::string out = c.require("out");
  Rng init_rng(Rng::mix(cfg.seed ^ 0x1417));
  auto clf = make_classifier(cfg.model_tag, init_rng);
  clf->load(c.require("checkpoint"));
  Rng predict_rng(Rng::mix(cfg.seed ^ 0x9ED1));
  RunRecord rec;
  rec.model_tag = cfg.model_tag;
  rec.seed = cfg.seed;
  bool any_heads = false;
  for (const auto& l : data.lesions) {
    double p = clf->predict(l, cfg, predict_rng);
    rec.pooled.push(l.id, l.label, p);
    double hc = -1.0, he = -1.0;
    any_heads = clf->last_heads(hc, he) || any_heads;
    rec.head_cnn.push_back(hc);
    rec.head_eis.push_back(he);
  }
  if (!any_heads) {
    rec.head_cnn.clear();
    rec.head_eis.clear();
  }
  write_predictions_csv(out, rec, data);
  std::cout << "wrote " << rec.pooled.size() << " predictions to " << out
            << "\n";
  return 0;
}

int cmd_eval(const Config& c) {
  ExperimentConfig cfg = build_experiment(c);
  stats::ScoredSet s = read_predictions_csv(c.require("predictions"));
  Dataset data;
  bool have_data = c.has("data.dir");
  if (have_data) data = load_dataset(c.str("data.dir", ""));
  stats::ScoredSet subset = eval_subset_of(s, have_data ? &data : nullptr);
  auto report = stats::evaluate(subset, cfg.stats);
  std::string json = stats::report_to_json(report);
  if (c.has("out"))
    write_text(c.str("out", ""), json + "\n");
  else
    std::cout << json << "\n";
  return 0;
}

int cmd_compare(const Config& c) {
  ExperimentConfig cfg = build_experiment(c);
  stats::ScoredSet a = read_predictions_csv(c.require("a"));
  stats::ScoredSet b = read_predictions_csv(c.require("b"));
  Dataset data;
  bool have_data = c.has("data.dir");
  if (have_data) data = load_dataset(c.str("data.dir", ""));
  const Dataset* dp = have_data ? &data : nullptr;
  stats::ScoredSet sa = eval_subset_of(a, dp), sb = eval_subset_of(b, dp);
  double p = stats::paired_permutation_test(sa, sb, cfg.stats);
  double ta = stats::threshold_at_sensitivity(sa, cfg.stats.target_sensitivity);
  double tb = stats::threshold_at_sensitivity(sb, cfg.stats.target_sensitivity);
  auto ra = stats::confusion_rates(sa, ta);
  auto rb = stats::confusion_rates(sb, tb);
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "{\"p_value\": %.17g, \"significant\": %s, "
                "\"specificity_a\": %.17g, \"specificity_b\": %.17g}",
                p, p < cfg.stats.alpha ? "true" : "false",
                ra.specificity.value_or(-1.0), rb.specificity.value_or(-1.0));
  std::string json(buf);
  if (c.has("out"))
    write_text(c.str("out", ""), json + "\n");
  else
    std::cout << json << "\n";
  return 0;
}

std::vector<std::string> split_tags(const std::string& csv) {
  std::vector<std::string> tags;
  std::stringstream ss(csv);
  std::string t;
  while (std::getline(ss, t, ',')) {
    if (!t.empty()) tags.push_back(t);
  }
  return tags;
}

int cmd_reproduce(const Config& c) {
  std::string out = c.require("out");
  fs::create_directories(out);
  ExperimentConfig base = build_experiment(c);

  std::string data_dir;
  Dataset data;
  if (c.has("data.dir")) {
    data_dir = c.str("data.dir", "");
    data = load_dataset(data_dir);
  } else {
    data_dir = out + "/data";
    GenConfig g = build_gen(c);
    if (!c.has("gen.seed")) g.seed = base.seed;  // master seed drives gen too
    gen_dataset(g, data_dir);
    data = load_dataset(data_dir);
  }

  std::vector<std::string> tags = split_tags(
      c.str("reproduce.models",
            "fcnn,gru-last,gru-mean,gru-max,cnn,ensemble-cnn+gru-max,"
            "fused-lin,fused-fc,fused-ca"));
  std::vector<RunRecord> runs;
  for (const auto& tag : tags) {
    ExperimentConfig cfg = base;
    cfg.model_tag = tag;
    if (!is_known_tag(tag))
      throw ContractError("unknown model tag '" + tag + "'");
    std::cerr << "[reproduce] " << tag << "...\n";
    RunRecord rec = run_cv(data, cfg);
    write_predictions_csv(out + "/predictions_" + tag + ".csv", rec, data);
    write_text(out + "/report_" + tag + ".json",
               stats::report_to_json(rec.report) + "\n");
    std::cerr << "[reproduce] " << tag << " done in " << (int)rec.wall_seconds
              << "s\n";
    runs.push_back(std::move(rec));
  }
  write_text(out + "/table.txt", emit_table_text(runs));
  write_text(out + "/table.csv", emit_table_csv(runs));
  std::cout << emit_table_text(runs);
  return 0;
}

int cmd_emit_table(const Config& c, const std::vector<std::string>& csvs) {
  if (csvs.empty()) throw ContractError("emit-table: no prediction files");
  ExperimentConfig cfg = build_experiment(c);
  Dataset data;
  bool have_data = c.has("data.dir");
  if (have_data) data = load_dataset(c.str("data.dir", ""));
  std::vector<RunRecord> runs;
  for (const auto& path : csvs) {
    RunRecord rec;
    rec.model_tag = predictions_model_tag(path);
    rec.pooled = read_predictions_csv(path);
    rec.eval_subset = eval_subset_of(rec.pooled, have_data ? &data : nullptr);
    rec.report = stats::evaluate(rec.eval_subset, cfg.stats);
    runs.push_back(std::move(rec));
  }
  std::cout << emit_table_text(runs);
  if (c.has("csv")) write_text(c.str("csv", ""), emit_table_csv(runs));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EIS + dermoscopy melanoma detection toolkit"};
  app.require_subcommand(1);

  struct Sub {
    CLI::App* cmd;
    std::string config_file;
    std::vector<std::string> overrides;
  };
  std::map<std::string, Sub> subs;
  auto add = [&](const std::string& name, const std::string& desc) {
    Sub& s = subs[name];
    s.cmd = app.add_subcommand(name, desc);
    s.cmd->add_option("-c,--config", s.config_file, "key=value config file");
    s.cmd->add_option("overrides", s.overrides,
                      "key=value overrides (applied after the config file)");
    return s.cmd;
  };

  auto* gen = add("gen-data", "generate a synthetic paired dataset");
  std::string gen_out;
  gen->add_option("-o,--out", gen_out, "output directory");

  auto* train = add("train", "train one model on a dataset");
  std::string train_data, train_model, train_out;
  train->add_option("-d,--data", train_data, "dataset directory");
  train->add_option("-m,--model", train_model, "model tag");
  train->add_option("-o,--out", train_out, "checkpoint path");

  auto* predict = add("predict", "predict with a trained checkpoint");
  std::string pr_data, pr_model, pr_ckpt, pr_out;
  predict->add_option("-d,--data", pr_data, "dataset directory");
  predict->add_option("-m,--model", pr_model, "model tag");
  predict->add_option("-k,--checkpoint", pr_ckpt, "checkpoint path");
  predict->add_option("-o,--out", pr_out, "predictions CSV path");

  auto* eval = add("eval", "evaluate a predictions CSV");
  std::string ev_pred, ev_data, ev_out;
  eval->add_option("-p,--predictions", ev_pred, "predictions CSV");
  eval->add_option("-d,--data", ev_data,
                   "dataset directory (restricts to benign + melanoma)");
  eval->add_option("-o,--out", ev_out, "report JSON path (default stdout)");

  auto* compare = add("compare", "paired permutation test between two runs");
  std::string cp_a, cp_b, cp_data, cp_out;
  compare->add_option("-a", cp_a, "predictions CSV, model A");
  compare->add_option("-b", cp_b, "predictions CSV, model B");
  compare->add_option("-d,--data", cp_data, "dataset directory");
  compare->add_option("-o,--out", cp_out, "report JSON path (default stdout)");

  auto* repro = add("reproduce", "run the full default experiment matrix");
  std::string rp_out;
  long rp_seed = -1;
  repro->add_option("-o,--out", rp_out, "output directory");
  repro->add_option("-s,--seed", rp_seed, "master seed");

  auto* table = add("emit-table", "summary table from prediction CSVs");
  std::vector<std::string> tb_csvs;
  std::string tb_data, tb_csv_out;
  table->add_option("-d,--data", tb_data, "dataset directory");
  table->add_option("--csv", tb_csv_out, "also write a full-precision CSV");
  table->add_option("-i,--input", tb_csvs, "prediction CSV paths");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const std::string name = app.get_subcommands().front()->get_name();
    Sub& s = subs.at(name);
    Config c;
    if (!s.config_file.empty()) c.load_file(s.config_file);
    for (const auto& kv : s.overrides) c.set_override(kv);
    auto opt = [&](const std::string& key, const std::string& v) {
      if (!v.empty()) c.set_override(key + "=" + v);
    };
    if (name == "gen-data") {
      opt("out", gen_out);
      return cmd_gen_data(c);
    }
    if (name == "train") {
      opt("data.dir", train_data);
      opt("model.tag", train_model);
      opt("out", train_out);
      return cmd_train(c);
    }
    if (name == "predict") {
      opt("data.dir", pr_data);
      opt("model.tag", pr_model);
      opt("checkpoint", pr_ckpt);
      opt("out", pr_out);
      return cmd_predict(c);
    }
    if (name == "eval") {
      opt("predictions", ev_pred);
      opt("data.dir", ev_data);
      opt("out", ev_out);
      return cmd_eval(c);
    }
    if (name == "compare") {
      opt("a", cp_a);
      opt("b", cp_b);
      opt("data.dir", cp_data);
      opt("out", cp_out);
      return cmd_compare(c);
    }
    if (name == "reproduce") {
      opt("out", rp_out);
      if (rp_seed >= 0) c.set_override("run.seed=" + std::to_string(rp_seed));
      return cmd_reproduce(c);
    }
    if (name == "emit-table") {
      opt("data.dir", tb_data);
      opt("csv", tb_csv_out);
      return cmd_emit_table(c, tb_csvs);
    }
    throw ContractError("unknown subcommand");
  } catch (const LeakageError& e) {
    std::cerr << "leakage error: " << e.what() << "\n";
    return 4;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const DimensionError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
}
