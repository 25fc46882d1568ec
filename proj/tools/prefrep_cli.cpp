// prefrep: data generation, training, evaluation, constructions, GPO and the
// scoring-cost benchmark from one binary.
//
// Exit codes: 0 success, 2 usage or validation error, 1 internal error.
// Data goes to files (or stdout for `eval` without --out); errors go to stderr.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "prefrep/prefrep.hpp"

using nlohmann::ordered_json;
using namespace prefrep;

namespace {

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::uint64_t default_seed() {
  const char* env = std::getenv("PREFREP_SEED");
  if (!env || !*env) return 0;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(env, &used);
    if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ValidationError(std::string("PREFREP_SEED must be a nonnegative integer, got '") + env + "'");
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw ValidationError("failed writing " + path);
}

void write_json(const std::string& path, const ordered_json& j) { write_text(path, j.dump(2) + "\n"); }

/// Bookkeeping shared by every command; ends up in `<out>.manifest.json`.
struct Run {
  std::string command;
  ordered_json flags = ordered_json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> artifacts;
  ordered_json timing = ordered_json::object();
  std::string started = utc_now();
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

  void artifact(const std::string& path) { artifacts.push_back(path); }

  void write_manifest(const std::string& path) const {
    ordered_json m;
    m["command"] = command;
    m["flags"] = flags;
    m["seed"] = seed;
    m["started_at"] = started;
    m["finished_at"] = utc_now();
    m["elapsed_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    m["artifacts"] = artifacts;
    if (!timing.empty()) m["timing"] = timing;
    write_json(path, m);
  }
};

std::string manifest_path(const std::string& out) { return out + ".manifest.json"; }

// ---------------------------------------------------------------------------
// CSV matrices: comma-separated doubles, no header.

Matrix read_csv_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open matrix " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      const bool rest_blank = end && std::string(end).find_first_not_of(" \t") == std::string::npos;
      if (end == cell.c_str() || !rest_blank || !std::isfinite(v)) {
        throw ValidationError(path + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(rows.front().size()) + " columns, got " +
                            std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ValidationError("matrix file " + path + " is empty");
  return Matrix::from_rows(rows);
}

std::string csv_rows(const std::vector<std::vector<double>>& rows) {
  std::string out;
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) out += ',';
      out += fmt(r[i]);
    }
    out += '\n';
  }
  return out;
}

std::vector<double> parse_probs(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      out.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw ValidationError("bad probability '" + cell + "' in --start");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Commands

struct GenOpts {
  std::string kind = "cycle";
  std::size_t items = 3, contexts = 1, pairs = 20;
  bool soft = false;
  double beta = 1.0, scale = 1.0;
  std::string out;
};

void cmd_gen_data(const GenOpts& o, Run& run) {
  GeneratedData g;
  if (o.kind == "cycle") {
    g = gen_cycle(o.items, o.contexts, run.seed);
  } else if (o.kind == "bt") {
    g = gen_bt(o.items, o.contexts, o.pairs, run.seed, o.soft, o.beta);
  } else {
    g = gen_skew(o.items, o.contexts, run.seed, o.scale);
  }
  save_dataset(g.dataset, o.out);
  run.artifact(o.out);
  if (std::filesystem::exists(catalog_path(o.out))) run.artifact(catalog_path(o.out));
  run.write_manifest(manifest_path(o.out));
}

struct TrainOpts {
  std::string data, model_kind = "gpm", loss = "ce", optimizer = "adam", out;
  std::size_t k = 1, epochs = 200, batch_size = 32;
  std::optional<double> beta;
  double lr = 0.05, init_scale = 0.1;
  bool normalize = true;
};

template <class Model>
void emit_training(const TrainResult<Model>& res, const TrainOpts& o, Run& run) {
  save_model(AnyModel(res.model), o.out);
  run.artifact(o.out);
  std::string csv = "epoch,loss,grad_norm,accuracy\n";
  for (std::size_t e = 0; e < res.report.epoch_loss.size(); ++e) {
    csv += std::to_string(e + 1) + ',' + fmt(res.report.epoch_loss[e]) + ',' + fmt(res.report.grad_norm[e]) +
           ',' + fmt(res.report.epoch_accuracy[e]) + '\n';
  }
  write_text(o.out + ".report.csv", csv);
  run.artifact(o.out + ".report.csv");
  ordered_json summary;
  summary["model_kind"] = o.model_kind;
  summary["final_accuracy"] = res.report.final_accuracy;
  summary["final_loss"] = res.report.epoch_loss.back();
  summary["epochs"] = o.epochs;
  summary["seed"] = run.seed;
  write_json(o.out + ".summary.json", summary);
  run.artifact(o.out + ".summary.json");
}

void cmd_train(const TrainOpts& o, Run& run) {
  const PreferenceDataset ds = load_dataset(o.data);
  TrainConfig cfg = o.model_kind == "gpm" ? TrainConfig::for_gpm() : TrainConfig::for_bt();
  if (o.beta) cfg.beta = *o.beta;
  cfg.learning_rate = o.lr;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.seed = run.seed;
  cfg.init_scale = o.init_scale;
  cfg.loss_kind = o.loss == "ce" ? LossKind::CE : LossKind::MSE;
  cfg.optimizer = o.optimizer == "adam" ? OptimizerKind::Adam : OptimizerKind::SGD;
  cfg.validate();
  if (o.model_kind == "gpm") {
    auto init = init_gpm(ds.catalog, o.k, o.normalize, cfg.beta, cfg.init_scale, run.seed);
    emit_training(train(std::move(init), ds, cfg), o, run);
  } else {
    auto init = init_bt(ds.catalog, cfg.beta, cfg.init_scale, run.seed);
    emit_training(train(std::move(init), ds, cfg), o, run);
  }
  run.write_manifest(manifest_path(o.out));
}

void cmd_eval(const std::string& model_path, const std::string& data_path, const std::string& out, Run& run) {
  const AnyModel model = load_model(model_path);
  const PreferenceDataset ds = load_dataset(data_path);
  if (ds.examples.empty()) throw ValidationError("dataset " + data_path + " has no examples");
  ordered_json j;
  j["model_kind"] = std::holds_alternative<GpmModel>(model) ? "gpm" : "bt";
  j["examples"] = ds.examples.size();
  j["accuracy"] = std::visit([&](const auto& m) { return eval_accuracy(m, ds); }, model);
  const std::string text = j.dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
    run.write_manifest(data_path + ".eval.manifest.json");
  } else {
    write_text(out, text);
    run.artifact(out);
    run.write_manifest(manifest_path(out));
  }
}

void cmd_construct(const std::string& matrix_path, const std::string& mode, const std::string& out, Run& run) {
  const SkewMatrix p(read_csv_matrix(matrix_path), 1e-10);
  const Matrix& target = p.matrix();
  std::vector<std::vector<double>> rows;
  std::vector<double> lambdas;
  Matrix recon;
  if (mode == "real") {
    const auto c = construct_real(p);
    for (const auto& v : c.embeddings) rows.emplace_back(v.coords().begin(), v.coords().end());
    lambdas.assign(c.k, 1.0);
    recon = rescore(c.embeddings);
  } else if (mode == "complex") {
    const auto c = construct_complex(p);
    for (const auto& v : c) {
      std::vector<double> r = v.re;
      r.insert(r.end(), v.im.begin(), v.im.end());
      rows.push_back(std::move(r));
    }
    lambdas.assign(p.size(), 1.0);
    recon = rescore_complex(c);
  } else {
    const auto d = construct_spectral(p);
    for (const auto& v : d.embeddings) rows.emplace_back(v.coords().begin(), v.coords().end());
    lambdas = d.lambdas;
    recon = rescore(d.embeddings);
  }
  write_text(out, csv_rows(rows));
  run.artifact(out);
  ordered_json rep;
  rep["mode"] = mode;
  rep["size"] = p.size();
  rep["max_residual"] = max_abs_diff(recon, target);
  rep["lambdas"] = lambdas;
  write_json(out + ".report.json", rep);
  run.artifact(out + ".report.json");
  run.write_manifest(manifest_path(out));
}

ScoreMatrix model_scores(const AnyModel& model, const std::string& ctx) {
  return std::visit(
      [&](const auto& m) {
        const auto items = context_items(m, ctx);
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, GpmModel>) {
          return score_matrix(m, ctx, items);
        } else {
          return bt_score_matrix(m, ctx, items);
        }
      },
      model);
}

struct GpoOpts {
  std::string matrix, model, context, mode = "exact", start, out;
  double beta = 1.0;
  std::size_t iters = 20, k = 8;
};

void cmd_gpo(const GpoOpts& o, Run& run) {
  if (o.matrix.empty() == o.model.empty()) throw ValidationError("give exactly one of --matrix or --model");
  if (!o.model.empty() && o.context.empty()) throw ValidationError("--model needs --context");
  GameSpec g;
  g.scores = o.matrix.empty() ? model_scores(load_model(o.model), o.context)
                              : ScoreMatrix::from_matrix(read_csv_matrix(o.matrix));
  g.beta = o.beta;
  g.mode = o.mode == "exact" ? EstimateMode::Exact : EstimateMode::Sampled;
  g.samples = o.k;
  g.seed = run.seed;
  const std::size_t n = g.scores.size();
  const PolicyDistribution start =
      o.start.empty() ? PolicyDistribution::uniform(n) : PolicyDistribution::from_probs(parse_probs(o.start));
  const GpoReport rep = gpo_run(start, g, o.iters);

  ordered_json j;
  j["items"] = g.scores.items;
  j["beta"] = g.beta;
  j["mode"] = o.mode;
  j["iterations"] = o.iters;
  if (g.mode == EstimateMode::Sampled) j["samples"] = g.samples;
  j["seed"] = run.seed;
  j["probs"] = rep.snapshots;
  j["loss_start"] = rep.loss_start;
  j["loss_end"] = rep.loss_end;
  j["log_z"] = rep.log_z;
  j["inner_steps"] = rep.inner_steps;
  j["min_win_rates"] = rep.min_win_rates;
  j["average_policy"] = rep.average_policy;
  j["final_min_win_rate"] = rep.final_min_win_rate;
  if (n <= 64) {
    const Equilibrium eq = solve_equilibrium(g.scores, g.beta);
    j["equilibrium"] = {{"probs", eq.probs}, {"lower", eq.lower}, {"upper", eq.upper}, {"method", eq.method}};
    j["final_tv_to_equilibrium"] = total_variation(rep.snapshots.back(), eq.probs);
  }
  write_json(o.out, j);
  run.artifact(o.out);
  run.write_manifest(manifest_path(o.out));
}

void cmd_bench(const std::string& model_path, const std::string& ctx, const std::vector<std::size_t>& ks,
               bool pairwise, const std::string& out, Run& run) {
  const AnyModel model = load_model(model_path);
  const auto items = std::visit([&](const auto& m) { return context_items(m, ctx); }, model);
  const auto* gpm = std::get_if<GpmModel>(&model);
  if (pairwise && !gpm) throw ValidationError("--pairwise needs a gpm model");
  std::string csv = gpm ? "K,embedding_evals,pair_combinations" : "K,reward_evals,pair_combinations";
  if (pairwise) csv += ",pairwise_full_scorings,pairwise_embedding_evals";
  csv += '\n';
  for (std::size_t k : ks) {
    if (k == 0 || k > items.size()) {
      throw ValidationError("K=" + std::to_string(k) + " outside 1.." + std::to_string(items.size()) +
                            " (items in context " + ctx + ")");
    }
    const std::vector<std::string> subset(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(k));
    OpCounter c;
    const auto t0 = std::chrono::steady_clock::now();
    if (gpm) {
      score_matrix(*gpm, ctx, subset, &c);
    } else {
      bt_score_matrix(std::get<BtModel>(model), ctx, subset, &c);
    }
    ordered_json& t = run.timing["K=" + std::to_string(k)];
    t["linear_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    csv += std::to_string(k) + ',' + std::to_string(gpm ? c.embedding_evals.load() : c.reward_evals.load()) +
           ',' + std::to_string(c.pair_combinations.load());
    if (pairwise) {
      OpCounter pc;
      const auto t1 = std::chrono::steady_clock::now();
      pairwise_baseline_matrix(*gpm, ctx, subset, &pc);
      t["pairwise_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
      csv += ',' + std::to_string(pc.full_scorings.load()) + ',' + std::to_string(pc.embedding_evals.load());
    }
    csv += '\n';
  }
  write_text(out, csv);
  run.artifact(out);
  run.write_manifest(manifest_path(out));
}

void cmd_embed_dump(const std::string& model_path, const std::string& ctx, const std::string& out, Run& run) {
  const AnyModel model = load_model(model_path);
  const auto* gpm = std::get_if<GpmModel>(&model);
  if (!gpm) throw ValidationError("embed-dump needs a gpm model");
  const auto items = context_items(*gpm, ctx);
  std::string csv = "item";
  for (std::size_t d = 0; d < 2 * gpm->k; ++d) csv += ",v" + std::to_string(d);
  csv += '\n';
  for (const auto& id : items) {
    const EmbeddingVector v = gpm_embed(*gpm, {ctx, id});
    csv += id;
    for (double x : v.coords()) csv += ',' + fmt(x);
    csv += '\n';
  }
  write_text(out, csv);
  run.artifact(out);
  run.write_manifest(manifest_path(out));
}

/// Every option the user actually passed, for the manifest.
ordered_json collect_flags(const CLI::App* sub) {
  ordered_json flags = ordered_json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->count() == 0 || opt->get_name() == "--help") continue;
    const auto& res = opt->results();
    if (res.size() == 1) {
      flags[opt->get_name()] = res.front();
    } else {
      flags[opt->get_name()] = res;
    }
  }
  return flags;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prefrep: general preference representations, Bradley-Terry baselines and GPO"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed_flag;

  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", seed_flag, "RNG seed (default: $PREFREP_SEED or 0)");
  };

  GenOpts gen;
  auto* sub_gen = app.add_subcommand("gen-data", "generate a synthetic preference dataset (JSONL)");
  sub_gen->add_option("--kind", gen.kind, "cycle | bt | skew")->check(CLI::IsMember({"cycle", "bt", "skew"}));
  sub_gen->add_option("--items", gen.items, "items per context");
  sub_gen->add_option("--contexts", gen.contexts, "number of contexts");
  sub_gen->add_option("--pairs", gen.pairs, "comparisons per context (bt)");
  sub_gen->add_flag("--soft", gen.soft, "soft labels sigma(gap / beta) (bt)");
  sub_gen->add_option("--beta", gen.beta, "label temperature (bt --soft)");
  sub_gen->add_option("--scale", gen.scale, "entry scale (skew)");
  sub_gen->add_option("--out", gen.out, "output JSONL path")->required();
  add_seed(sub_gen);

  TrainOpts tr;
  auto* sub_train = app.add_subcommand("train", "fit a gpm or bt model");
  sub_train->add_option("--data", tr.data, "JSONL dataset")->required();
  sub_train->add_option("--model-kind", tr.model_kind, "gpm | bt")->check(CLI::IsMember({"gpm", "bt"}));
  sub_train->add_option("--k", tr.k, "gpm block count");
  sub_train->add_option("--beta", tr.beta, "temperature (default 0.1 gpm, 1.0 bt)");
  sub_train->add_option("--epochs", tr.epochs);
  sub_train->add_option("--lr", tr.lr, "learning rate");
  sub_train->add_option("--batch-size", tr.batch_size);
  sub_train->add_option("--init-scale", tr.init_scale);
  sub_train->add_option("--normalize", tr.normalize, "unit-norm gpm embeddings (true|false)");
  sub_train->add_option("--loss", tr.loss, "ce | mse")->check(CLI::IsMember({"ce", "mse"}));
  sub_train->add_option("--optimizer", tr.optimizer, "adam | sgd")->check(CLI::IsMember({"adam", "sgd"}));
  sub_train->add_option("--out", tr.out, "model JSON path")->required();
  add_seed(sub_train);

  std::string ev_model, ev_data, ev_out;
  auto* sub_eval = app.add_subcommand("eval", "accuracy of a model on a dataset (JSON)");
  sub_eval->add_option("--model", ev_model)->required();
  sub_eval->add_option("--data", ev_data)->required();
  sub_eval->add_option("--out", ev_out, "write JSON here instead of stdout");

  std::string cs_matrix, cs_mode = "real", cs_out;
  auto* sub_cs = app.add_subcommand("construct", "embeddings that reproduce a skew matrix");
  sub_cs->add_option("--matrix", cs_matrix, "CSV skew matrix")->required();
  sub_cs->add_option("--mode", cs_mode, "real | complex | spectral")
      ->check(CLI::IsMember({"real", "complex", "spectral"}));
  sub_cs->add_option("--out", cs_out, "embedding CSV path")->required();

  GpoOpts gp;
  auto* sub_gpo = app.add_subcommand("gpo", "iterated general preference optimization on a tabular policy");
  sub_gpo->add_option("--matrix", gp.matrix, "CSV skew score matrix");
  sub_gpo->add_option("--model", gp.model, "model JSON (scores one context)");
  sub_gpo->add_option("--context", gp.context);
  sub_gpo->add_option("--beta", gp.beta);
  sub_gpo->add_option("--iters", gp.iters);
  sub_gpo->add_option("--mode", gp.mode, "exact | sampled")->check(CLI::IsMember({"exact", "sampled"}));
  sub_gpo->add_option("--k", gp.k, "opponent samples per response (sampled)");
  sub_gpo->add_option("--start", gp.start, "comma-separated start probabilities (default uniform)");
  sub_gpo->add_option("--out", gp.out, "report JSON path")->required();
  add_seed(sub_gpo);

  std::string bn_model, bn_ctx, bn_out;
  std::vector<std::size_t> bn_ks;
  bool bn_pairwise = false;
  auto* sub_bench = app.add_subcommand("bench", "count model evaluations needed to score K items");
  sub_bench->add_option("--model", bn_model)->required();
  sub_bench->add_option("--context", bn_ctx)->required();
  sub_bench->add_option("--k-values", bn_ks, "list of K")->required()->delimiter(',');
  sub_bench->add_flag("--pairwise", bn_pairwise, "also count the pairwise baseline");
  sub_bench->add_option("--out", bn_out, "CSV path")->required();

  std::string ed_model, ed_ctx, ed_out;
  auto* sub_ed = app.add_subcommand("embed-dump", "per-item embedding coordinates (CSV)");
  sub_ed->add_option("--model", ed_model)->required();
  sub_ed->add_option("--context", ed_ctx)->required();
  sub_ed->add_option("--out", ed_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    Run run;
    run.command = sub->get_name();
    run.flags = collect_flags(sub);
    run.seed = seed_flag ? *seed_flag : default_seed();
    if (sub == sub_gen) cmd_gen_data(gen, run);
    else if (sub == sub_train) cmd_train(tr, run);
    else if (sub == sub_eval) cmd_eval(ev_model, ev_data, ev_out, run);
    else if (sub == sub_cs) cmd_construct(cs_matrix, cs_mode, cs_out, run);
    else if (sub == sub_gpo) cmd_gpo(gp, run);
    else if (sub == sub_bench) cmd_bench(bn_model, bn_ctx, bn_ks, bn_pairwise, bn_out, run);
    else cmd_embed_dump(ed_model, ed_ctx, ed_out, run);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
