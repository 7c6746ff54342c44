// mcl: command-line front end over the C API.
//
// Exit codes: 0 success, 2 usage, 3 data error, 4 numeric failure, 1 other.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mcl/mcl.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct CliFailure {
  int exit_code;
  std::string message;
};

int exit_code_for(mcl_status s) {
  switch (s) {
    case MCL_OK:
      return kExitOk;
    case MCL_ERR_INVALID_ARGUMENT:
      return kExitUsage;
    case MCL_ERR_IO:
    case MCL_ERR_BAD_MAGIC:
    case MCL_ERR_UNSUPPORTED_VERSION:
    case MCL_ERR_TRUNCATED:
    case MCL_ERR_DIMENSION_MISMATCH:
    case MCL_ERR_NO_CLUSTERS:
      return kExitData;
    case MCL_ERR_DEGENERATE_EMBEDDING:
    case MCL_ERR_NUMERIC:
      return kExitNumeric;
    default:
      return kExitOther;
  }
}

void check(mcl_status s, const std::string& what) {
  if (s == MCL_OK) return;
  throw CliFailure{exit_code_for(s), what + ": " + mcl_status_name(s) + ": " + mcl_last_error()};
}

[[noreturn]] void usage_error(const std::string& msg) { throw CliFailure{kExitUsage, msg}; }

struct PoolDeleter {
  void operator()(mcl_pool* p) const { mcl_pool_free(p); }
};
struct ModelDeleter {
  void operator()(mcl_model* m) const { mcl_model_free(m); }
};
struct ReportDeleter {
  void operator()(mcl_report* r) const { mcl_report_free(r); }
};
using PoolPtr = std::unique_ptr<mcl_pool, PoolDeleter>;
using ModelPtr = std::unique_ptr<mcl_model, ModelDeleter>;
using ReportPtr = std::unique_ptr<mcl_report, ReportDeleter>;

PoolPtr load_pool(const std::string& path) {
  mcl_pool* p = nullptr;
  check(mcl_pool_read(path.c_str(), &p), "reading " + path);
  return PoolPtr(p);
}

ModelPtr load_model(const std::string& path) {
  if (!fs::exists(path)) throw CliFailure{kExitData, "checkpoint not found: " + path};
  mcl_model* m = nullptr;
  check(mcl_model_load(path.c_str(), &m), "loading " + path);
  return ModelPtr(m);
}

std::string content_hash(const std::string& path) {
  char out[41] = {};
  check(mcl_content_hash(path.c_str(), out), "hashing " + path);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw CliFailure{kExitData, "cannot write " + path.string()};
}

void prepare_output_dir(const fs::path& dir, bool force) {
  std::error_code ec;
  if (fs::exists(dir / "manifest.json") && !force)
    usage_error("output directory " + dir.string() + " already holds a run (use --force to overwrite)");
  fs::create_directories(dir, ec);
  if (ec) throw CliFailure{kExitData, "cannot create " + dir.string() + ": " + ec.message()};
}

// Resolution order for the seed: --seed, then the config file, then MCL_SEED,
// then the built-in default.
struct SeedChoice {
  std::optional<std::uint64_t> value;
  std::string source = "default";
};

SeedChoice resolve_seed(const std::optional<std::uint64_t>& flag, const json& file_config) {
  if (flag) return {flag, "flag"};
  if (file_config.contains("seed")) return {file_config.at("seed").get<std::uint64_t>(), "config"};
  if (const char* env = std::getenv("MCL_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
      return {static_cast<std::uint64_t>(v), "env"};
    } catch (const std::exception&) {
      usage_error(std::string("MCL_SEED is not an unsigned integer: '") + env + "'");
    }
  }
  return {};
}

json read_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw CliFailure{kExitData, "cannot open config " + path};
  try {
    json j = json::parse(in);
    if (!j.is_object()) usage_error("config " + path + " must hold a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    usage_error("config " + path + " is not valid JSON: " + e.what());
  }
}

// Settings shared by the training-style verbs.
struct RunOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::size_t> epochs;
  std::string out_dir = "run";
  bool force = false;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--config", o.config_path, "JSON file overriding the default configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Base seed (falls back to the config, then MCL_SEED)");
  cmd->add_option("--threads", o.threads, "Worker threads for distance and neighbor computation")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--epochs", o.epochs, "Number of training epochs")->check(CLI::PositiveNumber);
  cmd->add_option("-o,--out", o.out_dir, "Output directory")->capture_default_str();
  cmd->add_flag("--force", o.force, "Overwrite an existing run directory");
}

struct ResolvedConfig {
  json overrides;  // what is handed to the library
  json resolved;   // every key with its effective value
  SeedChoice seed;
};

ResolvedConfig resolve_config(const RunOptions& o, json overrides) {
  json file = read_config_file(o.config_path);
  ResolvedConfig rc;
  rc.seed = resolve_seed(o.seed, file);
  for (auto& [k, v] : overrides.items()) file[k] = v;
  if (rc.seed.value) file["seed"] = *rc.seed.value;
  if (o.threads) file["threads"] = *o.threads;
  if (o.epochs) file["epochs"] = *o.epochs;
  rc.overrides = file;
  char* text = nullptr;
  check(mcl_config_resolve(file.dump().c_str(), &text), "configuration");
  rc.resolved = json::parse(text);
  mcl_string_free(text);
  return rc;
}

void write_manifest(const fs::path& dir, const std::string& verb, const ResolvedConfig& rc,
                    const std::vector<std::string>& inputs, const std::vector<std::string>& outputs,
                    const std::vector<std::string>& argv) {
  json in = json::array();
  for (const auto& p : inputs) in.push_back({{"path", fs::absolute(p).string()}, {"sha1", content_hash(p)}});
  json out = json::array();
  for (const auto& p : outputs) out.push_back((dir / p).string());
  const json manifest{{"tool", "mcl"},
                      {"version", mcl_version()},
                      {"verb", verb},
                      {"argv", argv},
                      {"config", rc.resolved},
                      {"seeds", {{"base", rc.resolved.at("seed")}, {"source", rc.seed.source}}},
                      {"inputs", in},
                      {"outputs", out}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<double> parse_ratios(const std::vector<double>& ratios) {
  for (double r : ratios)
    if (!(r > 0.0 && r <= 1.0)) usage_error("split ratios must lie in (0, 1], got " + std::to_string(r));
  return ratios;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  mcl_gen_spec spec{};
  std::string out;
  bool force = false;
};

int cmd_gen(const GenArgs& a) {
  if (fs::exists(a.out) && !a.force) usage_error(a.out + " exists (use --force to overwrite)");
  mcl_pool* p = nullptr;
  check(mcl_pool_generate(&a.spec, &p), "generating pool");
  PoolPtr pool(p);
  check(mcl_pool_write(pool.get(), a.out.c_str()), "writing " + a.out);
  std::cout << "wrote " << mcl_pool_size(pool.get()) << " samples of dimension " << mcl_pool_dim(pool.get())
            << " (" << mcl_pool_num_identities(pool.get()) << " identities) to " << a.out << "\n";
  return kExitOk;
}

struct TrainArgs {
  RunOptions run;
  std::string pool;
  std::optional<std::string> regime;
  std::optional<double> split_ratio;
  bool fixed_split = false;
  bool shared_label_space = false;
  bool no_sc = false;
  bool plain_triplet = false;
  bool no_proto_renorm = false;
};

void log_stages(const json& report) {
  std::optional<std::size_t> stage;
  for (const auto& e : report.at("epochs")) {
    const auto s = e.at("stage").get<std::size_t>();
    if (stage != s) std::cerr << "stage " << s << ": from epoch " << e.at("epoch").get<std::size_t>() << "\n";
    stage = s;
  }
}

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv) {
  json overrides = json::object();
  if (a.regime) overrides["regime"] = *a.regime;
  if (a.split_ratio) overrides["split_ratio"] = *a.split_ratio;
  if (a.fixed_split) overrides["fixed_split"] = true;
  if (a.shared_label_space) overrides["shared_label_space"] = true;
  if (a.no_sc) overrides["use_sc"] = false;
  if (a.plain_triplet) overrides["triplet_weight"] = "plain";
  if (a.no_proto_renorm) overrides["proto_renorm"] = false;
  const ResolvedConfig rc = resolve_config(a.run, overrides);

  PoolPtr pool = load_pool(a.pool);
  const fs::path dir = a.run.out_dir;
  prepare_output_dir(dir, a.run.force);

  mcl_model* m = nullptr;
  mcl_report* r = nullptr;
  check(mcl_train(pool.get(), rc.overrides.dump().c_str(), &m, &r), "training");
  ModelPtr model(m);
  ReportPtr report(r);

  const json rep = json::parse(mcl_report_json(report.get()));
  if (rc.resolved.at("regime") == "naive") log_stages(rep);

  check(mcl_model_save(model.get(), (dir / "model.mclk").c_str()), "saving checkpoint");
  write_text(dir / "metrics.csv", mcl_report_csv(report.get(), MCL_CSV_METRICS));
  write_text(dir / "cost.csv", mcl_report_csv(report.get(), MCL_CSV_COST));
  write_text(dir / "report.json", rep.dump(2) + "\n");
  write_manifest(dir, "train", rc, {a.pool}, {"model.mclk", "metrics.csv", "cost.csv", "report.json"}, argv);

  const json& fin = rep.at("final");
  std::cout << "regime " << rc.resolved.at("regime").get<std::string>() << " splits "
            << rc.resolved.at("splits") << ": mAP " << fin.at("mAP").get<double>() << " rank1 "
            << fin.at("rank1").get<double>() << " peak_bytes " << rep.at("totals").at("peak_bytes") << "\n";
  return kExitOk;
}

struct CompareArgs {
  RunOptions run;
  std::string pool;
  std::vector<double> ratios{1.0, 0.5, 0.25};
};

int cmd_compare(const CompareArgs& a, const std::vector<std::string>& argv) {
  const std::vector<double> ratios = parse_ratios(a.ratios);
  const ResolvedConfig rc = resolve_config(a.run, json::object());
  PoolPtr pool = load_pool(a.pool);
  const fs::path dir = a.run.out_dir;
  prepare_output_dir(dir, a.run.force);

  mcl_report* r = nullptr;
  check(mcl_compare(pool.get(), rc.overrides.dump().c_str(), ratios.data(), ratios.size(), &r), "comparing");
  ReportPtr report(r);
  const std::string table = mcl_report_csv(report.get(), MCL_CSV_COMPARE);
  write_text(dir / "compare.csv", table);
  write_text(dir / "budget.csv", mcl_report_csv(report.get(), MCL_CSV_BUDGET));
  write_text(dir / "compare.json", std::string(mcl_report_json(report.get())) + "\n");
  write_manifest(dir, "compare", rc, {a.pool}, {"compare.csv", "budget.csv", "compare.json"}, argv);
  std::cout << table;
  return kExitOk;
}

struct EvalArgs {
  RunOptions run;
  std::string pool;
  std::string checkpoint;
  bool untrained = false;
  double holdout = 0.2;
  std::optional<std::string> out_dir;
};

ModelPtr model_for(const EvalArgs& a, std::size_t d_raw, const ResolvedConfig& rc) {
  if (a.untrained) {
    mcl_model* m = nullptr;
    check(mcl_model_init(d_raw, rc.overrides.dump().c_str(), &m), "initializing encoder");
    return ModelPtr(m);
  }
  if (a.checkpoint.empty()) usage_error("--checkpoint is required (or pass --untrained)");
  return load_model(a.checkpoint);
}

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
  const ResolvedConfig rc = resolve_config(a.run, json::object());
  PoolPtr pool = load_pool(a.pool);
  ModelPtr model = model_for(a, mcl_pool_dim(pool.get()), rc);
  mcl_report* r = nullptr;
  check(mcl_evaluate(model.get(), pool.get(), a.holdout, &r), "evaluating");
  ReportPtr report(r);
  const std::string text = mcl_report_json(report.get());
  if (a.out_dir) {
    const fs::path dir = *a.out_dir;
    prepare_output_dir(dir, a.run.force);
    write_text(dir / "eval.json", text + "\n");
    write_text(dir / "eval.csv", mcl_report_csv(report.get(), MCL_CSV_METRICS));
    std::vector<std::string> inputs{a.pool};
    if (!a.untrained) inputs.push_back(a.checkpoint);
    write_manifest(dir, "eval", rc, inputs, {"eval.json", "eval.csv"}, argv);
  }
  std::cout << text << "\n";
  return kExitOk;
}

int cmd_dump(const EvalArgs& a, const std::string& out, bool force) {
  if (fs::exists(out) && !force) usage_error(out + " exists (use --force to overwrite)");
  const ResolvedConfig rc = resolve_config(a.run, json::object());
  PoolPtr pool = load_pool(a.pool);
  ModelPtr model = model_for(a, mcl_pool_dim(pool.get()), rc);
  mcl_pool* e = nullptr;
  check(mcl_model_embed(model.get(), pool.get(), &e), "embedding");
  PoolPtr emb(e);
  check(mcl_pool_write(emb.get(), out.c_str()), "writing " + out);
  std::cout << "wrote " << mcl_pool_size(emb.get()) << " embeddings of dimension " << mcl_pool_dim(emb.get())
            << " to " << out << "\n";
  return kExitOk;
}

struct ProfileArgs {
  RunOptions run;
  std::string pool;
  std::vector<double> ratios{1.0, 0.5};
  std::size_t repeats = 3;
};

int cmd_profile(const ProfileArgs& a, const std::vector<std::string>& argv) {
  const std::vector<double> ratios = parse_ratios(a.ratios);
  const ResolvedConfig rc = resolve_config(a.run, json::object());
  PoolPtr pool = load_pool(a.pool);
  const fs::path dir = a.run.out_dir;
  prepare_output_dir(dir, a.run.force);
  mcl_report* r = nullptr;
  check(mcl_profile(pool.get(), rc.overrides.dump().c_str(), ratios.data(), ratios.size(), a.repeats, &r),
        "profiling");
  ReportPtr report(r);
  const std::string table = mcl_report_csv(report.get(), MCL_CSV_COST);
  write_text(dir / "profile.csv", table);
  write_text(dir / "profile.json", std::string(mcl_report_json(report.get())) + "\n");
  write_manifest(dir, "profile", rc, {a.pool}, {"profile.csv", "profile.json"}, argv);
  std::cout << table;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Meta clustering learning: training, comparison and evaluation on feature pools"};
  app.require_subcommand(1);
  app.set_version_flag("--version", mcl_version());

  GenArgs gen;
  mcl_gen_spec_default(&gen.spec);
  auto* g = app.add_subcommand("gen", "Generate a synthetic labelled feature pool");
  g->add_option("--ids", gen.spec.num_identities, "Number of identities")->capture_default_str();
  g->add_option("--per-id", gen.spec.samples_per_identity, "Samples per identity")->capture_default_str();
  g->add_option("--dim", gen.spec.d_raw, "Feature dimension")->capture_default_str();
  g->add_option("--sigma", gen.spec.intra_class_sigma, "Expected norm of the per-sample noise")
      ->capture_default_str();
  g->add_option("--nuisance-rank", gen.spec.nuisance_rank, "Rank of the shared nuisance subspace")
      ->capture_default_str();
  g->add_option("--nuisance-sigma", gen.spec.nuisance_sigma, "Expected norm of the nuisance component")
      ->capture_default_str();
  g->add_option("--seed", gen.spec.seed, "Generator seed (falls back to MCL_SEED)");
  g->add_option("-o,--out", gen.out, "Output file (.mclf, or .csv)")->required();
  g->add_flag("--force", gen.force, "Overwrite an existing file");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train an encoder on a pool and report per-epoch metrics");
  t->add_option("pool", train.pool, "Feature pool")->required()->check(CLI::ExistingFile);
  t->add_option("--regime", train.regime, "mcl, all or naive")
      ->check(CLI::IsMember({"mcl", "all", "naive"}));
  t->add_option("--split-ratio", train.split_ratio, "Subset ratio r; N = round(1/r)")
      ->check(CLI::Range(0.0, 1.0));
  t->add_flag("--fixed-split", train.fixed_split, "Reuse the epoch-0 split every epoch");
  t->add_flag("--shared-label-space", train.shared_label_space, "Let phase-2 identities span subsets");
  t->add_flag("--no-sc", train.no_sc, "Drop the siamese consistency term");
  t->add_flag("--plain-triplet", train.plain_triplet, "Unweighted triplet loss");
  t->add_flag("--no-proto-renorm", train.no_proto_renorm, "Skip prototype renormalization");
  add_run_options(t, train.run);

  CompareArgs compare;
  auto* c = app.add_subcommand("compare", "Run all, mcl and naive at several split ratios");
  c->add_option("pool", compare.pool, "Feature pool")->required()->check(CLI::ExistingFile);
  c->add_option("--ratios", compare.ratios, "Split ratios")->delimiter(',')->capture_default_str();
  add_run_options(c, compare.run);
  compare.run.out_dir = "compare";

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Retrieval metrics of a checkpoint on held-out identities");
  e->add_option("pool", eval.pool, "Feature pool with labels")->required()->check(CLI::ExistingFile);
  auto* eval_ckpt = e->add_option("--checkpoint", eval.checkpoint, "Model checkpoint");
  e->add_flag("--untrained", eval.untrained, "Evaluate the identity-initialized encoder")->excludes(eval_ckpt);
  e->add_option("--holdout", eval.holdout, "Held-out identity fraction (1 = every identity)")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  e->add_option("--config", eval.run.config_path, "JSON configuration (encoder shape for --untrained)")
      ->check(CLI::ExistingFile);
  e->add_option("--seed", eval.run.seed, "Seed for --untrained");
  e->add_option("-o,--out", eval.out_dir, "Also write eval.json, eval.csv and a manifest here");
  e->add_flag("--force", eval.run.force, "Overwrite an existing output directory");

  EvalArgs dump;
  std::string dump_out;
  bool dump_force = false;
  auto* d = app.add_subcommand("dump-embeddings", "Write the embedding of every sample as an MCLF file");
  d->add_option("pool", dump.pool, "Feature pool")->required()->check(CLI::ExistingFile);
  auto* dump_ckpt = d->add_option("--checkpoint", dump.checkpoint, "Model checkpoint");
  d->add_flag("--untrained", dump.untrained, "Use the identity-initialized encoder")->excludes(dump_ckpt);
  d->add_option("--config", dump.run.config_path, "JSON configuration (encoder shape for --untrained)")
      ->check(CLI::ExistingFile);
  d->add_option("--seed", dump.run.seed, "Seed for --untrained");
  d->add_option("-o,--out", dump_out, "Output file")->required();
  d->add_flag("--force", dump_force, "Overwrite an existing file");

  ProfileArgs profile;
  auto* p = app.add_subcommand("profile", "Time one clustering pass per split ratio");
  p->add_option("pool", profile.pool, "Feature pool")->required()->check(CLI::ExistingFile);
  p->add_option("--ratios", profile.ratios, "Split ratios")->delimiter(',')->capture_default_str();
  p->add_option("--repeats", profile.repeats, "Timed repeats; the median is reported")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  add_run_options(p, profile.run);
  profile.run.out_dir = "profile";

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (g->parsed()) {
      if (g->count("--seed") == 0) {
        const SeedChoice s = resolve_seed(std::nullopt, json::object());
        if (s.value) gen.spec.seed = *s.value;
      }
      return cmd_gen(gen);
    }
    if (t->parsed()) return cmd_train(train, args);
    if (c->parsed()) return cmd_compare(compare, args);
    if (e->parsed()) return cmd_eval(eval, args);
    if (d->parsed()) return cmd_dump(dump, dump_out, dump_force);
    if (p->parsed()) return cmd_profile(profile, args);
  } catch (const CliFailure& f) {
    std::cerr << "mcl: " << f.message << "\n";
    return f.exit_code;
  } catch (const std::exception& ex) {
    std::cerr << "mcl: " << ex.what() << "\n";
    return kExitOther;
  }
  return kExitUsage;
}
