#include "mcl/mcl.h"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>

#include "core/data.hpp"
#include "core/error.hpp"
#include "core/experiment.hpp"
#include "core/metrics.hpp"
#include "core/model.hpp"
#include "core/trainer.hpp"

struct mcl_pool {
  mcl::Pool pool;
};

struct mcl_model {
  mcl::EncoderParams params;
  std::optional<mcl::PrototypeBank> bank;
};

struct mcl_report {
  std::string json;
  std::string csv[4];
};

namespace {

thread_local std::string g_last_error;

mcl_status to_status(mcl::ErrorCode code) {
  using mcl::ErrorCode;
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return MCL_ERR_INVALID_ARGUMENT;
    case ErrorCode::kIo:
      return MCL_ERR_IO;
    case ErrorCode::kBadMagic:
      return MCL_ERR_BAD_MAGIC;
    case ErrorCode::kUnsupportedVersion:
      return MCL_ERR_UNSUPPORTED_VERSION;
    case ErrorCode::kTruncated:
      return MCL_ERR_TRUNCATED;
    case ErrorCode::kDimensionMismatch:
      return MCL_ERR_DIMENSION_MISMATCH;
    case ErrorCode::kNoClusters:
      return MCL_ERR_NO_CLUSTERS;
    case ErrorCode::kDegenerateEmbedding:
      return MCL_ERR_DEGENERATE_EMBEDDING;
    case ErrorCode::kNumeric:
      return MCL_ERR_NUMERIC;
    case ErrorCode::kState:
      return MCL_ERR_STATE;
  }
  return MCL_ERR_INTERNAL;
}

template <typename Fn>
mcl_status guarded(Fn&& fn) {
  try {
    fn();
    return MCL_OK;
  } catch (const mcl::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = std::string("invalid JSON: ") + e.what();
    return MCL_ERR_INVALID_ARGUMENT;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return MCL_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MCL_ERR_INTERNAL;
  }
}

void require_handle(const void* p, const char* what) {
  if (!p) mcl::fail(mcl::ErrorCode::kInvalidArgument, std::string(what) + " must not be NULL");
}

mcl::ExperimentConfig parse_config(const char* config_json) {
  if (!config_json || !*config_json) return {};
  return mcl::config_from_json(nlohmann::json::parse(config_json));
}

mcl::Pool embeddings_as_pool(const mcl::EncoderParams& params, const mcl::Pool& pool) {
  std::vector<std::size_t> rows(pool.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const mcl::Matrix emb = mcl::embed_rows(params, pool, rows);
  mcl::Pool out;
  out.d_raw = static_cast<std::size_t>(emb.cols());
  out.features.resize(static_cast<std::size_t>(emb.size()));
  for (Eigen::Index i = 0; i < emb.size(); ++i) out.features[static_cast<std::size_t>(i)] = static_cast<float>(emb.data()[i]);
  out.identities = pool.identities;
  out.num_identities = pool.num_identities;
  return out;
}

}  // namespace

extern "C" {

const char* mcl_version(void) { return "1.0.0"; }

const char* mcl_last_error(void) { return g_last_error.c_str(); }

const char* mcl_status_name(mcl_status status) {
  switch (status) {
    case MCL_OK:
      return "ok";
    case MCL_ERR_INVALID_ARGUMENT:
      return "invalid argument";
    case MCL_ERR_IO:
      return "i/o error";
    case MCL_ERR_BAD_MAGIC:
      return "bad magic";
    case MCL_ERR_UNSUPPORTED_VERSION:
      return "unsupported version";
    case MCL_ERR_TRUNCATED:
      return "truncated";
    case MCL_ERR_DIMENSION_MISMATCH:
      return "dimension mismatch";
    case MCL_ERR_NO_CLUSTERS:
      return "no clusters";
    case MCL_ERR_DEGENERATE_EMBEDDING:
      return "degenerate embedding";
    case MCL_ERR_NUMERIC:
      return "numeric failure";
    case MCL_ERR_STATE:
      return "invalid state";
    case MCL_ERR_INTERNAL:
      return "internal error";
  }
  return "unknown";
}

void mcl_gen_spec_default(mcl_gen_spec* spec) {
  if (!spec) return;
  const mcl::GenSpec d;
  spec->num_identities = static_cast<uint32_t>(d.num_identities);
  spec->samples_per_identity = static_cast<uint32_t>(d.samples_per_identity);
  spec->d_raw = static_cast<uint32_t>(d.d_raw);
  spec->intra_class_sigma = d.intra_class_sigma;
  spec->nuisance_rank = static_cast<uint32_t>(d.nuisance_rank);
  spec->nuisance_sigma = d.nuisance_sigma;
  spec->seed = d.seed;
}

mcl_status mcl_pool_generate(const mcl_gen_spec* spec, mcl_pool** out) {
  return guarded([&] {
    require_handle(spec, "spec");
    require_handle(out, "out");
    mcl::GenSpec g;
    g.num_identities = spec->num_identities;
    g.samples_per_identity = spec->samples_per_identity;
    g.d_raw = spec->d_raw;
    g.intra_class_sigma = spec->intra_class_sigma;
    g.nuisance_rank = spec->nuisance_rank;
    g.nuisance_sigma = spec->nuisance_sigma;
    g.seed = spec->seed;
    *out = new mcl_pool{mcl::generate_pool(g)};
  });
}

mcl_status mcl_pool_read(const char* path, mcl_pool** out) {
  return guarded([&] {
    require_handle(path, "path");
    require_handle(out, "out");
    *out = new mcl_pool{mcl::read_features(path)};
  });
}

mcl_status mcl_pool_write(const mcl_pool* pool, const char* path) {
  return guarded([&] {
    require_handle(pool, "pool");
    require_handle(path, "path");
    mcl::write_features(pool->pool, path);
  });
}

size_t mcl_pool_size(const mcl_pool* pool) { return pool ? pool->pool.size() : 0; }
size_t mcl_pool_dim(const mcl_pool* pool) { return pool ? pool->pool.d_raw : 0; }
size_t mcl_pool_num_identities(const mcl_pool* pool) { return pool ? pool->pool.num_identities : 0; }

mcl_status mcl_pool_row(const mcl_pool* pool, size_t i, float* out, size_t len) {
  return guarded([&] {
    require_handle(pool, "pool");
    require_handle(out, "out");
    mcl::require(i < pool->pool.size(), "row index out of range");
    if (len != pool->pool.d_raw) mcl::fail(mcl::ErrorCode::kDimensionMismatch, "buffer length does not match pool dimension");
    auto row = pool->pool.row(i);
    std::memcpy(out, row.data(), len * sizeof(float));
  });
}

void mcl_pool_free(mcl_pool* pool) { delete pool; }

mcl_status mcl_config_resolve(const char* config_json, char** out_json) {
  return guarded([&] {
    require_handle(out_json, "out_json");
    const std::string text = mcl::config_to_json(parse_config(config_json)).dump(2);
    char* buf = new char[text.size() + 1];
    std::memcpy(buf, text.c_str(), text.size() + 1);
    *out_json = buf;
  });
}

void mcl_string_free(char* s) { delete[] s; }

mcl_status mcl_content_hash(const char* path, char out[41]) {
  return guarded([&] {
    require_handle(path, "path");
    require_handle(out, "out");
    std::ifstream in(path, std::ios::binary);
    if (!in) mcl::fail(mcl::ErrorCode::kIo, std::string("cannot open ") + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string hex = mcl::git_blob_sha1(buf.str());
    std::memcpy(out, hex.c_str(), 41);
  });
}

mcl_status mcl_train(const mcl_pool* pool, const char* config_json, mcl_model** out_model, mcl_report** out_report) {
  return guarded([&] {
    require_handle(pool, "pool");
    require_handle(out_model, "out_model");
    const mcl::ExperimentConfig config = parse_config(config_json);
    mcl::RunResult run = mcl::run_experiment(pool->pool, config);
    auto report = std::make_unique<mcl_report>();
    report->json = mcl::report_to_json(run.report).dump(2);
    report->csv[MCL_CSV_METRICS] = mcl::metrics_csv(run.report);
    report->csv[MCL_CSV_COST] = mcl::cost_csv(run.report);
    *out_model = new mcl_model{std::move(run.train.params), std::move(run.train.bank)};
    if (out_report) *out_report = report.release();
  });
}

mcl_status mcl_model_init(size_t d_raw, const char* config_json, mcl_model** out) {
  return guarded([&] {
    require_handle(out, "out");
    const mcl::TrainConfig t = parse_config(config_json).train;
    *out = new mcl_model{mcl::EncoderParams::identity_init(d_raw, t.d_hidden, t.d_emb, t.seed, t.init_jitter), {}};
  });
}

mcl_status mcl_model_save(const mcl_model* model, const char* path) {
  return guarded([&] {
    require_handle(model, "model");
    require_handle(path, "path");
    auto sections = mcl::params_to_sections(model->params);
    if (model->bank) {
      const auto& W = model->bank->W;
      sections.push_back({"bank.W", static_cast<std::size_t>(W.rows()), static_cast<std::size_t>(W.cols()),
                          std::vector<double>(W.data(), W.data() + W.size())});
    }
    mcl::write_sections(path, sections);
  });
}

mcl_status mcl_model_load(const char* path, mcl_model** out) {
  return guarded([&] {
    require_handle(path, "path");
    require_handle(out, "out");
    const auto sections = mcl::read_sections(path);
    auto model = std::make_unique<mcl_model>();
    model->params = mcl::params_from_sections(sections);
    for (const auto& s : sections) {
      if (s.name != "bank.W") continue;
      mcl::PrototypeBank bank;
      bank.W = mcl::Matrix(static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.cols));
      if (!s.values.empty()) std::memcpy(bank.W.data(), s.values.data(), s.values.size() * sizeof(double));
      model->bank = std::move(bank);
    }
    *out = model.release();
  });
}

size_t mcl_model_input_dim(const mcl_model* model) { return model ? model->params.d_raw() : 0; }
size_t mcl_model_embedding_dim(const mcl_model* model) { return model ? model->params.d_emb() : 0; }
void mcl_model_free(mcl_model* model) { delete model; }

mcl_status mcl_model_embed(const mcl_model* model, const mcl_pool* pool, mcl_pool** out) {
  return guarded([&] {
    require_handle(model, "model");
    require_handle(pool, "pool");
    require_handle(out, "out");
    if (model->params.d_raw() != pool->pool.d_raw)
      mcl::fail(mcl::ErrorCode::kDimensionMismatch, "pool dimension does not match the model input");
    *out = new mcl_pool{embeddings_as_pool(model->params, pool->pool)};
  });
}

mcl_status mcl_evaluate(const mcl_model* model, const mcl_pool* pool, double holdout_fraction, mcl_report** out) {
  return guarded([&] {
    require_handle(model, "model");
    require_handle(pool, "pool");
    require_handle(out, "out");
    if (model->params.d_raw() != pool->pool.d_raw)
      mcl::fail(mcl::ErrorCode::kDimensionMismatch, "pool dimension does not match the model input");
    const mcl::RetrievalMetrics m = mcl::evaluate_params(model->params, pool->pool, holdout_fraction);
    auto report = std::make_unique<mcl_report>();
    report->json = nlohmann::json{{"holdout_fraction", holdout_fraction},
                                  {"mAP", m.mAP},
                                  {"rank1", m.rank(1)},
                                  {"rank5", m.rank(5)},
                                  {"rank10", m.rank(10)},
                                  {"cmc", m.cmc}}
                       .dump(2);
    std::ostringstream csv;
    csv << std::setprecision(10) << "mAP,rank1,rank5,rank10\n"
        << m.mAP << ',' << m.rank(1) << ',' << m.rank(5) << ',' << m.rank(10) << '\n';
    report->csv[MCL_CSV_METRICS] = csv.str();
    *out = report.release();
  });
}

mcl_status mcl_compare(const mcl_pool* pool, const char* config_json, const double* ratios, size_t ratio_count,
                       mcl_report** out) {
  return guarded([&] {
    require_handle(pool, "pool");
    require_handle(out, "out");
    if (ratio_count > 0) require_handle(ratios, "ratios");
    const mcl::ExperimentConfig config = parse_config(config_json);
    const std::vector<double> rs(ratios, ratios + ratio_count);
    const mcl::CompareResult result = mcl::compare_regimes(pool->pool, config, rs);
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < result.rows.size(); ++i) {
      const auto& r = result.rows[i];
      rows.push_back({{"scheme", r.scheme},
                      {"ratio", r.ratio},
                      {"splits", r.splits},
                      {"mAP", r.mAP},
                      {"rank1", r.rank1},
                      {"entries", r.entries},
                      {"peak_bytes", r.peak_bytes},
                      {"seconds", r.seconds},
                      {"report", mcl::report_to_json(result.reports[i])}});
    }
    auto report = std::make_unique<mcl_report>();
    report->json = nlohmann::json{{"config", mcl::config_to_json(config)}, {"schemes", rows}}.dump(2);
    report->csv[MCL_CSV_COMPARE] = mcl::compare_csv(result);
    report->csv[MCL_CSV_BUDGET] = mcl::budget_csv(result);
    *out = report.release();
  });
}

mcl_status mcl_profile(const mcl_pool* pool, const char* config_json, const double* ratios, size_t ratio_count,
                       size_t repeats, mcl_report** out) {
  return guarded([&] {
    require_handle(pool, "pool");
    require_handle(out, "out");
    mcl::require(ratio_count > 0 && ratios, "at least one ratio is required");
    const mcl::TrainConfig t = parse_config(config_json).train;
    const auto params =
        mcl::EncoderParams::identity_init(pool->pool.d_raw, t.d_hidden, t.d_emb, t.seed, t.init_jitter);
    nlohmann::json rows = nlohmann::json::array();
    std::ostringstream csv;
    csv << std::setprecision(10) << "ratio,n_points,entries,peak_bytes,seconds,entry_ratio,time_ratio\n";
    double base_entries = 0.0, base_seconds = 0.0;
    for (size_t i = 0; i < ratio_count; ++i) {
      const std::size_t N = mcl::splits_from_ratio(ratios[i]);
      const auto rows_idx = mcl::epoch_split(pool->pool.size(), N, 0, t.seed).subset(0);
      const mcl::Matrix emb = mcl::embed_rows(params, pool->pool, rows_idx);
      const mcl::CostProfile c = mcl::profile_clustering(emb, t.clustering, repeats);
      if (i == 0) base_entries = static_cast<double>(c.distance_entries), base_seconds = c.wall_seconds;
      const double er = static_cast<double>(c.distance_entries) / base_entries;
      const double tr = base_seconds > 0.0 ? c.wall_seconds / base_seconds : 0.0;
      rows.push_back({{"ratio", ratios[i]},
                      {"n_points", c.n_points},
                      {"entries", c.distance_entries},
                      {"peak_bytes", c.peak_bytes},
                      {"seconds", c.wall_seconds},
                      {"run_seconds", c.run_seconds},
                      {"entry_ratio", er},
                      {"time_ratio", tr}});
      csv << ratios[i] << ',' << c.n_points << ',' << c.distance_entries << ',' << c.peak_bytes << ','
          << c.wall_seconds << ',' << er << ',' << tr << '\n';
    }
    auto report = std::make_unique<mcl_report>();
    report->json = nlohmann::json{{"profiles", rows}}.dump(2);
    report->csv[MCL_CSV_COST] = csv.str();
    *out = report.release();
  });
}

const char* mcl_report_json(const mcl_report* report) { return report ? report->json.c_str() : ""; }

const char* mcl_report_csv(const mcl_report* report, mcl_csv_kind kind) {
  if (!report || kind < MCL_CSV_METRICS || kind > MCL_CSV_BUDGET) return "";
  return report->csv[kind].c_str();
}

void mcl_report_free(mcl_report* report) { delete report; }

}  // extern "C"
