// Exercises the shared library through its C header only.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <mcl/mcl.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "support/scratch.hpp"

namespace {

mcl_pool* small_pool(uint64_t seed = 5) {
  mcl_gen_spec s;
  mcl_gen_spec_default(&s);
  s.num_identities = 8;
  s.samples_per_identity = 10;
  s.d_raw = 8;
  s.intra_class_sigma = 0.2;
  s.seed = seed;
  mcl_pool* p = nullptr;
  REQUIRE(mcl_pool_generate(&s, &p) == MCL_OK);
  return p;
}

const char* kSmallConfig =
    R"({"epochs":2,"warmup_epochs":1,"P":4,"I":4,"P2":4,"I2":4,"k":5,"d_hidden":8,"d_emb":8,"holdout_fraction":0.25})";

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::strlen(mcl_version()) > 0);
  CHECK(std::string(mcl_status_name(MCL_OK)) == "ok");
  CHECK(std::string(mcl_status_name(MCL_ERR_TRUNCATED)) == "truncated");
}

TEST_CASE("null arguments fail with a message") {
  mcl_pool* p = nullptr;
  CHECK(mcl_pool_generate(nullptr, &p) == MCL_ERR_INVALID_ARGUMENT);
  CHECK(std::strlen(mcl_last_error()) > 0);
  CHECK(mcl_pool_read(nullptr, &p) == MCL_ERR_INVALID_ARGUMENT);
  mcl_pool_free(nullptr);
  mcl_model_free(nullptr);
  mcl_report_free(nullptr);
}

TEST_CASE("pool accessors and file round trip") {
  ScratchDir dir;
  mcl_pool* p = small_pool();
  CHECK(mcl_pool_size(p) == 80);
  CHECK(mcl_pool_dim(p) == 8);
  CHECK(mcl_pool_num_identities(p) == 8);
  std::vector<float> row(8), again(8);
  CHECK(mcl_pool_row(p, 3, row.data(), row.size()) == MCL_OK);
  CHECK(mcl_pool_row(p, 3, row.data(), 7) == MCL_ERR_DIMENSION_MISMATCH);
  CHECK(mcl_pool_row(p, 80, row.data(), 8) == MCL_ERR_INVALID_ARGUMENT);
  const std::string path = (dir / "p.mclf").string();
  REQUIRE(mcl_pool_write(p, path.c_str()) == MCL_OK);
  mcl_pool* q = nullptr;
  REQUIRE(mcl_pool_read(path.c_str(), &q) == MCL_OK);
  CHECK(mcl_pool_row(q, 3, again.data(), 8) == MCL_OK);
  CHECK(row == again);
  char h1[41], h2[41];
  CHECK(mcl_content_hash(path.c_str(), h1) == MCL_OK);
  const std::string path2 = (dir / "q.mclf").string();
  REQUIRE(mcl_pool_write(q, path2.c_str()) == MCL_OK);
  CHECK(mcl_content_hash(path2.c_str(), h2) == MCL_OK);
  CHECK(std::string(h1) == std::string(h2));
  CHECK(std::strlen(h1) == 40);
  mcl_pool_free(p);
  mcl_pool_free(q);
}

TEST_CASE("file errors map to distinct codes") {
  ScratchDir dir;
  mcl_pool* p = nullptr;
  CHECK(mcl_pool_read((dir / "missing.mclf").string().c_str(), &p) == MCL_ERR_IO);
  {
    std::ofstream f(dir / "junk.mclf", std::ios::binary);
    f << "NOPE0000000000000000000000000000";
  }
  CHECK(mcl_pool_read((dir / "junk.mclf").string().c_str(), &p) == MCL_ERR_BAD_MAGIC);
  CHECK(p == nullptr);
}

TEST_CASE("config resolution") {
  char* out = nullptr;
  REQUIRE(mcl_config_resolve(R"({"split_ratio":0.5})", &out) == MCL_OK);
  CHECK(std::string(out).find("\"splits\": 2") != std::string::npos);
  mcl_string_free(out);
  CHECK(mcl_config_resolve(R"({"bogus":1})", &out) == MCL_ERR_INVALID_ARGUMENT);
  CHECK(mcl_config_resolve("{not json", &out) == MCL_ERR_INVALID_ARGUMENT);
  REQUIRE(mcl_config_resolve(nullptr, &out) == MCL_OK);
  mcl_string_free(out);
}

TEST_CASE("train, save, load, embed, evaluate") {
  ScratchDir dir;
  mcl_pool* p = small_pool();
  mcl_model* m = nullptr;
  mcl_report* r = nullptr;
  REQUIRE(mcl_train(p, kSmallConfig, &m, &r) == MCL_OK);
  CHECK(std::string(mcl_report_json(r)).find("\"epochs\"") != std::string::npos);
  CHECK(std::string(mcl_report_csv(r, MCL_CSV_METRICS)).rfind("epoch,", 0) == 0);
  CHECK(std::string(mcl_report_csv(r, MCL_CSV_COMPARE)).empty());
  CHECK(mcl_model_input_dim(m) == 8);
  CHECK(mcl_model_embedding_dim(m) == 8);

  const std::string ck = (dir / "m.mclk").string();
  REQUIRE(mcl_model_save(m, ck.c_str()) == MCL_OK);
  mcl_model* loaded = nullptr;
  REQUIRE(mcl_model_load(ck.c_str(), &loaded) == MCL_OK);

  mcl_pool *e1 = nullptr, *e2 = nullptr;
  REQUIRE(mcl_model_embed(m, p, &e1) == MCL_OK);
  REQUIRE(mcl_model_embed(loaded, p, &e2) == MCL_OK);
  CHECK(mcl_pool_size(e1) == 80);
  std::vector<float> a(8), b(8);
  for (size_t i = 0; i < 80; i += 7) {
    mcl_pool_row(e1, i, a.data(), 8);
    mcl_pool_row(e2, i, b.data(), 8);
    CHECK(a == b);
  }

  mcl_report *v1 = nullptr, *v2 = nullptr;
  REQUIRE(mcl_evaluate(m, p, 0.25, &v1) == MCL_OK);
  REQUIRE(mcl_evaluate(loaded, p, 0.25, &v2) == MCL_OK);
  CHECK(std::string(mcl_report_json(v1)) == std::string(mcl_report_json(v2)));

  mcl_gen_spec s;
  mcl_gen_spec_default(&s);
  s.num_identities = 4;
  s.samples_per_identity = 3;
  s.d_raw = 6;
  s.seed = 1;
  mcl_pool* wrong = nullptr;
  REQUIRE(mcl_pool_generate(&s, &wrong) == MCL_OK);
  mcl_pool* e3 = nullptr;
  CHECK(mcl_model_embed(m, wrong, &e3) == MCL_ERR_DIMENSION_MISMATCH);

  for (auto* x : {v1, v2, r}) mcl_report_free(x);
  for (auto* x : {e1, e2, p, wrong}) mcl_pool_free(x);
  mcl_model_free(m);
  mcl_model_free(loaded);
}

TEST_CASE("compare and profile tables") {
  mcl_pool* p = small_pool(9);
  const double ratios[] = {1.0, 0.5};
  mcl_report* r = nullptr;
  REQUIRE(mcl_compare(p, kSmallConfig, ratios, 2, &r) == MCL_OK);
  const std::string cmp = mcl_report_csv(r, MCL_CSV_COMPARE);
  CHECK(cmp.rfind("scheme,", 0) == 0);
  CHECK(std::count(cmp.begin(), cmp.end(), '\n') == 4);
  mcl_report_free(r);
  REQUIRE(mcl_profile(p, kSmallConfig, ratios, 2, 1, &r) == MCL_OK);
  CHECK(std::string(mcl_report_json(r)).size() > 2);
  mcl_report_free(r);
  mcl_pool_free(p);
}
