#include <string>

#include "doctest.h"
#include "json.hpp"
#include "promptevo/checkpoint.hpp"
#include "test_util.hpp"

using namespace pevo;
using testutil::make_clean_dir;
using testutil::slurp;
using testutil::spit;

namespace {

RunState sample_state() {
  RunState state;
  state.iteration = 3;
  state.beam = {BeamEntry{"lead prompt", 0.8125}, BeamEntry{"runner", 0.75}};

  TextualGradient g0;
  g0.id = "t2-c0-g0";
  g0.text = "tighten the output format";
  g0.initial_weight = 1.0;
  g0.birth_iteration = 2;
  g0.current_weight = 0.9;
  g0.source_cluster = 2;
  g0.embedding = {0.6, -0.8};

  TextualGradient g1;
  g1.id = "t3-c1-g0";
  g1.text = "name the unit in the answer";
  g1.initial_weight = 1.0;
  g1.birth_iteration = 3;
  g1.current_weight = 1.0;
  g1.source_cluster = std::nullopt;
  // embedding deliberately left uncached

  state.pool = {g0, g1};
  state.bandit_total = 77;
  state.rng.root_seed = 0xfffffffffffffffeull;  // near the uint64 ceiling
  state.best_prompt = "lead prompt";
  state.best_score = 0.8125;
  return state;
}

}  // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("state round trips exactly, cached embeddings included") {
  const auto dir = make_clean_dir("checkpoint_roundtrip");
  const std::string path = (dir / "checkpoint.json").string();
  const RunState state = sample_state();

  save_checkpoint(state, path);
  const RunState loaded = load_checkpoint(path);
  CHECK(loaded == state);
  CHECK(loaded.pool[0].embedding == std::vector<double>{0.6, -0.8});
  CHECK(loaded.pool[1].embedding.empty());
  CHECK(loaded.pool[1].source_cluster == std::nullopt);
}

TEST_CASE("saving the same state twice produces identical bytes") {
  const auto dir = make_clean_dir("checkpoint_bytes");
  const RunState state = sample_state();
  const std::string a = (dir / "a.json").string();
  const std::string b = (dir / "b.json").string();
  save_checkpoint(state, a);
  save_checkpoint(state, b);
  CHECK(slurp(a) == slurp(b));
}

TEST_CASE("save leaves no temp file behind") {
  const auto dir = make_clean_dir("checkpoint_tmp");
  const std::string path = (dir / "checkpoint.json").string();
  save_checkpoint(sample_state(), path);
  CHECK(std::filesystem::exists(path));
  CHECK_FALSE(std::filesystem::exists(path + ".tmp"));
}

TEST_CASE("missing file reads as an io error") {
  const auto dir = make_clean_dir("checkpoint_missing");
  CHECK_THROWS_AS(load_checkpoint((dir / "absent.json").string()),
                  CheckpointIoError);
}

TEST_CASE("unsupported version is rejected as such") {
  const auto dir = make_clean_dir("checkpoint_version");
  const std::string path = (dir / "checkpoint.json").string();
  save_checkpoint(sample_state(), path);

  auto doc = nlohmann::ordered_json::parse(slurp(path));
  doc["version"] = kCheckpointVersion + 1;
  spit(path, doc.dump(2));
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointVersionError);
}

TEST_CASE("malformed json is a schema error") {
  const auto dir = make_clean_dir("checkpoint_malformed");
  const std::string path = (dir / "checkpoint.json").string();
  spit(path, "{ this is not json");
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointSchemaError);
  spit(path, "[1, 2, 3]");
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointSchemaError);
}

TEST_CASE("missing required fields are schema errors") {
  const auto dir = make_clean_dir("checkpoint_fields");
  const std::string path = (dir / "checkpoint.json").string();
  save_checkpoint(sample_state(), path);
  const auto base = nlohmann::ordered_json::parse(slurp(path));

  for (const char* key : {"version", "iteration", "beam", "pool",
                          "bandit_total", "rng", "best_prompt", "best_score"}) {
    auto doc = base;
    doc.erase(key);
    spit(path, doc.dump());
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointSchemaError);
  }
}

TEST_CASE("wrong field types are schema errors") {
  const auto dir = make_clean_dir("checkpoint_types");
  const std::string path = (dir / "checkpoint.json").string();
  save_checkpoint(sample_state(), path);
  const auto base = nlohmann::ordered_json::parse(slurp(path));

  auto doc = base;
  doc["iteration"] = "3";
  spit(path, doc.dump());
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointSchemaError);

  doc = base;
  doc["beam"] = 5;
  spit(path, doc.dump());
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointSchemaError);

  doc = base;
  doc["pool"][0]["source_cluster"] = "two";
  spit(path, doc.dump());
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointSchemaError);

  doc = base;
  doc["pool"][0]["embedding"] = {"x"};
  spit(path, doc.dump());
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointSchemaError);

  doc = base;
  doc["rng"] = 42;
  spit(path, doc.dump());
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointSchemaError);
}

TEST_CASE("truncated file is a schema error, never partial state") {
  const auto dir = make_clean_dir("checkpoint_truncated");
  const std::string path = (dir / "checkpoint.json").string();
  save_checkpoint(sample_state(), path);
  const std::string full = slurp(path);
  spit(path, full.substr(0, full.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointSchemaError);
}

}  // TEST_SUITE
