#include "promptevo/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace pevo {

using json = nlohmann::ordered_json;

namespace {

json gradient_to_json(const TextualGradient& g) {
  json j;
  j["id"] = g.id;
  j["text"] = g.text;
  j["initial_weight"] = g.initial_weight;
  j["birth_iteration"] = g.birth_iteration;
  j["current_weight"] = g.current_weight;
  if (g.source_cluster.has_value()) {
    j["source_cluster"] = *g.source_cluster;
  } else {
    j["source_cluster"] = nullptr;
  }
  j["embedding"] = g.embedding;
  return j;
}

[[noreturn]] void schema_fail(const std::string& what) {
  throw CheckpointSchemaError("checkpoint schema violation: " + what);
}

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    schema_fail(std::string("missing field '") + key + "'");
  }
  return j.at(key);
}

std::string get_string(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_string()) schema_fail(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

std::int64_t get_int(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    schema_fail(std::string("field '") + key + "' must be an integer");
  }
  return v.get<std::int64_t>();
}

std::uint64_t get_uint(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    schema_fail(std::string("field '") + key + "' must be an integer");
  }
  return v.get<std::uint64_t>();
}

double get_double(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number()) schema_fail(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

const json& get_array(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_array()) schema_fail(std::string("field '") + key + "' must be an array");
  return v;
}

TextualGradient gradient_from_json(const json& j) {
  if (!j.is_object()) schema_fail("pool entry is not an object");
  TextualGradient g;
  g.id = get_string(j, "id");
  g.text = get_string(j, "text");
  g.initial_weight = get_double(j, "initial_weight");
  g.birth_iteration = static_cast<int>(get_int(j, "birth_iteration"));
  g.current_weight = get_double(j, "current_weight");
  const json& sc = field(j, "source_cluster");
  if (sc.is_null()) {
    g.source_cluster = std::nullopt;
  } else if (sc.is_number_integer() || sc.is_number_unsigned()) {
    g.source_cluster = sc.get<int>();
  } else {
    schema_fail("field 'source_cluster' must be an integer or null");
  }
  for (const auto& v : get_array(j, "embedding")) {
    if (!v.is_number()) schema_fail("field 'embedding' must hold numbers");
    g.embedding.push_back(v.get<double>());
  }
  return g;
}

}  // namespace

void save_checkpoint(const RunState& state, const std::string& path) {
  json j;
  j["version"] = kCheckpointVersion;
  j["iteration"] = state.iteration;
  j["beam"] = json::array();
  for (const auto& b : state.beam) {
    json e;
    e["prompt"] = b.prompt;
    e["score"] = b.score;
    j["beam"].push_back(std::move(e));
  }
  j["pool"] = json::array();
  for (const auto& g : state.pool) {
    j["pool"].push_back(gradient_to_json(g));
  }
  j["bandit_total"] = state.bandit_total;
  j["rng"] = json{{"root_seed", state.rng.root_seed}};
  j["best_prompt"] = state.best_prompt;
  j["best_score"] = state.best_score;

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw CheckpointIoError("cannot open checkpoint for writing: " + tmp);
    }
    out << j.dump(2) << '\n';
    out.flush();
    if (!out) {
      throw CheckpointIoError("failed writing checkpoint: " + tmp);
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw CheckpointIoError("failed to move checkpoint into place: " + path +
                            " (" + ec.message() + ")");
  }
}

RunState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CheckpointIoError("cannot open checkpoint: " + path);
  }
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (in.bad()) {
    throw CheckpointIoError("failed reading checkpoint: " + path);
  }

  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    schema_fail("not a valid JSON object: " + path);
  }

  const std::int64_t version = get_int(j, "version");
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("unsupported checkpoint version " +
                                 std::to_string(version) + " (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
  }

  RunState state;
  state.iteration = static_cast<int>(get_int(j, "iteration"));
  for (const json& e : get_array(j, "beam")) {
    if (!e.is_object()) schema_fail("beam entry is not an object");
    BeamEntry b;
    b.prompt = get_string(e, "prompt");
    b.score = get_double(e, "score");
    state.beam.push_back(std::move(b));
  }
  for (const json& e : get_array(j, "pool")) {
    state.pool.push_back(gradient_from_json(e));
  }
  state.bandit_total = get_int(j, "bandit_total");
  const json& rng = field(j, "rng");
  if (!rng.is_object()) schema_fail("field 'rng' must be an object");
  state.rng.root_seed = get_uint(rng, "root_seed");
  state.best_prompt = get_string(j, "best_prompt");
  state.best_score = get_double(j, "best_score");
  return state;
}

}  // namespace pevo
