#include "promptevo/embedding.hpp"

#include <cmath>

#include "json.hpp"
#include "promptevo/http_client.hpp"
#include "promptevo/rng.hpp"

namespace pevo {

namespace {

void l2_normalize(std::vector<double>& v, const std::string& fallback_text) {
  double norm_sq = 0.0;
  for (double x : v) norm_sq += x * x;
  if (norm_sq <= 0.0) {
    // degenerate cancellation; fall back to a deterministic unit vector
    std::fill(v.begin(), v.end(), 0.0);
    v[fnv1a64(fallback_text) % v.size()] = 1.0;
    return;
  }
  const double inv = 1.0 / std::sqrt(norm_sq);
  for (double& x : v) x *= inv;
}

}  // namespace

std::vector<std::vector<double>> Encoder::embed_batch(
    const std::vector<std::string>& texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed(t));
  return out;
}

FeatureHashEncoder::FeatureHashEncoder(const EncoderSpec& spec)
    : Encoder(spec.dimension),
      ngram_min_(spec.ngram_min),
      ngram_max_(spec.ngram_max) {
  if (spec.dimension < 1) {
    throw EncoderError("encoder dimension must be positive");
  }
  if (ngram_min_ < 1 || ngram_max_ < ngram_min_) {
    throw EncoderError("invalid n-gram range");
  }
}

std::vector<double> FeatureHashEncoder::embed(const std::string& text) {
  if (text.empty()) {
    throw EncoderError("cannot embed empty text");
  }
  std::vector<double> v(static_cast<std::size_t>(dimension_), 0.0);
  const std::size_t d = v.size();
  auto add_gram = [&](std::string_view gram) {
    const std::uint64_t h = fnv1a64(gram);
    const double sign = (h >> 63) ? -1.0 : 1.0;
    v[h % d] += sign;
  };
  bool any = false;
  const std::string_view sv(text);
  for (int n = ngram_min_; n <= ngram_max_; ++n) {
    if (sv.size() < static_cast<std::size_t>(n)) break;
    for (std::size_t i = 0; i + n <= sv.size(); ++i) {
      add_gram(sv.substr(i, static_cast<std::size_t>(n)));
      any = true;
    }
  }
  if (!any) {
    add_gram(sv);
  }
  l2_normalize(v, text);
  return v;
}

RemoteEncoder::RemoteEncoder(const EncoderSpec& spec)
    : Encoder(spec.dimension), spec_(spec) {
  if (spec.dimension < 1) {
    throw EncoderError("encoder dimension must be positive");
  }
  if (spec.endpoint.empty()) {
    throw EncoderError("remote encoder requires an endpoint");
  }
}

std::vector<double> RemoteEncoder::embed(const std::string& text) {
  return embed_batch({text}).front();
}

std::vector<std::vector<double>> RemoteEncoder::embed_batch(
    const std::vector<std::string>& texts) {
  if (texts.empty()) return {};
  for (const auto& t : texts) {
    if (t.empty()) throw EncoderError("cannot embed empty text");
  }

  nlohmann::json body;
  body["model"] = spec_.model_name;
  body["input"] = texts;

  RetryPolicy policy{spec_.retries, spec_.backoff_base_ms};
  const std::string reply = http_post_json_with_retries(
      spec_.endpoint, spec_.api_key_env, body.dump(), policy);

  nlohmann::json j = nlohmann::json::parse(reply, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("data") ||
      !j.at("data").is_array()) {
    throw EncoderError("embeddings response is not the expected shape");
  }
  const auto& data = j.at("data");
  if (data.size() != texts.size()) {
    throw EncoderError("embeddings response count mismatch: expected " +
                       std::to_string(texts.size()) + ", got " +
                       std::to_string(data.size()));
  }

  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& item = data.at(i);
    if (!item.is_object() || !item.contains("embedding") ||
        !item.at("embedding").is_array()) {
      throw EncoderError("embeddings response item missing 'embedding'");
    }
    std::vector<double> v = item.at("embedding").get<std::vector<double>>();
    if (static_cast<int>(v.size()) != dimension_) {
      throw EncoderError("embedding dimension mismatch: expected " +
                         std::to_string(dimension_) + ", got " +
                         std::to_string(v.size()));
    }
    l2_normalize(v, texts[i]);
    out.push_back(std::move(v));
  }
  return out;
}

std::unique_ptr<Encoder> make_encoder(const EncoderSpec& spec) {
  if (spec.kind == EncoderSpec::Kind::remote) {
    return std::make_unique<RemoteEncoder>(spec);
  }
  return std::make_unique<FeatureHashEncoder>(spec);
}

std::string instance_text(const Example& example, const Prediction& prediction) {
  return "Q: " + example.query + "\nA: " + example.answer +
         "\nR: " + prediction.raw_output;
}

EmbeddedInstance embed_instance(const Example& example,
                                const Prediction& prediction,
                                Encoder& encoder) {
  if (prediction.example_id != example.id) {
    throw std::invalid_argument("embed_instance: prediction belongs to example '" +
                                prediction.example_id + "', not '" + example.id +
                                "'");
  }
  EmbeddedInstance inst;
  inst.example_id = example.id;
  inst.embedding = encoder.embed(instance_text(example, prediction));
  inst.correct = prediction.correct;
  return inst;
}

std::vector<double> embed_text(const std::string& text, Encoder& encoder) {
  if (text.empty()) {
    throw EncoderError("cannot embed empty text");
  }
  return encoder.embed(text);
}

}  // namespace pevo
