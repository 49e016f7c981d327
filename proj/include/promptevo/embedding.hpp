#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "promptevo/types.hpp"

namespace pevo {

struct EncoderSpec {
  enum class Kind { feature_hash, remote };

  Kind kind = Kind::feature_hash;
  int dimension = 64;
  int ngram_min = 2;
  int ngram_max = 4;
  // remote only
  std::string endpoint;
  std::string model_name;
  std::string api_key_env;
  int retries = 3;
  int backoff_base_ms = 500;
};

class EncoderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Embeddings are a pure function of (text, spec): same text, same vector,
// and every returned vector has unit L2 norm.
class Encoder {
 public:
  virtual ~Encoder() = default;

  virtual std::vector<double> embed(const std::string& text) = 0;

  // element-wise by default; remote impls batch the transport
  virtual std::vector<std::vector<double>> embed_batch(
      const std::vector<std::string>& texts);

  int dimension() const { return dimension_; }

 protected:
  explicit Encoder(int dimension) : dimension_(dimension) {}

  int dimension_;
};

// Offline encoder: character n-gram counts hashed into `dimension` buckets by
// FNV-1a, bucket sign taken from the hash's top bit, then L2 normalized.
// Texts shorter than ngram_min contribute the whole text as a single gram.
class FeatureHashEncoder : public Encoder {
 public:
  explicit FeatureHashEncoder(const EncoderSpec& spec);

  std::vector<double> embed(const std::string& text) override;

 private:
  int ngram_min_;
  int ngram_max_;
};

// Talks to an embeddings endpoint: POST {model, input: [...]} and expects
// {data: [{embedding: [...]}]}. Vectors are re-normalized locally.
class RemoteEncoder : public Encoder {
 public:
  explicit RemoteEncoder(const EncoderSpec& spec);

  std::vector<double> embed(const std::string& text) override;
  std::vector<std::vector<double>> embed_batch(
      const std::vector<std::string>& texts) override;

 private:
  EncoderSpec spec_;
};

std::unique_ptr<Encoder> make_encoder(const EncoderSpec& spec);

// Layout for instance embedding; prediction must belong to the example.
std::string instance_text(const Example& example, const Prediction& prediction);

EmbeddedInstance embed_instance(const Example& example,
                                const Prediction& prediction, Encoder& encoder);

std::vector<double> embed_text(const std::string& text, Encoder& encoder);

}  // namespace pevo
