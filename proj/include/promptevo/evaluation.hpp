#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "promptevo/types.hpp"

namespace pevo {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetSpec {
  enum class Format { jsonl };
  enum class AnswerMode { exact_match, numeric_match, binary_label };
  enum class Extraction { last_line, tag, regex };

  std::string path;
  std::string test_path;  // optional second pre-split file
  Format format = Format::jsonl;
  AnswerMode answer_mode = AnswerMode::exact_match;
  std::string positive_label;  // binary_label only
  Extraction extraction = Extraction::last_line;
  std::string pattern;  // regex extraction only
  bool macro_f1 = false;
  double eval_fraction = 0.25;
};

// One JSON object per line: {id?, query, answer, metadata?}. Order preserved;
// missing ids become the zero-based line index; duplicates and malformed
// lines are rejected with the (one-based) line number named.
std::vector<Example> load_jsonl(const std::string& path);

inline std::vector<Example> load_dataset(const DatasetSpec& spec) {
  return load_jsonl(spec.path);
}

// trim, ASCII case-fold, collapse whitespace runs, strip one trailing period
std::string normalize_answer(std::string s);

// Total on any input: extraction misses yield "" rather than throwing.
std::string extract_answer(const std::string& raw_output,
                           const DatasetSpec& spec);

// String equality after normalizing both sides.
int score_em(const std::string& extracted, const std::string& gold);

// Compares the last number token of each side as exact decimals, tolerating
// commas, "$", and "%" ("0042" == "42", "1,234" == "1234"). Unparseable
// sides score 0.
int score_numeric(const std::string& extracted, const std::string& gold);

// Positive-class F1. Zero-denominator precision/recall terms read 0, and a
// both-zero F1 reads 0.
double f1_binary(const std::vector<std::string>& predictions,
                 const std::vector<std::string>& golds,
                 const std::string& positive_label);

// Unweighted mean of the per-class F1 over both label roles.
double f1_macro(const std::vector<std::string>& predictions,
                const std::vector<std::string>& golds,
                const std::string& positive_label,
                const std::string& negative_label);

// Fills extraction, per-item score, and correctness for one raw completion.
Prediction grade(const Example& example, const std::string& raw_output,
                 const DatasetSpec& spec);

// Aggregate metric for aligned examples/predictions: mean item score for the
// match modes, F1 over extracted labels for binary_label.
double dataset_metric(const std::vector<Example>& examples,
                      const std::vector<Prediction>& predictions,
                      const DatasetSpec& spec);

}  // namespace pevo
