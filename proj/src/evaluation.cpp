#include "promptevo/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "json.hpp"

namespace pevo {

namespace {

using json = nlohmann::json;

[[noreturn]] void line_fail(const std::string& path, std::size_t line_no,
                            const std::string& what) {
  throw DatasetError(path + ": line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

std::vector<Example> load_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DatasetError("cannot open dataset file: " + path);
  }

  std::vector<Example> examples;
  std::set<std::string> seen_ids;
  std::string line;
  std::size_t index = 0;  // zero-based; synthesized ids use this
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) {
      continue;  // blank lines are tolerated
    }
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      line_fail(path, line_no, "not a JSON object");
    }

    Example ex;
    if (j.contains("id")) {
      if (j.at("id").is_string()) {
        ex.id = j.at("id").get<std::string>();
      } else if (j.at("id").is_number_integer() || j.at("id").is_number_unsigned()) {
        ex.id = std::to_string(j.at("id").get<std::int64_t>());
      } else {
        line_fail(path, line_no, "field 'id' must be a string or integer");
      }
    } else {
      ex.id = std::to_string(index);
    }
    if (!j.contains("query") || !j.at("query").is_string()) {
      line_fail(path, line_no, "missing or non-string field 'query'");
    }
    ex.query = j.at("query").get<std::string>();
    if (ex.query.empty()) {
      line_fail(path, line_no, "field 'query' must be non-empty");
    }
    if (!j.contains("answer") || !j.at("answer").is_string()) {
      line_fail(path, line_no, "missing or non-string field 'answer'");
    }
    ex.answer = j.at("answer").get<std::string>();
    if (j.contains("metadata")) {
      if (!j.at("metadata").is_object()) {
        line_fail(path, line_no, "field 'metadata' must be an object");
      }
      for (const auto& [k, v] : j.at("metadata").items()) {
        if (v.is_string()) {
          ex.metadata[k] = v.get<std::string>();
        } else {
          ex.metadata[k] = v.dump();
        }
      }
    }

    if (!seen_ids.insert(ex.id).second) {
      line_fail(path, line_no, "duplicate example id '" + ex.id + "'");
    }
    examples.push_back(std::move(ex));
    ++index;
  }
  if (in.bad()) {
    throw DatasetError("failed reading dataset file: " + path);
  }
  return examples;
}

std::string normalize_answer(std::string s) {
  // trim
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  s = s.substr(first, last - first + 1);

  // case-fold and collapse whitespace runs
  std::string out;
  out.reserve(s.size());
  bool in_space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      in_space = true;
      continue;
    }
    if (in_space) {
      out.push_back(' ');
      in_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }

  if (!out.empty() && out.back() == '.') {
    out.pop_back();
  }
  return out;
}

namespace {

std::string last_nonempty_line(const std::string& text) {
  std::size_t end = text.size();
  while (end > 0) {
    std::size_t start = text.rfind('\n', end - 1);
    const std::size_t line_start = (start == std::string::npos) ? 0 : start + 1;
    std::string line = text.substr(line_start, end - line_start);
    if (line.find_first_not_of(" \t\r\n\f\v") != std::string::npos) {
      return line;
    }
    if (start == std::string::npos) break;
    end = start;
  }
  return "";
}

std::string last_tag_content(const std::string& text) {
  static const std::string open = "<answer>";
  static const std::string close = "</answer>";
  const auto open_at = text.rfind(open);
  if (open_at == std::string::npos) return "";
  const auto close_at = text.find(close, open_at + open.size());
  if (close_at == std::string::npos) return "";
  return text.substr(open_at + open.size(), close_at - open_at - open.size());
}

std::string last_regex_match(const std::string& text, const std::string& pattern) {
  try {
    const std::regex re(pattern);
    std::string found;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), re);
         it != std::sregex_iterator(); ++it) {
      const std::smatch& m = *it;
      found = (m.size() > 1 && m[1].matched) ? m[1].str() : m[0].str();
    }
    return found;
  } catch (const std::regex_error&) {
    return "";
  }
}

// Last token shaped like a number, with commas, "$", and "%" tolerated.
// Returned as (sign, integer digits, fraction digits) with zeros trimmed.
struct DecimalValue {
  bool ok = false;
  bool negative = false;
  std::string int_part;
  std::string frac_part;

  bool operator==(const DecimalValue&) const = default;
};

DecimalValue parse_last_number(const std::string& text) {
  DecimalValue best;
  std::size_t i = 0;
  while (i < text.size()) {
    const unsigned char c = text[i];
    if (!std::isdigit(c) &&
        !((c == '-' || c == '+' || c == '.') && i + 1 < text.size() &&
          std::isdigit(static_cast<unsigned char>(text[i + 1])))) {
      ++i;
      continue;
    }
    DecimalValue v;
    v.ok = true;
    if (c == '-' || c == '+') {
      v.negative = (c == '-');
      ++i;
    }
    bool in_frac = (text[i] == '.');
    if (in_frac) ++i;
    while (i < text.size()) {
      const unsigned char d = text[i];
      if (std::isdigit(d)) {
        (in_frac ? v.frac_part : v.int_part).push_back(static_cast<char>(d));
        ++i;
      } else if (!in_frac && d == ',' && i + 1 < text.size() &&
                 std::isdigit(static_cast<unsigned char>(text[i + 1]))) {
        ++i;  // thousands separator
      } else if (!in_frac && d == '.' && i + 1 < text.size() &&
                 std::isdigit(static_cast<unsigned char>(text[i + 1]))) {
        in_frac = true;
        ++i;
      } else {
        break;
      }
    }
    if (!v.int_part.empty() || !v.frac_part.empty()) {
      best = std::move(v);
    }
  }
  if (!best.ok) return best;

  // canonicalize: strip leading integer zeros and trailing fraction zeros
  const auto nz = best.int_part.find_first_not_of('0');
  best.int_part = (nz == std::string::npos) ? "" : best.int_part.substr(nz);
  while (!best.frac_part.empty() && best.frac_part.back() == '0') {
    best.frac_part.pop_back();
  }
  if (best.int_part.empty() && best.frac_part.empty()) {
    best.negative = false;  // zero has no sign
    best.int_part = "0";
  } else if (best.int_part.empty()) {
    best.int_part = "0";
  }
  return best;
}

}  // namespace

std::string extract_answer(const std::string& raw_output,
                           const DatasetSpec& spec) {
  std::string piece;
  switch (spec.extraction) {
    case DatasetSpec::Extraction::last_line:
      piece = last_nonempty_line(raw_output);
      break;
    case DatasetSpec::Extraction::tag:
      piece = last_tag_content(raw_output);
      break;
    case DatasetSpec::Extraction::regex:
      piece = last_regex_match(raw_output, spec.pattern);
      break;
  }
  return normalize_answer(std::move(piece));
}

int score_em(const std::string& extracted, const std::string& gold) {
  return normalize_answer(extracted) == normalize_answer(gold) ? 1 : 0;
}

int score_numeric(const std::string& extracted, const std::string& gold) {
  const DecimalValue a = parse_last_number(extracted);
  const DecimalValue b = parse_last_number(gold);
  if (!a.ok || !b.ok) return 0;
  return a == b ? 1 : 0;
}

namespace {

double f1_for_positive(const std::vector<std::string>& predictions,
                       const std::vector<std::string>& golds,
                       const std::string& positive) {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool pred_pos = normalize_answer(predictions[i]) == positive;
    const bool gold_pos = normalize_answer(golds[i]) == positive;
    if (pred_pos && gold_pos) ++tp;
    if (pred_pos && !gold_pos) ++fp;
    if (!pred_pos && gold_pos) ++fn;
  }
  const double precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  const double recall = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

double f1_binary(const std::vector<std::string>& predictions,
                 const std::vector<std::string>& golds,
                 const std::string& positive_label) {
  if (predictions.size() != golds.size()) {
    throw std::invalid_argument("f1_binary: length mismatch");
  }
  return f1_for_positive(predictions, golds, normalize_answer(positive_label));
}

double f1_macro(const std::vector<std::string>& predictions,
                const std::vector<std::string>& golds,
                const std::string& positive_label,
                const std::string& negative_label) {
  if (predictions.size() != golds.size()) {
    throw std::invalid_argument("f1_macro: length mismatch");
  }
  const double pos = f1_for_positive(predictions, golds, normalize_answer(positive_label));
  const double neg = f1_for_positive(predictions, golds, normalize_answer(negative_label));
  return 0.5 * (pos + neg);
}

Prediction grade(const Example& example, const std::string& raw_output,
                 const DatasetSpec& spec) {
  Prediction pred;
  pred.example_id = example.id;
  pred.raw_output = raw_output;
  pred.extracted_answer = extract_answer(raw_output, spec);
  int point = 0;
  switch (spec.answer_mode) {
    case DatasetSpec::AnswerMode::exact_match:
    case DatasetSpec::AnswerMode::binary_label:
      point = score_em(pred.extracted_answer, example.answer);
      break;
    case DatasetSpec::AnswerMode::numeric_match:
      point = score_numeric(pred.extracted_answer, example.answer);
      break;
  }
  pred.score = static_cast<double>(point);
  pred.correct = point == 1;
  return pred;
}

double dataset_metric(const std::vector<Example>& examples,
                      const std::vector<Prediction>& predictions,
                      const DatasetSpec& spec) {
  if (examples.size() != predictions.size()) {
    throw std::invalid_argument("dataset_metric: length mismatch");
  }
  if (examples.empty()) {
    throw std::invalid_argument("dataset_metric: empty evaluation set");
  }
  if (spec.answer_mode == DatasetSpec::AnswerMode::binary_label) {
    std::vector<std::string> preds;
    std::vector<std::string> golds;
    preds.reserve(predictions.size());
    golds.reserve(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
      preds.push_back(predictions[i].extracted_answer);
      golds.push_back(examples[i].answer);
    }
    if (spec.macro_f1) {
      // the negative role is whatever gold label is not the positive one
      const std::string pos = normalize_answer(spec.positive_label);
      std::string neg;
      for (const auto& g : golds) {
        const std::string n = normalize_answer(g);
        if (n != pos) {
          neg = n;
          break;
        }
      }
      return f1_macro(preds, golds, spec.positive_label, neg);
    }
    return f1_binary(preds, golds, spec.positive_label);
  }
  double sum = 0.0;
  for (const auto& p : predictions) sum += p.score;
  return sum / static_cast<double>(predictions.size());
}

}  // namespace pevo
