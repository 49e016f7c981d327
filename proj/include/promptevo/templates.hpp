#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace pevo {

class TemplateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string load_text_file(const std::string& path);

// Replaces every {identifier} with its value in a single pass. Values are
// inserted verbatim, never rescanned, so braces inside them are inert. An
// {identifier} absent from the map is an error: no placeholder may survive
// substitution. Braces not forming {identifier} pass through untouched.
std::string substitute(const std::string& tmpl,
                       const std::map<std::string, std::string>& values);

// Collects <START>...<END> spans left to right, non-overlapping; an opener
// without a closer is discarded.
std::vector<std::string> parse_tagged_spans(const std::string& text);

std::string render_tagged_spans(const std::vector<std::string>& spans);

}  // namespace pevo
