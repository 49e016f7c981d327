#include "promptevo/templates.hpp"

#include <cctype>
#include <fstream>

namespace pevo {

std::string load_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw TemplateError("cannot open template file: " + path);
  }
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (in.bad()) {
    throw TemplateError("failed reading template file: " + path);
  }
  return text;
}

std::string substitute(const std::string& tmpl,
                       const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    const char c = tmpl[i];
    if (c != '{') {
      out.push_back(c);
      ++i;
      continue;
    }
    // try to read {identifier}
    std::size_t j = i + 1;
    if (j < tmpl.size() &&
        (std::isalpha(static_cast<unsigned char>(tmpl[j])) || tmpl[j] == '_')) {
      ++j;
      while (j < tmpl.size() &&
             (std::isalnum(static_cast<unsigned char>(tmpl[j])) ||
              tmpl[j] == '_')) {
        ++j;
      }
      if (j < tmpl.size() && tmpl[j] == '}') {
        const std::string name = tmpl.substr(i + 1, j - i - 1);
        const auto it = values.find(name);
        if (it == values.end()) {
          throw TemplateError("unresolved template placeholder {" + name + "}");
        }
        out += it->second;
        i = j + 1;
        continue;
      }
    }
    out.push_back(c);
    ++i;
  }
  return out;
}

std::vector<std::string> parse_tagged_spans(const std::string& text) {
  static const std::string open = "<START>";
  static const std::string close = "<END>";
  std::vector<std::string> spans;
  std::size_t pos = 0;
  while (true) {
    const auto s = text.find(open, pos);
    if (s == std::string::npos) break;
    const auto e = text.find(close, s + open.size());
    if (e == std::string::npos) break;  // unclosed span: discarded
    spans.push_back(text.substr(s + open.size(), e - s - open.size()));
    pos = e + close.size();
  }
  return spans;
}

std::string render_tagged_spans(const std::vector<std::string>& spans) {
  std::string out;
  for (const auto& s : spans) {
    out += "<START>";
    out += s;
    out += "<END>\n";
  }
  return out;
}

}  // namespace pevo
