#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace synth::xml {

struct Element {
  std::string name;        // qualified name as written, e.g. "dc:date"
  std::string local_name;  // without prefix
  std::vector<std::pair<std::string, std::string>> attrs;
  std::string text;  // concatenated character data of direct children
  std::vector<Element> children;

  const std::string* attr(std::string_view name) const;
  const Element* child(std::string_view local) const;
};

// Strict well-formedness parse of a single-rooted document. Throws
// synth::ParseError carrying the byte offset of the first violation.
Element parse(std::string_view doc);

}  // namespace synth::xml
