#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace synth::html {

// Index-based DOM. Node 0 is the document root; text nodes have an empty tag.
struct Node {
  std::string tag;
  std::vector<std::pair<std::string, std::string>> attrs;
  std::string text;
  int parent = -1;
  std::vector<int> children;

  bool is_text() const { return tag.empty(); }
  const std::string* attr(std::string_view name) const;
};

class Document {
 public:
  const Node& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  int size() const { return static_cast<int>(nodes_.size()); }
  static constexpr int root() { return 0; }

  // Pre-order walk; returning false from `visit` skips that node's subtree.
  void walk(int from, const std::function<bool(int)>& visit) const;
  std::vector<int> find_all(std::string_view tag) const;
  // Concatenated descendant text with whitespace collapsed.
  std::string text_of(int i) const;
  bool has_ancestor(int i, std::string_view tag) const;

 private:
  friend Document parse(std::string_view);
  std::vector<Node> nodes_;
};

// Tolerant parser: never fails; unknown or mismatched end tags are ignored,
// implied end tags are inserted for p/li/td/tr/option, script and style are
// raw text.
Document parse(std::string_view html);

// Decodes character references (named subset, decimal, hex).
std::string decode_entities(std::string_view s);

// Converts document bytes to UTF-8 using a BOM, the declared charset
// (HTTP header value or <meta charset>), or a windows-1252 fallback when the
// bytes are not valid UTF-8.
std::string to_utf8(std::string_view bytes, std::string_view content_type = {});

bool is_valid_utf8(std::string_view s);

}  // namespace synth::html
