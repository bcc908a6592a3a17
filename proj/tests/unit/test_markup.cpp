#include "doctest.h"

#include "synth/error.hpp"
#include "synth/html.hpp"
#include "synth/xml.hpp"

using namespace synth;

TEST_CASE("html parser builds a tolerant tree") {
  const auto doc = html::parse(
      "<!DOCTYPE html><html><head><title>A &amp; B</title><script>if (a<b) x='</p>';</script></head>"
      "<body><p>one<p>two <b>bold</b><br>three</div></p><ul><li>x<li>y</ul><img src=a.png>tail</body></html>");
  const auto ps = doc.find_all("p");
  REQUIRE(ps.size() == 2);
  CHECK(doc.text_of(ps[0]) == "one");
  CHECK(doc.text_of(ps[1]) == "two bold three");
  CHECK(doc.find_all("li").size() == 2);
  CHECK(doc.text_of(doc.find_all("title")[0]) == "A & B");
  CHECK(doc.node(doc.find_all("img")[0]).children.empty());
  CHECK(doc.text_of(doc.find_all("body")[0]).find("x='") == std::string::npos);
  CHECK(doc.has_ancestor(doc.find_all("b")[0], "p"));
}

TEST_CASE("entities and charsets") {
  CHECK(html::decode_entities("caf&eacute; &#8212; &#x41;&nbsp;&bogus;") == "café — A &bogus;");
  CHECK(html::decode_entities("&#150;") == "–");
  CHECK(html::to_utf8("caf\xe9", "text/html; charset=iso-8859-1") == "café");
  CHECK(html::to_utf8("caf\xe9") == "café");
  CHECK(html::to_utf8("\xef\xbb\xbfok") == "ok");
  CHECK(html::to_utf8("<meta charset=\"windows-1252\">\x93q\x94") == "<meta charset=\"windows-1252\">“q”");
  CHECK(html::is_valid_utf8("café"));
  CHECK_FALSE(html::is_valid_utf8("caf\xe9"));
}

TEST_CASE("xml parser is strict and reports offsets") {
  const auto root = xml::parse(R"(<?xml version="1.0"?><!-- c --><a x="1"><b:c>t&lt;<![CDATA[<raw>]]></b:c></a>)");
  CHECK(root.name == "a");
  CHECK(*root.attr("x") == "1");
  REQUIRE(root.child("c") != nullptr);
  CHECK(root.child("c")->name == "b:c");
  CHECK(root.child("c")->text == "t<<raw>");

  const std::string bad = "<a><b></a>";
  try {
    xml::parse(bad);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.position() == 6);
  }
  CHECK_THROWS_AS(xml::parse("<a>&amp</a>"), ParseError);
  CHECK_THROWS_AS(xml::parse("<a></a><b/>"), ParseError);
  CHECK_THROWS_AS(xml::parse(""), ParseError);
}
