/*
 * Copyright 2026 The collgraph Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *  http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "collgraph/errors.hpp"

namespace collgraph::xml {

/// Minimal element tree. Text content is ignored; only markup matters for
/// the algorithm files this reader is used on.
struct Element {
  std::string name;
  std::vector<std::pair<std::string, std::string>> attrs;
  std::vector<Element> children;
  std::size_t line = 0;

  const std::string* attr(std::string_view key) const {
    for (const auto& [k, v] : attrs)
      if (k == key) return &v;
    return nullptr;
  }
};

namespace detail {

class Reader {
 public:
  explicit Reader(std::string_view text) : text_(text) {}

  Element document() {
    skip_misc();
    if (eof()) fail("document has no root element");
    Element root = element();
    skip_misc();
    if (!eof()) fail("content after root element");
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw XmlError(what + " at line " + std::to_string(line_));
  }

  bool eof() const { return pos_ >= text_.size(); }
  char peek() const { return eof() ? '\0' : text_[pos_]; }
  bool starts_with(std::string_view s) const { return text_.substr(pos_, s.size()) == s; }

  void advance(std::size_t n = 1) {
    for (std::size_t i = 0; i < n && !eof(); ++i)
      if (text_[pos_++] == '\n') ++line_;
  }

  void skip_ws() {
    while (!eof() && std::isspace(static_cast<unsigned char>(peek()))) advance();
  }

  void skip_until(std::string_view terminator, const char* what) {
    while (!eof() && !starts_with(terminator)) advance();
    if (eof()) fail(std::string("unterminated ") + what);
    advance(terminator.size());
  }

  // Whitespace, comments, processing instructions and doctype between elements.
  void skip_misc() {
    for (;;) {
      skip_ws();
      if (starts_with("<!--")) {
        skip_until("-->", "comment");
      } else if (starts_with("<?")) {
        skip_until("?>", "processing instruction");
      } else if (starts_with("<!")) {
        skip_until(">", "declaration");
      } else {
        return;
      }
    }
  }

  static bool name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' ||
           c == ':';
  }

  std::string name() {
    std::size_t start = pos_;
    while (!eof() && name_char(peek())) advance();
    if (pos_ == start) fail("expected a name");
    return std::string(text_.substr(start, pos_ - start));
  }

  std::string unescape(std::string_view raw) {
    std::string out;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] != '&') {
        out += raw[i];
        continue;
      }
      auto end = raw.find(';', i);
      if (end == std::string_view::npos) fail("unterminated entity");
      auto ent = raw.substr(i + 1, end - i - 1);
      if (ent == "amp") out += '&';
      else if (ent == "lt") out += '<';
      else if (ent == "gt") out += '>';
      else if (ent == "quot") out += '"';
      else if (ent == "apos") out += '\'';
      else fail("unknown entity &" + std::string(ent) + ";");
      i = end;
    }
    return out;
  }

  Element element() {
    if (peek() != '<') fail("expected '<'");
    Element el;
    el.line = line_;
    advance();
    el.name = name();
    for (;;) {
      skip_ws();
      if (starts_with("/>")) {
        advance(2);
        return el;
      }
      if (peek() == '>') {
        advance();
        break;
      }
      if (eof()) fail("unterminated <" + el.name + ">");
      std::string key = name();
      skip_ws();
      if (peek() != '=') fail("expected '=' after attribute " + key);
      advance();
      skip_ws();
      const char quote = peek();
      if (quote != '"' && quote != '\'') fail("expected quoted value for attribute " + key);
      advance();
      std::size_t start = pos_;
      while (!eof() && peek() != quote) advance();
      if (eof()) fail("unterminated value for attribute " + key);
      std::string value = unescape(text_.substr(start, pos_ - start));
      advance();
      if (el.attr(key)) fail("duplicate attribute " + key + " on <" + el.name + ">");
      el.attrs.emplace_back(std::move(key), std::move(value));
    }
    for (;;) {
      while (!eof() && peek() != '<') advance();  // text content is ignored
      if (eof()) fail("unterminated <" + el.name + ">");
      if (starts_with("</")) {
        advance(2);
        std::string closing = name();
        if (closing != el.name) fail("mismatched </" + closing + ">, expected </" + el.name + ">");
        skip_ws();
        if (peek() != '>') fail("expected '>'");
        advance();
        return el;
      }
      if (starts_with("<!--") || starts_with("<?")) {
        skip_misc();
        continue;
      }
      el.children.push_back(element());
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

}  // namespace detail

inline Element parse(std::string_view text) { return detail::Reader(text).document(); }

}  // namespace collgraph::xml
