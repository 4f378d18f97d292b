#include "gem/reader.hpp"

#include <cctype>

#include "gem/error.hpp"

namespace gem {

namespace {

constexpr std::string_view kSymbolChars = "+-*/\\^<>=~:.?@#&$";

bool is_symbol_char(char c) { return kSymbolChars.find(c) != std::string_view::npos; }

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

struct Infix {
  int priority;
  int left_max;
  int right_max;
};

std::optional<Infix> infix(const std::string& name) {
  if (name == ":-") return Infix{1200, 1199, 1199};
  if (name == ";") return Infix{1100, 1099, 1100};
  if (name == ",") return Infix{1000, 999, 1000};
  if (name == "=" || name == "\\=" || name == "is" || name == "<" || name == ">" ||
      name == "=<" || name == ">=" || name == "=:=" || name == "=\\=")
    return Infix{700, 699, 699};
  if (name == "+" || name == "-") return Infix{500, 500, 499};
  if (name == "*" || name == "/" || name == "//" || name == "mod") return Infix{400, 400, 399};
  return std::nullopt;
}

}  // namespace

TermReader::TermReader(std::string_view text) : text_(text) {}

int TermReader::line() const { return ahead_ ? ahead_->line : line_; }
int TermReader::column() const { return ahead_ ? ahead_->col : col_; }

void TermReader::fail(const Token& at, const std::string& what) const {
  throw Error(ErrorCode::Syntax, "syntax error at line " + std::to_string(at.line) + ", column " +
                                     std::to_string(at.col) + ": " + what);
}

TermReader::Token TermReader::lex() {
  Token t;
  auto advance = [&]() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  };
  // layout and comments
  for (;;) {
    if (pos_ >= text_.size()) break;
    char c = text_[pos_];
    if (std::isspace(static_cast<unsigned char>(c))) {
      t.layout_before = true;
      advance();
    } else if (c == '%') {
      t.layout_before = true;
      while (pos_ < text_.size() && text_[pos_] != '\n') advance();
    } else if (c == '/' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '*') {
      t.layout_before = true;
      advance();
      advance();
      while (pos_ < text_.size() && !(text_[pos_] == '*' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '/'))
        advance();
      if (pos_ < text_.size()) {
        advance();
        advance();
      }
    } else {
      break;
    }
  }
  t.line = line_;
  t.col = col_;
  if (pos_ >= text_.size()) {
    t.kind = Tok::Eof;
    return t;
  }
  char c = text_[pos_];
  if (std::isdigit(static_cast<unsigned char>(c))) {
    size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) advance();
    if (pos_ + 1 < text_.size() && text_[pos_] == '.' && std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])))
      fail(t, "floating-point numbers are not terms of the object language");
    t.kind = Tok::Int;
    t.text = std::string(text_.substr(start, pos_ - start));
    try {
      t.value = std::stoll(t.text);
    } catch (const std::out_of_range&) {
      fail(t, "integer out of range: " + t.text);
    }
    return t;
  }
  if (std::islower(static_cast<unsigned char>(c))) {
    size_t start = pos_;
    while (pos_ < text_.size() && is_alnum(text_[pos_])) advance();
    t.kind = Tok::Atom;
    t.text = std::string(text_.substr(start, pos_ - start));
    return t;
  }
  if (std::isupper(static_cast<unsigned char>(c)) || c == '_') {
    size_t start = pos_;
    while (pos_ < text_.size() && is_alnum(text_[pos_])) advance();
    t.kind = Tok::Var;
    t.text = std::string(text_.substr(start, pos_ - start));
    return t;
  }
  if (c == '\'') {
    advance();
    std::string s;
    for (;;) {
      if (pos_ >= text_.size()) fail(t, "unterminated quoted atom");
      char q = text_[pos_];
      if (q == '\\' && pos_ + 1 < text_.size()) {
        advance();
        s.push_back(text_[pos_]);
        advance();
      } else if (q == '\'') {
        advance();
        if (pos_ < text_.size() && text_[pos_] == '\'') {
          s.push_back('\'');
          advance();
        } else {
          break;
        }
      } else {
        s.push_back(q);
        advance();
      }
    }
    t.kind = Tok::Atom;
    t.quoted = true;
    t.text = std::move(s);
    return t;
  }
  if (c == '(' || c == ')' || c == '[' || c == ']' || c == ',' || c == '|' || c == '{' || c == '}') {
    t.kind = Tok::Punct;
    t.text = std::string(1, c);
    advance();
    return t;
  }
  if (c == '!' || c == ';') {
    t.kind = Tok::Atom;
    t.text = std::string(1, c);
    advance();
    return t;
  }
  if (is_symbol_char(c)) {
    if (c == '.' && (pos_ + 1 >= text_.size() || std::isspace(static_cast<unsigned char>(text_[pos_ + 1])) ||
                     text_[pos_ + 1] == '%')) {
      advance();
      t.kind = Tok::End;
      t.text = ".";
      return t;
    }
    size_t start = pos_;
    while (pos_ < text_.size() && is_symbol_char(text_[pos_])) advance();
    t.kind = Tok::Atom;
    t.text = std::string(text_.substr(start, pos_ - start));
    return t;
  }
  fail(t, std::string("unexpected character '") + c + "'");
}

const TermReader::Token& TermReader::peek() {
  if (!ahead_) ahead_ = lex();
  return *ahead_;
}

TermReader::Token TermReader::take() {
  Token t = peek();
  ahead_.reset();
  return t;
}

bool TermReader::at_end() { return peek().kind == Tok::Eof; }

void TermReader::reset_variables() {
  vars_.clear();
}

Term TermReader::make_var(const std::string& name) {
  if (name == "_") return Term::var("_G" + std::to_string(++anon_));
  auto it = vars_.find(name);
  if (it != vars_.end()) return it->second;
  Term v = Term::var(name);
  vars_.emplace(name, v);
  return v;
}

bool TermReader::starts_term(const Token& t) const {
  switch (t.kind) {
    case Tok::Atom:
    case Tok::Var:
    case Tok::Int:
      return true;
    case Tok::Punct:
      return t.text == "(" || t.text == "[";
    default:
      return false;
  }
}

std::optional<Term> TermReader::next_clause() {
  if (at_end()) return std::nullopt;
  reset_variables();
  clause_line_ = peek().line;
  Term t = parse(1200);
  Token end = take();
  if (end.kind != Tok::End) fail(end, "expected '.' at end of clause, got '" + end.text + "'");
  return t;
}

Term TermReader::read_term() { return parse(999); }

Term TermReader::parse_arglist(const std::string& functor) {
  take();  // (
  std::vector<Term> args;
  for (;;) {
    args.push_back(parse(999));
    Token t = take();
    if (t.kind == Tok::Punct && t.text == ",") continue;
    if (t.kind == Tok::Punct && t.text == ")") break;
    fail(t, "expected ',' or ')' in arguments of " + functor);
  }
  return Term::compound(functor, std::move(args));
}

Term TermReader::parse_list() {
  // '[' already consumed
  if (peek().kind == Tok::Punct && peek().text == "]") {
    take();
    return Term::nil();
  }
  std::vector<Term> items;
  std::optional<Term> tail;
  for (;;) {
    items.push_back(parse(999));
    Token t = take();
    if (t.kind == Tok::Punct && t.text == ",") continue;
    if (t.kind == Tok::Punct && t.text == "|") {
      tail = parse(999);
      Token close = take();
      if (!(close.kind == Tok::Punct && close.text == "]")) fail(close, "expected ']' after list tail");
      break;
    }
    if (t.kind == Tok::Punct && t.text == "]") break;
    fail(t, "expected ',', '|' or ']' in list");
  }
  return Term::list(items, tail);
}

Term TermReader::parse_primary(int max_priority, int& priority) {
  priority = 0;
  Token t = take();
  switch (t.kind) {
    case Tok::Int:
      return Term::integer(t.value);
    case Tok::Var:
      return make_var(t.text);
    case Tok::Punct:
      if (t.text == "(") {
        Term inner = parse(1200);
        Token close = take();
        if (!(close.kind == Tok::Punct && close.text == ")")) fail(close, "expected ')'");
        return inner;
      }
      if (t.text == "[") {
        Term l = parse_list();
        if (peek().kind == Tok::Punct && peek().text == "(" && !peek().layout_before && l.is_nil())
          return parse_arglist("[]");
        return l;
      }
      fail(t, "unexpected '" + t.text + "'");
    case Tok::Atom: {
      const Token& next = peek();
      if (next.kind == Tok::Punct && next.text == "(" && !next.layout_before) return parse_arglist(t.text);
      if (!t.quoted && t.text == "-" && next.kind == Tok::Int && !next.layout_before) {
        Token n = take();
        return Term::integer(-n.value);
      }
      bool next_is_infix = next.kind == Tok::Atom && !next.quoted && infix(next.text).has_value();
      if (!t.quoted && (t.text == "-" || t.text == ":-" || t.text == "table") && starts_term(next) && !next_is_infix) {
        int op_priority = t.text == "-" ? 200 : t.text == "table" ? 1150 : 1200;
        int arg_max = op_priority == 200 ? 200 : op_priority - 1;
        if (op_priority <= max_priority) {
          Term arg = parse(arg_max);
          priority = op_priority;
          return Term::compound(t.text, {arg});
        }
      }
      return Term::constant(t.text);
    }
    case Tok::End:
      fail(t, "unexpected end of clause");
    case Tok::Eof:
      fail(t, "unexpected end of input");
  }
  fail(t, "unexpected token");
}

Term TermReader::parse(int max_priority) {
  int left_priority = 0;
  Term left = parse_primary(max_priority, left_priority);
  for (;;) {
    const Token& t = peek();
    std::string name;
    if (t.kind == Tok::Atom && !t.quoted) {
      name = t.text;
    } else if (t.kind == Tok::Punct && t.text == ",") {
      name = ",";
    } else {
      break;
    }
    auto op = infix(name);
    if (!op || op->priority > max_priority || left_priority > op->left_max) break;
    take();
    Term right = parse(op->right_max);
    left = Term::compound(name, {left, right});
    left_priority = op->priority;
  }
  return left;
}

Term parse_term(std::string_view text) {
  std::string buf(text);
  while (!buf.empty() && std::isspace(static_cast<unsigned char>(buf.back()))) buf.pop_back();
  if (buf.empty() || buf.back() != '.') buf += " .";
  else buf += "\n";
  TermReader reader(buf);
  auto t = reader.next_clause();
  if (!t) throw Error(ErrorCode::Syntax, "empty term");
  if (!reader.at_end()) throw Error(ErrorCode::Syntax, "trailing input after term");
  return *t;
}

}  // namespace gem
