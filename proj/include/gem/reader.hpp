#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gem/term.hpp"

namespace gem {

/// Reads Prolog-style terms from text.
///
/// Operators: `:-` (1200, prefix and infix), prefix `table` (1150), `;` (1100), `,` (1000),
/// comparison and `is` (700), `+ -` (500), `* / // mod` (400), prefix `-`.
/// Variable names are shared within one clause; each `_` is a fresh variable.
class TermReader {
 public:
  explicit TermReader(std::string_view text);

  /// Next `.`-terminated clause, or nullopt at end of input.
  std::optional<Term> next_clause();

  /// One term (priority <= 999) without the terminating period. Variables
  /// are shared across calls until `reset_variables()`.
  Term read_term();

  [[nodiscard]] bool at_end();
  void reset_variables();

  /// 1-based position of the next unread token.
  [[nodiscard]] int line() const;
  [[nodiscard]] int column() const;

  /// Source line of the first token of the last clause returned.
  [[nodiscard]] int clause_line() const { return clause_line_; }

 private:
  enum class Tok { Atom, Var, Int, Punct, End, Eof };
  struct Token {
    Tok kind = Tok::Eof;
    std::string text;
    int64_t value = 0;
    bool quoted = false;
    bool layout_before = false;
    int line = 1;
    int col = 1;
  };

  Token lex();
  const Token& peek();
  Token take();
  [[noreturn]] void fail(const Token& at, const std::string& what) const;

  Term parse(int max_priority);
  Term parse_primary(int max_priority, int& priority);
  Term parse_arglist(const std::string& functor);
  Term parse_list();
  Term make_var(const std::string& name);
  bool starts_term(const Token& t) const;

  std::string_view text_;
  size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  std::optional<Token> ahead_;
  std::unordered_map<std::string, Term> vars_;
  int anon_ = 0;
  int clause_line_ = 0;
};

/// Parses a single term from a string (trailing period optional).
Term parse_term(std::string_view text);

}  // namespace gem
