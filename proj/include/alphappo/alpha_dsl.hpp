#pragma once

#include <cstddef>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "alphappo/common.hpp"
#include "alphappo/market_data.hpp"

namespace alphappo {

// ---------------------------------------------------------------------------
// Expression tree
//
// The grammar is the arithmetic subset of Python that LLM-written alphas use:
//
//   line    := IDENT '=' expr
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('-' | '+') unary | primary
//   primary := NUMBER | IDENT | FUNC '(' expr (',' expr)* ')' | '(' expr ')'
//
// with FUNC one of min, max (two or more arguments) and abs (one argument).
// Binary operators are left-associative.
// ---------------------------------------------------------------------------

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

enum class BinaryOp { Add, Sub, Mul, Div };
enum class Function { Min, Max, Abs };

struct NumberNode {
  double value;
};
struct IdentifierNode {
  std::string name;
};
struct NegateNode {
  ExprPtr operand;
};
struct BinaryNode {
  BinaryOp op;
  ExprPtr lhs;
  ExprPtr rhs;
};
struct CallNode {
  Function function;
  std::vector<ExprPtr> args;
};

struct Expr {
  std::variant<NumberNode, IdentifierNode, NegateNode, BinaryNode, CallNode> node;
};

ExprPtr make_number(double v);
ExprPtr make_identifier(std::string name);
ExprPtr make_negate(ExprPtr operand);
ExprPtr make_binary(BinaryOp op, ExprPtr lhs, ExprPtr rhs);
ExprPtr make_call(Function f, std::vector<ExprPtr> args);

/// Structural equality (numbers compared exactly).
bool same_tree(const Expr& a, const Expr& b);

/// Python-syntax text with the minimum parentheses needed to reparse to the
/// same tree, e.g. "(C_t - O_t) / O_t + 0.5 * Momentum_3".
std::string render(const Expr& e);

/// Prefix form for debugging and tests, e.g. "Add(Div(Sub(C_t,O_t),O_t),Mul(0.5,Momentum_3))".
std::string describe(const Expr& e);

/// Every identifier the tree references.
std::set<std::string> identifiers(const Expr& e);

struct AlphaExpr {
  std::string name;
  ExprPtr ast;
  std::string source_text;
};

/// Parses one `name = expression` line. Throws ParseError whose offset() is
/// the character offset into `line`.
AlphaExpr parse_alpha(std::string_view line);

/// Parses a whole alpha file: blank lines and '#' comment lines are skipped,
/// order is kept. Throws ParseError naming the 1-based line number, or
/// ValidationError on duplicate alpha names.
std::vector<AlphaExpr> parse_alpha_file(std::string_view text);

/// The alpha corpus bundled with the library (50 formulas).
std::string_view builtin_corpus();

struct EvalResult {
  Series values;
  /// Rows where a divisor was exactly zero (result set to missing).
  std::size_t division_by_zero = 0;
};

/// Row-wise evaluation. A missing operand makes the row missing. Throws
/// ValidationError naming the first unresolved identifier before evaluating.
EvalResult evaluate(const AlphaExpr& expr, const FeatureFrame& frame);

struct DroppedAlpha {
  std::string name;
  std::string reason;
};

/// Per-date alpha values (rows = dates, columns = alphas). Missing cells are NaN.
struct AlphaMatrix {
  std::vector<std::string> names;
  std::vector<Date> dates;
  Eigen::MatrixXd raw;
  Eigen::MatrixXd standardized;
  std::vector<double> fit_mean;
  std::vector<double> fit_std;
  /// Rows [0, train_rows) supplied the standardization statistics.
  std::size_t train_rows = 0;
  std::vector<DroppedAlpha> dropped;
  std::size_t division_by_zero = 0;

  std::size_t rows() const { return static_cast<std::size_t>(raw.rows()); }
  std::size_t cols() const { return names.size(); }
  bool valid(std::size_t row, std::size_t col) const { return !is_missing(standardized(row, col)); }
  bool row_valid(std::size_t row) const;
  std::size_t index_of(std::string_view name) const;

  /// Keeps only the named columns, in the given order.
  AlphaMatrix subset(const std::vector<std::string>& keep) const;
};

/// Evaluates every alpha over the frame and standardizes each column with the
/// mean and sample standard deviation (n - 1) of its valid rows in
/// [0, split.boundary(rows)). Columns with zero or undefined training variance
/// are dropped and reported. Throws ValidationError if nothing survives.
AlphaMatrix build_matrix(const std::vector<AlphaExpr>& exprs, const FeatureFrame& frame,
                         const SplitSpec& split);

/// Same, with an explicit number of training rows.
AlphaMatrix build_matrix(const std::vector<AlphaExpr>& exprs, const FeatureFrame& frame,
                         std::size_t train_rows);

/// The alpha-generation prompt with `features` joined by ", ".
std::string render_prompt(const std::vector<std::string>& features);

}  // namespace alphappo
