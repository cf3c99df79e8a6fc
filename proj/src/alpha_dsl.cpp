#include "alphappo/alpha_dsl.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>

#include "alphappo/rolling.hpp"
#include "alphappo/text_util.hpp"
#include "corpus_data.hpp"

namespace alphappo {

ExprPtr make_number(double v) { return std::make_shared<const Expr>(Expr{NumberNode{v}}); }
ExprPtr make_identifier(std::string name) {
  return std::make_shared<const Expr>(Expr{IdentifierNode{std::move(name)}});
}
ExprPtr make_negate(ExprPtr operand) {
  return std::make_shared<const Expr>(Expr{NegateNode{std::move(operand)}});
}
ExprPtr make_binary(BinaryOp op, ExprPtr lhs, ExprPtr rhs) {
  return std::make_shared<const Expr>(Expr{BinaryNode{op, std::move(lhs), std::move(rhs)}});
}
ExprPtr make_call(Function f, std::vector<ExprPtr> args) {
  return std::make_shared<const Expr>(Expr{CallNode{f, std::move(args)}});
}

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

const char* op_symbol(BinaryOp op) {
  switch (op) {
    case BinaryOp::Add: return "+";
    case BinaryOp::Sub: return "-";
    case BinaryOp::Mul: return "*";
    case BinaryOp::Div: return "/";
  }
  return "?";
}

const char* op_name(BinaryOp op) {
  switch (op) {
    case BinaryOp::Add: return "Add";
    case BinaryOp::Sub: return "Sub";
    case BinaryOp::Mul: return "Mul";
    case BinaryOp::Div: return "Div";
  }
  return "?";
}

const char* function_name(Function f) {
  switch (f) {
    case Function::Min: return "min";
    case Function::Max: return "max";
    case Function::Abs: return "abs";
  }
  return "?";
}

std::optional<Function> lookup_function(std::string_view name) {
  if (name == "min") return Function::Min;
  if (name == "max") return Function::Max;
  if (name == "abs") return Function::Abs;
  return std::nullopt;
}

// Binding strength used by the renderer: additive < multiplicative < unary < atom.
int precedence(const Expr& e) {
  return std::visit(overloaded{
                        [](const BinaryNode& b) {
                          return (b.op == BinaryOp::Add || b.op == BinaryOp::Sub) ? 1 : 2;
                        },
                        [](const NegateNode&) { return 3; },
                        [](const auto&) { return 4; },
                    },
                    e.node);
}

// ----------------------------------------------------------------- lexer

enum class Tok { Ident, Number, Plus, Minus, Star, Slash, LParen, RParen, Comma, Assign, End };

struct Token {
  Tok kind;
  std::size_t offset;
  std::string_view text;
  double number = 0.0;
};

const char* describe_tok(Tok k) {
  switch (k) {
    case Tok::Ident: return "identifier";
    case Tok::Number: return "number";
    case Tok::Plus: return "'+'";
    case Tok::Minus: return "'-'";
    case Tok::Star: return "'*'";
    case Tok::Slash: return "'/'";
    case Tok::LParen: return "'('";
    case Tok::RParen: return "')'";
    case Tok::Comma: return "','";
    case Tok::Assign: return "'='";
    case Tok::End: return "end of line";
  }
  return "?";
}

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto is_ident_start = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; };
  auto is_ident = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  auto is_digit = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; };
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    if (is_ident_start(c)) {
      while (i < s.size() && is_ident(s[i])) ++i;
      out.push_back({Tok::Ident, start, s.substr(start, i - start)});
      continue;
    }
    if (is_digit(c) || (c == '.' && i + 1 < s.size() && is_digit(s[i + 1]))) {
      while (i < s.size() && is_digit(s[i])) ++i;
      if (i < s.size() && s[i] == '.') {
        ++i;
        while (i < s.size() && is_digit(s[i])) ++i;
      }
      if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
        std::size_t j = i + 1;
        if (j < s.size() && (s[j] == '+' || s[j] == '-')) ++j;
        if (j < s.size() && is_digit(s[j])) {
          i = j;
          while (i < s.size() && is_digit(s[i])) ++i;
        }
      }
      auto text = s.substr(start, i - start);
      std::string normalized(text);
      if (normalized.front() == '.') normalized.insert(normalized.begin(), '0');
      if (normalized.back() == '.') normalized.push_back('0');
      auto v = text_util::parse_double(normalized);
      if (!v) throw ParseError("malformed number '" + std::string(text) + "' at offset " + std::to_string(start), start);
      if (i < s.size() && is_ident(s[i])) {
        throw ParseError("unexpected character '" + std::string(1, s[i]) + "' at offset " + std::to_string(i), i);
      }
      out.push_back({Tok::Number, start, text, *v});
      continue;
    }
    Tok kind;
    switch (c) {
      case '+': kind = Tok::Plus; break;
      case '-': kind = Tok::Minus; break;
      case '*': kind = Tok::Star; break;
      case '/': kind = Tok::Slash; break;
      case '(': kind = Tok::LParen; break;
      case ')': kind = Tok::RParen; break;
      case ',': kind = Tok::Comma; break;
      case '=': kind = Tok::Assign; break;
      default:
        throw ParseError("unexpected character '" + std::string(1, c) + "' at offset " + std::to_string(i), i);
    }
    if ((kind == Tok::Star || kind == Tok::Slash) && i + 1 < s.size() && s[i + 1] == c) {
      throw ParseError(std::string("operator '") + c + c + "' is not supported (offset " + std::to_string(i) + ")", i);
    }
    if (kind == Tok::Assign && i + 1 < s.size() && s[i + 1] == '=') {
      throw ParseError("comparison '==' is not supported (offset " + std::to_string(i) + ")", i);
    }
    out.push_back({kind, i, s.substr(i, 1)});
    ++i;
  }
  out.push_back({Tok::End, s.size(), {}});
  return out;
}

// ----------------------------------------------------------------- parser

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  AlphaExpr parse_line(std::string_view line) {
    const Token& name = peek();
    if (name.kind != Tok::Ident) fail("expected alpha name", name);
    advance();
    expect(Tok::Assign, "expected '=' after alpha name");
    if (peek().kind == Tok::End) fail("empty right-hand side", peek());
    AlphaExpr out;
    out.name = std::string(name.text);
    out.ast = expression();
    if (peek().kind != Tok::End) fail("unexpected " + std::string(describe_tok(peek().kind)), peek());
    out.source_text = std::string(text_util::trim(line));
    return out;
  }

 private:
  const Token& peek() const { return toks_[pos_]; }
  const Token& advance() { return toks_[pos_++]; }

  [[noreturn]] void fail(const std::string& what, const Token& at) const {
    throw ParseError(what + " at offset " + std::to_string(at.offset), at.offset);
  }

  void expect(Tok kind, const std::string& what) {
    if (peek().kind != kind) fail(what + ", found " + describe_tok(peek().kind), peek());
    advance();
  }

  ExprPtr expression() {
    auto lhs = term();
    while (peek().kind == Tok::Plus || peek().kind == Tok::Minus) {
      const auto op = advance().kind == Tok::Plus ? BinaryOp::Add : BinaryOp::Sub;
      lhs = make_binary(op, lhs, term());
    }
    return lhs;
  }

  ExprPtr term() {
    auto lhs = unary();
    while (peek().kind == Tok::Star || peek().kind == Tok::Slash) {
      const auto op = advance().kind == Tok::Star ? BinaryOp::Mul : BinaryOp::Div;
      lhs = make_binary(op, lhs, unary());
    }
    return lhs;
  }

  ExprPtr unary() {
    if (peek().kind == Tok::Minus) {
      advance();
      return make_negate(unary());
    }
    if (peek().kind == Tok::Plus) {
      advance();
      return unary();
    }
    return primary();
  }

  ExprPtr primary() {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::Number:
        advance();
        return make_number(t.number);
      case Tok::Ident: {
        advance();
        if (peek().kind != Tok::LParen) return make_identifier(std::string(t.text));
        auto f = lookup_function(t.text);
        if (!f) fail("unknown function '" + std::string(t.text) + "'", t);
        advance();
        std::vector<ExprPtr> args;
        args.push_back(expression());
        while (peek().kind == Tok::Comma) {
          advance();
          args.push_back(expression());
        }
        expect(Tok::RParen, "expected ')' to close call");
        const bool arity_ok = *f == Function::Abs ? args.size() == 1 : args.size() >= 2;
        if (!arity_ok) {
          fail(std::string(function_name(*f)) + "() called with " + std::to_string(args.size()) +
                   " argument(s)",
               t);
        }
        return make_call(*f, std::move(args));
      }
      case Tok::LParen: {
        advance();
        auto inner = expression();
        expect(Tok::RParen, "expected ')'");
        return inner;
      }
      default:
        fail("expected operand, found " + std::string(describe_tok(t.kind)), t);
    }
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

// ----------------------------------------------------------------- printing

void render_into(const Expr& e, std::string& out);

void render_child(const Expr& child, bool parens, std::string& out) {
  if (parens) out += "(";
  render_into(child, out);
  if (parens) out += ")";
}

void render_into(const Expr& e, std::string& out) {
  std::visit(overloaded{
                 [&](const NumberNode& n) { out += text_util::format_double(n.value); },
                 [&](const IdentifierNode& id) { out += id.name; },
                 [&](const NegateNode& n) {
                   out += "-";
                   render_child(*n.operand, precedence(*n.operand) < 3, out);
                 },
                 [&](const BinaryNode& b) {
                   const int p = precedence(e);
                   render_child(*b.lhs, precedence(*b.lhs) < p, out);
                   out += " ";
                   out += op_symbol(b.op);
                   out += " ";
                   render_child(*b.rhs, precedence(*b.rhs) <= p, out);
                 },
                 [&](const CallNode& c) {
                   out += function_name(c.function);
                   out += "(";
                   for (std::size_t i = 0; i < c.args.size(); ++i) {
                     if (i) out += ", ";
                     render_into(*c.args[i], out);
                   }
                   out += ")";
                 },
             },
             e.node);
}

void describe_into(const Expr& e, std::string& out) {
  std::visit(overloaded{
                 [&](const NumberNode& n) { out += text_util::format_double(n.value); },
                 [&](const IdentifierNode& id) { out += id.name; },
                 [&](const NegateNode& n) {
                   out += "Neg(";
                   describe_into(*n.operand, out);
                   out += ")";
                 },
                 [&](const BinaryNode& b) {
                   out += op_name(b.op);
                   out += "(";
                   describe_into(*b.lhs, out);
                   out += ",";
                   describe_into(*b.rhs, out);
                   out += ")";
                 },
                 [&](const CallNode& c) {
                   out += function_name(c.function);
                   out += "(";
                   for (std::size_t i = 0; i < c.args.size(); ++i) {
                     if (i) out += ",";
                     describe_into(*c.args[i], out);
                   }
                   out += ")";
                 },
             },
             e.node);
}

void collect_identifiers(const Expr& e, std::set<std::string>& out) {
  std::visit(overloaded{
                 [](const NumberNode&) {},
                 [&](const IdentifierNode& id) { out.insert(id.name); },
                 [&](const NegateNode& n) { collect_identifiers(*n.operand, out); },
                 [&](const BinaryNode& b) {
                   collect_identifiers(*b.lhs, out);
                   collect_identifiers(*b.rhs, out);
                 },
                 [&](const CallNode& c) {
                   for (const auto& a : c.args) collect_identifiers(*a, out);
                 },
             },
             e.node);
}

// ----------------------------------------------------------------- evaluation

class Evaluator {
 public:
  explicit Evaluator(const FeatureFrame& frame) : frame_(frame) {}

  Series eval(const Expr& e) {
    const std::size_t n = frame_.rows();
    return std::visit(
        overloaded{
            [&](const NumberNode& num) { return Series(n, num.value); },
            [&](const IdentifierNode& id) { return frame_.column(id.name); },
            [&](const NegateNode& neg) {
              auto v = eval(*neg.operand);
              for (auto& x : v) x = -x;
              return v;
            },
            [&](const BinaryNode& b) {
              auto l = eval(*b.lhs);
              const auto r = eval(*b.rhs);
              for (std::size_t t = 0; t < n; ++t) l[t] = apply(b.op, l[t], r[t]);
              return l;
            },
            [&](const CallNode& c) {
              auto acc = eval(*c.args[0]);
              if (c.function == Function::Abs) {
                for (auto& x : acc) x = std::abs(x);
                return acc;
              }
              for (std::size_t a = 1; a < c.args.size(); ++a) {
                const auto next = eval(*c.args[a]);
                for (std::size_t t = 0; t < n; ++t) {
                  if (is_missing(acc[t]) || is_missing(next[t])) {
                    acc[t] = kMissing;
                  } else {
                    acc[t] = c.function == Function::Min ? std::min(acc[t], next[t]) : std::max(acc[t], next[t]);
                  }
                }
              }
              return acc;
            },
        },
        e.node);
  }

  std::size_t division_by_zero = 0;

 private:
  double apply(BinaryOp op, double a, double b) {
    if (is_missing(a) || is_missing(b)) return kMissing;
    switch (op) {
      case BinaryOp::Add: return a + b;
      case BinaryOp::Sub: return a - b;
      case BinaryOp::Mul: return a * b;
      case BinaryOp::Div:
        if (b == 0.0) {
          ++division_by_zero;
          return kMissing;
        }
        return a / b;
    }
    return kMissing;
  }

  const FeatureFrame& frame_;
};

}  // namespace

bool same_tree(const Expr& a, const Expr& b) {
  if (a.node.index() != b.node.index()) return false;
  return std::visit(
      overloaded{
          [&](const NumberNode& x) { return x.value == std::get<NumberNode>(b.node).value; },
          [&](const IdentifierNode& x) { return x.name == std::get<IdentifierNode>(b.node).name; },
          [&](const NegateNode& x) { return same_tree(*x.operand, *std::get<NegateNode>(b.node).operand); },
          [&](const BinaryNode& x) {
            const auto& y = std::get<BinaryNode>(b.node);
            return x.op == y.op && same_tree(*x.lhs, *y.lhs) && same_tree(*x.rhs, *y.rhs);
          },
          [&](const CallNode& x) {
            const auto& y = std::get<CallNode>(b.node);
            if (x.function != y.function || x.args.size() != y.args.size()) return false;
            for (std::size_t i = 0; i < x.args.size(); ++i) {
              if (!same_tree(*x.args[i], *y.args[i])) return false;
            }
            return true;
          },
      },
      a.node);
}

std::string render(const Expr& e) {
  std::string out;
  render_into(e, out);
  return out;
}

std::string describe(const Expr& e) {
  std::string out;
  describe_into(e, out);
  return out;
}

std::set<std::string> identifiers(const Expr& e) {
  std::set<std::string> out;
  collect_identifiers(e, out);
  return out;
}

AlphaExpr parse_alpha(std::string_view line) {
  Parser p(tokenize(line));
  return p.parse_line(line);
}

std::vector<AlphaExpr> parse_alpha_file(std::string_view text) {
  std::vector<AlphaExpr> out;
  std::map<std::string, std::size_t> seen;
  const auto lines = text_util::split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto trimmed = text_util::trim(lines[i]);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    const std::size_t line_no = i + 1;
    AlphaExpr expr;
    try {
      expr = parse_alpha(lines[i]);
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }
    if (auto it = seen.find(expr.name); it != seen.end()) {
      throw ValidationError("line " + std::to_string(line_no) + ": duplicate alpha name '" + expr.name +
                            "' (first defined on line " + std::to_string(it->second) + ")");
    }
    seen.emplace(expr.name, line_no);
    out.push_back(std::move(expr));
  }
  return out;
}

std::string_view builtin_corpus() { return kBuiltinCorpus; }

EvalResult evaluate(const AlphaExpr& expr, const FeatureFrame& frame) {
  for (const auto& id : identifiers(*expr.ast)) {
    if (!frame.has(id)) {
      throw ValidationError("alpha '" + expr.name + "' references unknown identifier '" + id + "'");
    }
  }
  Evaluator ev(frame);
  EvalResult out;
  out.values = ev.eval(*expr.ast);
  out.division_by_zero = ev.division_by_zero;
  return out;
}

bool AlphaMatrix::row_valid(std::size_t row) const {
  for (std::size_t j = 0; j < cols(); ++j) {
    if (!valid(row, j)) return false;
  }
  return true;
}

std::size_t AlphaMatrix::index_of(std::string_view name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ValidationError("alpha '" + std::string(name) + "' not in matrix");
  return static_cast<std::size_t>(it - names.begin());
}

AlphaMatrix AlphaMatrix::subset(const std::vector<std::string>& keep) const {
  AlphaMatrix out;
  out.names = keep;
  out.dates = dates;
  out.train_rows = train_rows;
  out.division_by_zero = division_by_zero;
  out.raw.resize(raw.rows(), static_cast<Eigen::Index>(keep.size()));
  out.standardized.resize(raw.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    const auto src = index_of(keep[j]);
    const auto jj = static_cast<Eigen::Index>(j);
    const auto ss = static_cast<Eigen::Index>(src);
    out.raw.col(jj) = raw.col(ss);
    out.standardized.col(jj) = standardized.col(ss);
    out.fit_mean.push_back(fit_mean[src]);
    out.fit_std.push_back(fit_std[src]);
  }
  return out;
}

AlphaMatrix build_matrix(const std::vector<AlphaExpr>& exprs, const FeatureFrame& frame, const SplitSpec& split) {
  return build_matrix(exprs, frame, split.boundary(frame.rows()));
}

AlphaMatrix build_matrix(const std::vector<AlphaExpr>& exprs, const FeatureFrame& frame, std::size_t train_rows) {
  if (exprs.empty()) throw ValidationError("no alpha expressions given");
  if (train_rows > frame.rows()) throw ValidationError("training rows exceed frame rows");

  struct Column {
    std::string name;
    Series values;
    double mean;
    double sd;
  };
  std::vector<Column> kept;
  AlphaMatrix m;
  m.dates = frame.dates();
  m.train_rows = train_rows;

  for (const auto& expr : exprs) {
    auto res = evaluate(expr, frame);
    m.division_by_zero += res.division_by_zero;
    std::vector<double> train;
    for (std::size_t t = 0; t < train_rows; ++t) {
      if (!is_missing(res.values[t])) train.push_back(res.values[t]);
    }
    if (train.size() < 2) {
      m.dropped.push_back({expr.name, "fewer than 2 valid training rows"});
      continue;
    }
    const double mean = rolling::sample_mean(train);
    const double sd = rolling::sample_stddev(train);
    if (!std::isfinite(mean) || !std::isfinite(sd)) {
      m.dropped.push_back({expr.name, "non-finite training statistics"});
      continue;
    }
    if (sd == 0.0) {
      m.dropped.push_back({expr.name, "zero variance on training rows"});
      continue;
    }
    kept.push_back({expr.name, std::move(res.values), mean, sd});
  }
  if (kept.empty()) throw ValidationError("no usable alphas: every column was dropped");

  const auto T = static_cast<Eigen::Index>(frame.rows());
  const auto N = static_cast<Eigen::Index>(kept.size());
  m.raw.resize(T, N);
  m.standardized.resize(T, N);
  for (Eigen::Index j = 0; j < N; ++j) {
    const auto& c = kept[static_cast<std::size_t>(j)];
    m.names.push_back(c.name);
    m.fit_mean.push_back(c.mean);
    m.fit_std.push_back(c.sd);
    for (Eigen::Index t = 0; t < T; ++t) {
      const double v = c.values[static_cast<std::size_t>(t)];
      m.raw(t, j) = v;
      m.standardized(t, j) = is_missing(v) ? kMissing : (v - c.mean) / c.sd;
    }
  }
  return m;
}

std::string render_prompt(const std::vector<std::string>& features) {
  if (features.empty()) throw ValidationError("prompt needs at least one feature");
  std::string joined;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (i) joined += ", ";
    joined += features[i];
  }
  return "You are a quantitative trader. Generate 50 alpha formulas using the given stock features:\n" +
         joined +
         ".\n"
         "The formulas should be mathematical expressions combining these features.\n"
         "Return only the formulas in Python syntax, using variables like C_t (Close), O_t (Open),\n"
         "V_t (Volume), S_t (Sentiment), and standard indicators (SMA, Momentum).\n"
         "Example Output: alpha_t = (C_t - O_t) / O_t + 0.5 * S_t\n";
}

}  // namespace alphappo
