#include "ccmtrack/expr.h"

#include <charconv>
#include <cmath>
#include <cstring>
#include <set>
#include <utility>

namespace ccmtrack {
namespace expr {

struct Expr::Node {
  Op op{Op::kConst};
  double value{0.0};
  int index{-1};  // variable slot, or exponent for kPow
  std::string name;
  Expr lhs_expr;
  Expr rhs_expr;
  bool constant{true};
};

namespace {

const Expr& NullExpr() {
  static const Expr* const kNull = new Expr();
  return *kNull;
}

bool IsUnaryFunction(Op op) {
  switch (op) {
    case Op::kNeg:
    case Op::kSin:
    case Op::kCos:
    case Op::kExp:
    case Op::kAbs:
    case Op::kSqrt:
    case Op::kSign:
      return true;
    default:
      return false;
  }
}

bool IsBinary(Op op) {
  return op == Op::kAdd || op == Op::kSub || op == Op::kMul || op == Op::kDiv;
}

const char* FunctionName(Op op) {
  switch (op) {
    case Op::kSin: return "sin";
    case Op::kCos: return "cos";
    case Op::kExp: return "exp";
    case Op::kAbs: return "abs";
    case Op::kSqrt: return "sqrt";
    case Op::kSign: return "sign";
    default: return nullptr;
  }
}

std::optional<Op> FunctionFromName(std::string_view name) {
  if (name == "sin") return Op::kSin;
  if (name == "cos") return Op::kCos;
  if (name == "exp") return Op::kExp;
  if (name == "abs") return Op::kAbs;
  if (name == "sqrt") return Op::kSqrt;
  if (name == "sign") return Op::kSign;
  return std::nullopt;
}

double IntPow(double base, int exponent) {
  if (exponent < 0) {
    if (base == 0.0) throw DomainError("division by zero in negative power");
    return 1.0 / IntPow(base, -exponent);
  }
  double result = 1.0;
  double b = base;
  unsigned int e = static_cast<unsigned int>(exponent);
  while (e != 0) {
    if (e & 1u) result *= b;
    b *= b;
    e >>= 1;
  }
  return result;
}

std::string FormatNumber(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return "0";
  return std::string(buf, ptr);
}

// Binding strength used by the printer.
int Precedence(const Expr& e) {
  switch (e.op()) {
    case Op::kAdd:
    case Op::kSub:
      return 1;
    case Op::kMul:
    case Op::kDiv:
      return 2;
    case Op::kNeg:
      return 3;
    case Op::kPow:
      return 4;
    case Op::kConst:
      return e.value() < 0.0 ? 3 : 5;
    default:
      return 5;
  }
}

void Print(const Expr& e, std::string* out);

void PrintAtLeast(const Expr& e, int min_prec, std::string* out) {
  if (Precedence(e) < min_prec) {
    out->push_back('(');
    Print(e, out);
    out->push_back(')');
  } else {
    Print(e, out);
  }
}

void Print(const Expr& e, std::string* out) {
  switch (e.op()) {
    case Op::kConst:
      if (e.value() < 0.0 || std::signbit(e.value())) {
        out->append("(-");
        out->append(FormatNumber(-e.value()));
        out->push_back(')');
      } else {
        out->append(FormatNumber(e.value()));
      }
      return;
    case Op::kVar:
      out->append(e.var_name());
      return;
    case Op::kNeg:
      out->push_back('-');
      PrintAtLeast(e.lhs(), 3, out);
      return;
    case Op::kPow:
      PrintAtLeast(e.lhs(), 5, out);
      out->push_back('^');
      out->append(std::to_string(e.exponent()));
      return;
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul:
    case Op::kDiv: {
      const int prec = Precedence(e);
      PrintAtLeast(e.lhs(), prec, out);
      const char* sym = e.op() == Op::kAdd   ? " + "
                        : e.op() == Op::kSub ? " - "
                        : e.op() == Op::kMul ? " * "
                                             : " / ";
      out->append(sym);
      PrintAtLeast(e.rhs(), prec + 1, out);
      return;
    }
    default:
      out->append(FunctionName(e.op()));
      out->push_back('(');
      Print(e.lhs(), out);
      out->push_back(')');
      return;
  }
}

class Parser {
 public:
  Parser(std::string_view text, const VarTable& vars)
      : text_(text), vars_(vars) {}

  Expr ParseAll() {
    if (text_.find_first_not_of(" \t\r\n") == std::string_view::npos) {
      throw ParseError(0, "empty expression");
    }
    Expr e = ParseExpr();
    SkipSpace();
    if (pos_ != text_.size()) {
      throw ParseError(pos_, "unexpected '" + std::string(1, text_[pos_]) +
                                 "' at offset " + std::to_string(pos_));
    }
    return e;
  }

 private:
  void SkipSpace() {
    while (pos_ < text_.size() &&
           std::strchr(" \t\r\n", text_[pos_]) != nullptr) {
      ++pos_;
    }
  }

  bool Accept(char c) {
    SkipSpace();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  [[noreturn]] void Fail(const std::string& what) {
    throw ParseError(pos_, what + " at offset " + std::to_string(pos_));
  }

  Expr ParseExpr() {
    Expr lhs = ParseTerm();
    for (;;) {
      if (Accept('+')) {
        lhs = Expr::Binary(Op::kAdd, lhs, ParseTerm());
      } else if (Accept('-')) {
        lhs = Expr::Binary(Op::kSub, lhs, ParseTerm());
      } else {
        return lhs;
      }
    }
  }

  Expr ParseTerm() {
    Expr lhs = ParseUnary();
    for (;;) {
      if (Accept('*')) {
        lhs = Expr::Binary(Op::kMul, lhs, ParseUnary());
      } else if (Accept('/')) {
        lhs = Expr::Binary(Op::kDiv, lhs, ParseUnary());
      } else {
        return lhs;
      }
    }
  }

  Expr ParseUnary() {
    if (Accept('-')) {
      Expr operand = ParseUnary();
      if (operand.op() == Op::kConst) return Expr::Constant(-operand.value());
      return Expr::Unary(Op::kNeg, operand);
    }
    return ParsePower();
  }

  Expr ParsePower() {
    Expr base = ParseAtom();
    if (!Accept('^')) return base;
    SkipSpace();
    bool negative = false;
    if (pos_ < text_.size() && text_[pos_] == '-') {
      negative = true;
      ++pos_;
    }
    const std::size_t start = pos_;
    while (pos_ < text_.size() && text_[pos_] >= '0' && text_[pos_] <= '9') {
      ++pos_;
    }
    if (start == pos_) Fail("expected integer exponent");
    int exponent = 0;
    auto [ptr, ec] =
        std::from_chars(text_.data() + start, text_.data() + pos_, exponent);
    if (ec != std::errc() || ptr != text_.data() + pos_) {
      pos_ = start;
      Fail("exponent out of range");
    }
    return Expr::Power(base, negative ? -exponent : exponent);
  }

  Expr ParseAtom() {
    SkipSpace();
    if (pos_ >= text_.size()) Fail("expected expression");
    const char c = text_[pos_];
    if ((c >= '0' && c <= '9') || c == '.') return ParseNumber();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      return ParseIdentifier();
    }
    if (c == '(') {
      ++pos_;
      Expr inner = ParseExpr();
      if (!Accept(')')) Fail("expected ')'");
      return inner;
    }
    Fail("unexpected '" + std::string(1, c) + "'");
  }

  Expr ParseNumber() {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text_.data() + pos_,
                                     text_.data() + text_.size(), value);
    if (ec != std::errc()) Fail("malformed number");
    pos_ = static_cast<std::size_t>(ptr - text_.data());
    return Expr::Constant(value);
  }

  Expr ParseIdentifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
            text_[pos_] == '_')) {
      ++pos_;
    }
    const std::string_view name = text_.substr(start, pos_ - start);
    if (auto fn = FunctionFromName(name)) {
      if (!Accept('(')) Fail("expected '(' after " + std::string(name));
      Expr arg = ParseExpr();
      if (!Accept(')')) Fail("expected ')'");
      return Expr::Unary(*fn, arg);
    }
    auto slot = vars_.Find(name);
    if (!slot) throw UnknownIdentifierError(start, std::string(name));
    return Expr::Variable(*slot, std::string(name));
  }

  std::string_view text_;
  const VarTable& vars_;
  std::size_t pos_{0};
};

}  // namespace

ParseError::ParseError(std::size_t offset, const std::string& what)
    : std::runtime_error(what), offset_(offset) {}

UnknownIdentifierError::UnknownIdentifierError(std::size_t offset,
                                               std::string name)
    : ParseError(offset, "unknown identifier '" + name + "'"),
      name_(std::move(name)) {}

VarTable::VarTable(std::vector<std::string> names) : names_(std::move(names)) {
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (!seen.insert(n).second) {
      throw std::invalid_argument("duplicate identifier '" + n + "'");
    }
  }
}

VarTable VarTable::Indexed(std::string_view prefix, int count) {
  std::vector<std::string> names;
  names.reserve(count);
  for (int i = 1; i <= count; ++i) {
    names.push_back(std::string(prefix) + std::to_string(i));
  }
  return VarTable(std::move(names));
}

std::optional<int> VarTable::Find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

VarTable VarTable::Concat(const VarTable& other) const {
  std::vector<std::string> all = names_;
  all.insert(all.end(), other.names_.begin(), other.names_.end());
  return VarTable(std::move(all));
}

Expr::Expr() : node_(nullptr) {}

Expr::Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

Expr Expr::Constant(double value) {
  auto n = std::make_shared<Node>();
  n->op = Op::kConst;
  n->value = value;
  return Expr(std::move(n));
}

Expr Expr::Variable(int index, std::string name) {
  auto n = std::make_shared<Node>();
  n->op = Op::kVar;
  n->index = index;
  n->name = std::move(name);
  n->constant = false;
  return Expr(std::move(n));
}

Expr Expr::Unary(Op op, Expr operand) {
  if (!IsUnaryFunction(op)) throw std::invalid_argument("not a unary op");
  auto n = std::make_shared<Node>();
  n->op = op;
  n->constant = operand.is_constant();
  n->lhs_expr = std::move(operand);
  return Expr(std::move(n));
}

Expr Expr::Binary(Op op, Expr lhs, Expr rhs) {
  if (!IsBinary(op)) throw std::invalid_argument("not a binary op");
  auto n = std::make_shared<Node>();
  n->op = op;
  n->constant = lhs.is_constant() && rhs.is_constant();
  n->lhs_expr = std::move(lhs);
  n->rhs_expr = std::move(rhs);
  return Expr(std::move(n));
}

Expr Expr::Power(Expr base, int exponent) {
  auto n = std::make_shared<Node>();
  n->op = Op::kPow;
  n->index = exponent;
  n->constant = base.is_constant();
  n->lhs_expr = std::move(base);
  return Expr(std::move(n));
}

Op Expr::op() const { return node_ ? node_->op : Op::kConst; }
double Expr::value() const { return node_ ? node_->value : 0.0; }
int Expr::var_index() const { return node_ ? node_->index : -1; }
int Expr::exponent() const { return node_ ? node_->index : 0; }

const std::string& Expr::var_name() const {
  static const std::string kEmpty;
  return node_ ? node_->name : kEmpty;
}

const Expr& Expr::lhs() const { return node_ ? node_->lhs_expr : NullExpr(); }
const Expr& Expr::rhs() const { return node_ ? node_->rhs_expr : NullExpr(); }

bool Expr::is_constant() const { return node_ ? node_->constant : true; }

bool Expr::StructurallyEquals(const Expr& other) const {
  if (op() != other.op()) return false;
  switch (op()) {
    case Op::kConst:
      return value() == other.value();
    case Op::kVar:
      return var_index() == other.var_index() && var_name() == other.var_name();
    case Op::kPow:
      return exponent() == other.exponent() &&
             lhs().StructurallyEquals(other.lhs());
    default:
      if (IsBinary(op())) {
        return lhs().StructurallyEquals(other.lhs()) &&
               rhs().StructurallyEquals(other.rhs());
      }
      return lhs().StructurallyEquals(other.lhs());
  }
}

double Expr::Evaluate(std::span<const double> env) const {
  switch (op()) {
    case Op::kConst:
      return value();
    case Op::kVar:
      if (var_index() < 0 || static_cast<std::size_t>(var_index()) >= env.size()) {
        throw DomainError("unbound variable '" + var_name() + "'");
      }
      return env[var_index()];
    case Op::kNeg:
      return -lhs().Evaluate(env);
    case Op::kSin:
      return std::sin(lhs().Evaluate(env));
    case Op::kCos:
      return std::cos(lhs().Evaluate(env));
    case Op::kExp:
      return std::exp(lhs().Evaluate(env));
    case Op::kAbs:
      return std::abs(lhs().Evaluate(env));
    case Op::kSqrt: {
      const double a = lhs().Evaluate(env);
      if (a < 0.0) throw DomainError("sqrt of negative value");
      return std::sqrt(a);
    }
    case Op::kSign: {
      const double a = lhs().Evaluate(env);
      return a > 0.0 ? 1.0 : (a < 0.0 ? -1.0 : 0.0);
    }
    case Op::kAdd:
      return lhs().Evaluate(env) + rhs().Evaluate(env);
    case Op::kSub:
      return lhs().Evaluate(env) - rhs().Evaluate(env);
    case Op::kMul:
      return lhs().Evaluate(env) * rhs().Evaluate(env);
    case Op::kDiv: {
      const double num = lhs().Evaluate(env);
      const double den = rhs().Evaluate(env);
      if (den == 0.0) throw DomainError("division by zero");
      return num / den;
    }
    case Op::kPow:
      return IntPow(lhs().Evaluate(env), exponent());
  }
  return 0.0;
}

std::string Expr::ToString() const {
  std::string out;
  Print(*this, &out);
  return out;
}

Expr Parse(std::string_view text, const VarTable& vars) {
  return Parser(text, vars).ParseAll();
}

double Evaluate(const Expr& e, const VarTable& vars,
                const std::map<std::string, double>& env) {
  std::vector<double> slots(vars.size(),
                            std::numeric_limits<double>::quiet_NaN());
  std::vector<bool> bound(vars.size(), false);
  for (int i = 0; i < vars.size(); ++i) {
    auto it = env.find(vars.name(i));
    if (it != env.end()) {
      slots[i] = it->second;
      bound[i] = true;
    }
  }
  // Walk once to find unbound references before evaluating.
  std::vector<const Expr*> stack{&e};
  while (!stack.empty()) {
    const Expr* cur = stack.back();
    stack.pop_back();
    if (cur->op() == Op::kVar && !bound.at(cur->var_index())) {
      throw DomainError("unbound variable '" + cur->var_name() + "'");
    }
    if (cur->op() != Op::kConst && cur->op() != Op::kVar) {
      stack.push_back(&cur->lhs());
      if (IsBinary(cur->op())) stack.push_back(&cur->rhs());
    }
  }
  return e.Evaluate(slots);
}

Expr operator+(const Expr& a, const Expr& b) {
  if (a.op() == Op::kConst && b.op() == Op::kConst) {
    return Expr::Constant(a.value() + b.value());
  }
  if (a.op() == Op::kConst && a.value() == 0.0) return b;
  if (b.op() == Op::kConst && b.value() == 0.0) return a;
  if (b.op() == Op::kNeg) return a - b.lhs();
  return Expr::Binary(Op::kAdd, a, b);
}

Expr operator-(const Expr& a, const Expr& b) {
  if (a.op() == Op::kConst && b.op() == Op::kConst) {
    return Expr::Constant(a.value() - b.value());
  }
  if (b.op() == Op::kConst && b.value() == 0.0) return a;
  if (a.op() == Op::kConst && a.value() == 0.0) return -b;
  if (b.op() == Op::kNeg) return a + b.lhs();
  return Expr::Binary(Op::kSub, a, b);
}

Expr operator*(const Expr& a, const Expr& b) {
  if (a.op() == Op::kConst && b.op() == Op::kConst) {
    return Expr::Constant(a.value() * b.value());
  }
  if ((a.op() == Op::kConst && a.value() == 0.0) ||
      (b.op() == Op::kConst && b.value() == 0.0)) {
    return Expr::Constant(0.0);
  }
  if (a.op() == Op::kConst && a.value() == 1.0) return b;
  if (b.op() == Op::kConst && b.value() == 1.0) return a;
  if (a.op() == Op::kConst && a.value() == -1.0) return -b;
  if (b.op() == Op::kConst && b.value() == -1.0) return -a;
  return Expr::Binary(Op::kMul, a, b);
}

Expr operator/(const Expr& a, const Expr& b) {
  if (a.op() == Op::kConst && b.op() == Op::kConst && b.value() != 0.0) {
    return Expr::Constant(a.value() / b.value());
  }
  if (a.op() == Op::kConst && a.value() == 0.0) return Expr::Constant(0.0);
  if (b.op() == Op::kConst && b.value() == 1.0) return a;
  return Expr::Binary(Op::kDiv, a, b);
}

Expr operator-(const Expr& a) {
  if (a.op() == Op::kConst) return Expr::Constant(-a.value());
  if (a.op() == Op::kNeg) return a.lhs();
  return Expr::Unary(Op::kNeg, a);
}

Expr Pow(const Expr& base, int exponent) {
  if (exponent == 0) return Expr::Constant(1.0);
  if (exponent == 1) return base;
  if (base.op() == Op::kConst && (base.value() != 0.0 || exponent > 0)) {
    return Expr::Constant(IntPow(base.value(), exponent));
  }
  return Expr::Power(base, exponent);
}

Expr Apply(Op function, const Expr& operand) {
  if (function == Op::kNeg) return -operand;
  if (operand.op() == Op::kConst) {
    const double v = operand.value();
    if (!(function == Op::kSqrt && v < 0.0)) {
      return Expr::Constant(
          Expr::Unary(function, operand).Evaluate(std::span<const double>()));
    }
  }
  return Expr::Unary(function, operand);
}

Expr Differentiate(const Expr& e, int var_index) {
  if (e.is_constant()) return Expr::Constant(0.0);
  const Expr& u = e.lhs();
  switch (e.op()) {
    case Op::kConst:
      return Expr::Constant(0.0);
    case Op::kVar:
      return Expr::Constant(e.var_index() == var_index ? 1.0 : 0.0);
    case Op::kNeg:
      return -Differentiate(u, var_index);
    case Op::kSin:
      return Apply(Op::kCos, u) * Differentiate(u, var_index);
    case Op::kCos:
      return -(Apply(Op::kSin, u) * Differentiate(u, var_index));
    case Op::kExp:
      return e * Differentiate(u, var_index);
    case Op::kAbs:
      return Apply(Op::kSign, u) * Differentiate(u, var_index);
    case Op::kSqrt:
      return Differentiate(u, var_index) / (Expr::Constant(2.0) * e);
    case Op::kSign:
      return Expr::Constant(0.0);
    case Op::kAdd:
      return Differentiate(u, var_index) + Differentiate(e.rhs(), var_index);
    case Op::kSub:
      return Differentiate(u, var_index) - Differentiate(e.rhs(), var_index);
    case Op::kMul: {
      const Expr& v = e.rhs();
      return Differentiate(u, var_index) * v + u * Differentiate(v, var_index);
    }
    case Op::kDiv: {
      const Expr& v = e.rhs();
      return (Differentiate(u, var_index) * v -
              u * Differentiate(v, var_index)) /
             Pow(v, 2);
    }
    case Op::kPow: {
      const int k = e.exponent();
      return Expr::Constant(static_cast<double>(k)) * Pow(u, k - 1) *
             Differentiate(u, var_index);
    }
  }
  return Expr::Constant(0.0);
}

Expr Differentiate(const Expr& e, const VarTable& vars, std::string_view var) {
  auto slot = vars.Find(var);
  if (!slot) {
    throw std::invalid_argument("unknown variable '" + std::string(var) + "'");
  }
  return Differentiate(e, *slot);
}

}  // namespace expr
}  // namespace ccmtrack
