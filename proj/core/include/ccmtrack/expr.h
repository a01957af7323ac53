#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ccmtrack {
namespace expr {

/// Node kinds of a scalar expression tree. kSign only arises from
/// differentiating abs(), but it parses and prints like any other function.
enum class Op {
  kConst,
  kVar,
  kNeg,
  kSin,
  kCos,
  kExp,
  kAbs,
  kSqrt,
  kSign,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kPow,
};

/// Raised by Parse(). `offset()` is the byte offset of the offending token
/// (the input length when the input ended early).
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t offset, const std::string& what);
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class UnknownIdentifierError : public ParseError {
 public:
  UnknownIdentifierError(std::size_t offset, std::string name);
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

/// Division by zero, sqrt of a negative number, or an unbound variable.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ordered, duplicate-free list of identifiers. The position of a name is the
/// slot it reads from in the evaluation environment.
class VarTable {
 public:
  VarTable() = default;
  explicit VarTable(std::vector<std::string> names);

  /// {prefix1, ..., prefixN}.
  static VarTable Indexed(std::string_view prefix, int count);

  std::optional<int> Find(std::string_view name) const;
  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int i) const { return names_.at(i); }
  const std::vector<std::string>& names() const { return names_; }

  /// Appends the identifiers of `other`; duplicates are rejected.
  VarTable Concat(const VarTable& other) const;

 private:
  std::vector<std::string> names_;
};

/// Immutable scalar expression. Copies share the underlying tree, so an Expr
/// is cheap to pass by value and safe to evaluate from many threads.
class Expr {
 public:
  /// The constant 0.
  Expr();

  static Expr Constant(double value);
  static Expr Variable(int index, std::string name);

  // Raw constructors. No simplification is applied.
  static Expr Unary(Op op, Expr operand);
  static Expr Binary(Op op, Expr lhs, Expr rhs);
  static Expr Power(Expr base, int exponent);

  Op op() const;
  double value() const;
  int var_index() const;
  const std::string& var_name() const;
  int exponent() const;
  /// Operand of a unary node, or left operand / base of a binary/power node.
  const Expr& lhs() const;
  const Expr& rhs() const;

  bool is_constant() const;
  bool StructurallyEquals(const Expr& other) const;

  double Evaluate(std::span<const double> env) const;

  /// Round-trippable text: Parse(ToString()) rebuilds an equal tree.
  std::string ToString() const;

 private:
  struct Node;
  explicit Expr(std::shared_ptr<const Node> node);

  std::shared_ptr<const Node> node_;
};

/// Parses `text` against `vars`. Grammar (loosest binding first):
///   expr  := term (('+'|'-') term)*
///   term  := unary (('*'|'/') unary)*
///   unary := '-' unary | power
///   power := atom ('^' '-'? integer)?
///   atom  := number | ident | func '(' expr ')' | '(' expr ')'
/// with func in {sin, cos, exp, abs, sqrt, sign}.  A leading minus directly
/// in front of a numeric literal folds into the constant.
Expr Parse(std::string_view text, const VarTable& vars);

/// Evaluates with variables bound by name; a missing binding is a
/// DomainError.
double Evaluate(const Expr& e, const VarTable& vars,
                const std::map<std::string, double>& env);

/// Symbolic partial derivative with respect to variable slot `var_index`.
/// d|u| = sign(u) du with sign(0) = 0.
Expr Differentiate(const Expr& e, int var_index);
Expr Differentiate(const Expr& e, const VarTable& vars, std::string_view var);

// Simplifying builders: fold constants and drop 0/1 identities.
Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr Pow(const Expr& base, int exponent);
Expr Apply(Op function, const Expr& operand);

}  // namespace expr
}  // namespace ccmtrack
