#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "flatlin/errors.hpp"

namespace flatlin {

/// Which block of trajectory-manifold coordinates a variable belongs to.
///   State      x^i, shift 0 only (shifts of x go through the system map)
///   Input      u^j_[a], a >= 0
///   Zeta       zeta^c_[-b], b >= 1 (past values of the extension output)
///   FlatOutput y^j_[a], a >= 0 (arguments of the flat parameterization)
///   NewInput   v-block variables v_i^c_[a] introduced by the kappa procedure
enum class VarBlock : std::uint8_t { State, Input, Zeta, FlatOutput, NewInput };

struct ShiftedVar {
    VarBlock block = VarBlock::State;
    std::int32_t group = 0;      // NewInput: kappa-block index (1-based); 0 otherwise
    std::int32_t component = 1;  // 1-based index within the block
    std::int32_t shift = 0;

    friend auto operator<=>(const ShiftedVar&, const ShiftedVar&) = default;
};

ShiftedVar state_var(int component);
ShiftedVar input_var(int component, int shift = 0);
ShiftedVar zeta_var(int component, int shift);
ShiftedVar flat_var(int component, int shift = 0);
ShiftedVar vnew_var(int group, int component, int shift = 0);

std::string to_string(const ShiftedVar& v);

struct VarHash {
    std::size_t operator()(const ShiftedVar& v) const {
        std::uint64_t h = static_cast<std::uint64_t>(v.block);
        auto mix = [&h](std::uint64_t x) {
            h ^= x + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        };
        mix(static_cast<std::uint64_t>(static_cast<std::uint32_t>(v.group)));
        mix(static_cast<std::uint64_t>(static_cast<std::uint32_t>(v.component)));
        mix(static_cast<std::uint64_t>(static_cast<std::uint32_t>(v.shift)));
        return static_cast<std::size_t>(h);
    }
};

enum class Op : std::uint8_t {
    Constant,
    Var,
    Sum,       // n-ary
    Product,   // n-ary
    Quotient,  // binary
    Power,     // integer exponent
    Neg,
    Sin,
    Cos,
    Tan,
    Sinc,  // sin(t)/t, continuously extended with Sinc(0) = 1
    Atan
};

class ExprNode;
using Expr = std::shared_ptr<const ExprNode>;

/// Immutable expression node. Shared subtrees are permitted (the tree is
/// really a DAG); all algorithms memoize on node identity.
class ExprNode {
public:
    Op op() const { return op_; }
    double value() const { return value_; }
    const ShiftedVar& var() const { return var_; }
    int exponent() const { return exponent_; }
    const std::vector<Expr>& children() const { return children_; }

    ExprNode(Op op, double value, ShiftedVar var, int exponent, std::vector<Expr> children)
        : op_(op), value_(value), var_(var), exponent_(exponent), children_(std::move(children)) {}

private:
    Op op_;
    double value_ = 0.0;
    ShiftedVar var_{};
    int exponent_ = 0;
    std::vector<Expr> children_;
};

// Smart constructors. These perform the only rewriting the toolkit does:
// constant folding, +-0, *1, *0, pow 0/1, and double negation.
Expr constant(double c);
Expr var(const ShiftedVar& v);
Expr add(std::vector<Expr> terms);
Expr add(const Expr& a, const Expr& b);
Expr sub(const Expr& a, const Expr& b);
Expr mul(std::vector<Expr> factors);
Expr mul(const Expr& a, const Expr& b);
Expr quotient(const Expr& num, const Expr& den);
Expr power(const Expr& base, int exponent);
Expr neg(const Expr& a);
Expr sin_e(const Expr& a);
Expr cos_e(const Expr& a);
Expr tan_e(const Expr& a);
Expr sinc_e(const Expr& a);
Expr atan_e(const Expr& a);

using Assignment = std::unordered_map<ShiftedVar, double, VarHash>;
using SubstMap = std::unordered_map<ShiftedVar, Expr, VarHash>;

/// Recursive evaluation. Throws UnboundVariableError (listing every missing
/// variable) or DivisionByZeroError (naming the subexpression).
double eval(const Expr& e, const Assignment& p);

/// Exact partial derivative; variables other than w are constants.
Expr diff(const Expr& e, const ShiftedVar& w);

/// Simultaneous substitution followed by the standard constant folding.
Expr substitute(const Expr& e, const SubstMap& s);

/// Entry (i,j) = eval(diff(es[i], ws[j]), p).
Eigen::MatrixXd jacobian(std::span<const Expr> es, std::span<const ShiftedVar> ws,
                         const Assignment& p);

/// Structural identity of trees (same shape, same constants bit for bit).
bool structurally_equal(const Expr& a, const Expr& b);

void collect_variables(const Expr& e, std::set<ShiftedVar>& out);
std::set<ShiftedVar> variables_of(const Expr& e);
std::set<ShiftedVar> variables_of(std::span<const Expr> es);

/// Number of distinct nodes (DAG size); diagnostic counter for shift blow-up.
std::size_t dag_size(const Expr& e);
/// Fully expanded node count.
std::size_t tree_size(const Expr& e);

/// Plain-text prefix serialization, e.g. `(add (var x 1 0) (var u 1 0))`.
/// Round-trips bit-exactly on structure and constants.
std::string to_prefix(const Expr& e);

/// Parse the prefix form. `params`, when given, resolves `(param name)` and
/// bare parameter names to constants.
Expr parse_prefix(const std::string& text, const std::map<std::string, double>* params = nullptr);

}  // namespace flatlin
