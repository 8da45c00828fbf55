#include "flatlin/expr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

namespace flatlin {

namespace {

Expr make_node(Op op, double value, ShiftedVar v, int exponent, std::vector<Expr> children) {
    return std::make_shared<const ExprNode>(op, value, v, exponent, std::move(children));
}

bool is_const(const Expr& e, double c) {
    return e->op() == Op::Constant && e->value() == c;
}

double sinc_val(double t) {
    if (std::abs(t) < 1e-4) {
        const double t2 = t * t;
        return 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
    }
    return std::sin(t) / t;
}

std::string shorten(const std::string& s) {
    if (s.size() <= 160) return s;
    return s.substr(0, 157) + "...";
}

}  // namespace

ShiftedVar state_var(int component) {
    return ShiftedVar{VarBlock::State, 0, component, 0};
}

ShiftedVar input_var(int component, int shift) {
    if (shift < 0) throw std::logic_error("input shift must be >= 0");
    return ShiftedVar{VarBlock::Input, 0, component, shift};
}

ShiftedVar zeta_var(int component, int shift) {
    if (shift > -1) throw std::logic_error("zeta shift must be <= -1");
    return ShiftedVar{VarBlock::Zeta, 0, component, shift};
}

ShiftedVar flat_var(int component, int shift) {
    if (shift < 0) throw std::logic_error("flat-output shift must be >= 0");
    return ShiftedVar{VarBlock::FlatOutput, 0, component, shift};
}

ShiftedVar vnew_var(int group, int component, int shift) {
    if (shift < 0) throw std::logic_error("new-input shift must be >= 0");
    return ShiftedVar{VarBlock::NewInput, group, component, shift};
}

std::string to_string(const ShiftedVar& v) {
    std::string base;
    switch (v.block) {
        case VarBlock::State: base = "x" + std::to_string(v.component); break;
        case VarBlock::Input: base = "u" + std::to_string(v.component); break;
        case VarBlock::Zeta: base = "zeta" + std::to_string(v.component); break;
        case VarBlock::FlatOutput: base = "y" + std::to_string(v.component); break;
        case VarBlock::NewInput:
            base = "v" + std::to_string(v.group) + "." + std::to_string(v.component);
            break;
    }
    if (v.shift != 0 || v.block == VarBlock::Zeta)
        base += "[" + std::to_string(v.shift) + "]";
    return base;
}

Expr constant(double c) {
    return make_node(Op::Constant, c, {}, 0, {});
}

Expr var(const ShiftedVar& v) {
    return make_node(Op::Var, 0.0, v, 0, {});
}

Expr add(std::vector<Expr> terms) {
    std::vector<Expr> flat;
    double acc = 0.0;
    for (auto& t : terms) {
        if (!t) throw std::logic_error("null expr in add");
        if (t->op() == Op::Constant) {
            acc += t->value();
        } else if (t->op() == Op::Sum) {
            for (const auto& k : t->children()) {
                if (k->op() == Op::Constant)
                    acc += k->value();
                else
                    flat.push_back(k);
            }
        } else {
            flat.push_back(std::move(t));
        }
    }
    // Cancel t + (-t) pairs of structurally identical terms.
    for (std::size_t i = 0; i < flat.size(); ++i) {
        if (!flat[i]) continue;
        for (std::size_t j = 0; j < flat.size(); ++j) {
            if (i == j || !flat[j] || !flat[i]) continue;
            const bool i_neg = flat[i]->op() == Op::Neg;
            const bool j_neg = flat[j]->op() == Op::Neg;
            if (i_neg == j_neg) continue;
            const Expr& plain = i_neg ? flat[j] : flat[i];
            const Expr& negated = i_neg ? flat[i] : flat[j];
            if (structurally_equal(plain, negated->children()[0])) {
                flat[i].reset();
                flat[j].reset();
                break;
            }
        }
    }
    flat.erase(std::remove_if(flat.begin(), flat.end(), [](const Expr& e) { return !e; }),
               flat.end());
    if (acc != 0.0) flat.push_back(constant(acc));
    if (flat.empty()) return constant(0.0);
    if (flat.size() == 1) return flat[0];
    return make_node(Op::Sum, 0.0, {}, 0, std::move(flat));
}

Expr add(const Expr& a, const Expr& b) {
    return add(std::vector<Expr>{a, b});
}

Expr sub(const Expr& a, const Expr& b) {
    return add(a, neg(b));
}

Expr mul(std::vector<Expr> factors) {
    std::vector<Expr> flat;
    double acc = 1.0;
    for (auto& f : factors) {
        if (!f) throw std::logic_error("null expr in mul");
        if (f->op() == Op::Constant) {
            acc *= f->value();
        } else if (f->op() == Op::Product) {
            for (const auto& k : f->children()) {
                if (k->op() == Op::Constant)
                    acc *= k->value();
                else
                    flat.push_back(k);
            }
        } else {
            flat.push_back(std::move(f));
        }
    }
    if (acc == 0.0) return constant(0.0);
    if (acc != 1.0) flat.insert(flat.begin(), constant(acc));
    if (flat.empty()) return constant(1.0);
    if (flat.size() == 1) return flat[0];
    return make_node(Op::Product, 0.0, {}, 0, std::move(flat));
}

Expr mul(const Expr& a, const Expr& b) {
    return mul(std::vector<Expr>{a, b});
}

Expr quotient(const Expr& num, const Expr& den) {
    if (is_const(den, 0.0)) throw std::logic_error("quotient by literal zero");
    if (is_const(num, 0.0)) return constant(0.0);
    if (is_const(den, 1.0)) return num;
    if (num->op() == Op::Constant && den->op() == Op::Constant)
        return constant(num->value() / den->value());
    return make_node(Op::Quotient, 0.0, {}, 0, {num, den});
}

Expr power(const Expr& base, int exponent) {
    if (exponent == 0) return constant(1.0);
    if (exponent == 1) return base;
    if (base->op() == Op::Constant) {
        if (base->value() == 0.0 && exponent < 0)
            throw std::logic_error("negative power of literal zero");
        return constant(std::pow(base->value(), exponent));
    }
    return make_node(Op::Power, 0.0, {}, exponent, {base});
}

Expr neg(const Expr& a) {
    if (a->op() == Op::Constant) return constant(-a->value());
    if (a->op() == Op::Neg) return a->children()[0];
    return make_node(Op::Neg, 0.0, {}, 0, {a});
}

namespace {
Expr unary(Op op, const Expr& a, double (*fold)(double)) {
    if (a->op() == Op::Constant) return constant(fold(a->value()));
    return make_node(op, 0.0, {}, 0, {a});
}
}  // namespace

Expr sin_e(const Expr& a) { return unary(Op::Sin, a, +[](double t) { return std::sin(t); }); }
Expr cos_e(const Expr& a) { return unary(Op::Cos, a, +[](double t) { return std::cos(t); }); }
Expr tan_e(const Expr& a) { return unary(Op::Tan, a, +[](double t) { return std::tan(t); }); }
Expr sinc_e(const Expr& a) { return unary(Op::Sinc, a, +[](double t) { return sinc_val(t); }); }
Expr atan_e(const Expr& a) { return unary(Op::Atan, a, +[](double t) { return std::atan(t); }); }

namespace {

void collect_unbound(const Expr& e, const Assignment& p, std::set<ShiftedVar>& missing,
                     std::set<const ExprNode*>& seen) {
    if (!seen.insert(e.get()).second) return;
    if (e->op() == Op::Var) {
        if (!p.count(e->var())) missing.insert(e->var());
        return;
    }
    for (const auto& k : e->children()) collect_unbound(k, p, missing, seen);
}

double eval_rec(const Expr& e, const Assignment& p,
                std::unordered_map<const ExprNode*, double>& memo) {
    auto it = memo.find(e.get());
    if (it != memo.end()) return it->second;
    double r = 0.0;
    switch (e->op()) {
        case Op::Constant: r = e->value(); break;
        case Op::Var: {
            auto v = p.find(e->var());
            if (v == p.end()) throw UnboundVariableError(to_string(e->var()));
            r = v->second;
            break;
        }
        case Op::Sum:
            for (const auto& k : e->children()) r += eval_rec(k, p, memo);
            break;
        case Op::Product:
            r = 1.0;
            for (const auto& k : e->children()) r *= eval_rec(k, p, memo);
            break;
        case Op::Quotient: {
            const double num = eval_rec(e->children()[0], p, memo);
            const double den = eval_rec(e->children()[1], p, memo);
            if (den == 0.0) throw DivisionByZeroError(shorten(to_prefix(e)));
            r = num / den;
            break;
        }
        case Op::Power: {
            const double b = eval_rec(e->children()[0], p, memo);
            if (b == 0.0 && e->exponent() < 0)
                throw DivisionByZeroError(shorten(to_prefix(e)));
            r = std::pow(b, e->exponent());
            break;
        }
        case Op::Neg: r = -eval_rec(e->children()[0], p, memo); break;
        case Op::Sin: r = std::sin(eval_rec(e->children()[0], p, memo)); break;
        case Op::Cos: r = std::cos(eval_rec(e->children()[0], p, memo)); break;
        case Op::Tan: r = std::tan(eval_rec(e->children()[0], p, memo)); break;
        case Op::Sinc: r = sinc_val(eval_rec(e->children()[0], p, memo)); break;
        case Op::Atan: r = std::atan(eval_rec(e->children()[0], p, memo)); break;
    }
    memo.emplace(e.get(), r);
    return r;
}

}  // namespace

double eval(const Expr& e, const Assignment& p) {
    std::unordered_map<const ExprNode*, double> memo;
    try {
        return eval_rec(e, p, memo);
    } catch (const UnboundVariableError&) {
        // Rescan from the root so the error lists every missing variable.
        std::set<ShiftedVar> missing;
        std::set<const ExprNode*> seen;
        collect_unbound(e, p, missing, seen);
        std::string list;
        for (const auto& m : missing) {
            if (!list.empty()) list += ", ";
            list += to_string(m);
        }
        throw UnboundVariableError(list);
    }
}

namespace {

Expr diff_rec(const Expr& e, const ShiftedVar& w,
              std::unordered_map<const ExprNode*, Expr>& memo) {
    auto it = memo.find(e.get());
    if (it != memo.end()) return it->second;
    Expr r;
    switch (e->op()) {
        case Op::Constant: r = constant(0.0); break;
        case Op::Var: r = constant(e->var() == w ? 1.0 : 0.0); break;
        case Op::Sum: {
            std::vector<Expr> parts;
            for (const auto& k : e->children()) parts.push_back(diff_rec(k, w, memo));
            r = add(std::move(parts));
            break;
        }
        case Op::Product: {
            std::vector<Expr> parts;
            const auto& kids = e->children();
            for (std::size_t i = 0; i < kids.size(); ++i) {
                Expr di = diff_rec(kids[i], w, memo);
                if (is_const(di, 0.0)) continue;
                std::vector<Expr> fac;
                for (std::size_t j = 0; j < kids.size(); ++j)
                    fac.push_back(i == j ? di : kids[j]);
                parts.push_back(mul(std::move(fac)));
            }
            r = add(std::move(parts));
            break;
        }
        case Op::Quotient: {
            const Expr& num = e->children()[0];
            const Expr& den = e->children()[1];
            Expr dn = diff_rec(num, w, memo);
            Expr dd = diff_rec(den, w, memo);
            if (is_const(dd, 0.0)) {
                r = quotient(dn, den);
            } else {
                r = quotient(sub(mul(dn, den), mul(num, dd)), power(den, 2));
            }
            break;
        }
        case Op::Power: {
            const Expr& b = e->children()[0];
            Expr db = diff_rec(b, w, memo);
            r = mul({constant(static_cast<double>(e->exponent())), power(b, e->exponent() - 1),
                     db});
            break;
        }
        case Op::Neg: r = neg(diff_rec(e->children()[0], w, memo)); break;
        case Op::Sin: {
            const Expr& a = e->children()[0];
            r = mul(cos_e(a), diff_rec(a, w, memo));
            break;
        }
        case Op::Cos: {
            const Expr& a = e->children()[0];
            r = mul(neg(sin_e(a)), diff_rec(a, w, memo));
            break;
        }
        case Op::Tan: {
            const Expr& a = e->children()[0];
            r = mul(add(constant(1.0), power(tan_e(a), 2)), diff_rec(a, w, memo));
            break;
        }
        case Op::Sinc: {
            // d/dt sinc(t) = (cos t - sinc t)/t; removable singularity at 0.
            const Expr& a = e->children()[0];
            r = mul(quotient(sub(cos_e(a), sinc_e(a)), a), diff_rec(a, w, memo));
            break;
        }
        case Op::Atan: {
            const Expr& a = e->children()[0];
            r = quotient(diff_rec(a, w, memo), add(constant(1.0), power(a, 2)));
            break;
        }
    }
    memo.emplace(e.get(), r);
    return r;
}

}  // namespace

Expr diff(const Expr& e, const ShiftedVar& w) {
    std::unordered_map<const ExprNode*, Expr> memo;
    return diff_rec(e, w, memo);
}

namespace {

Expr subst_rec(const Expr& e, const SubstMap& s,
               std::unordered_map<const ExprNode*, Expr>& memo) {
    auto it = memo.find(e.get());
    if (it != memo.end()) return it->second;
    Expr r;
    switch (e->op()) {
        case Op::Constant: r = e; break;
        case Op::Var: {
            auto v = s.find(e->var());
            r = (v == s.end()) ? e : v->second;
            break;
        }
        case Op::Sum: {
            std::vector<Expr> kids;
            for (const auto& k : e->children()) kids.push_back(subst_rec(k, s, memo));
            r = add(std::move(kids));
            break;
        }
        case Op::Product: {
            std::vector<Expr> kids;
            for (const auto& k : e->children()) kids.push_back(subst_rec(k, s, memo));
            r = mul(std::move(kids));
            break;
        }
        case Op::Quotient:
            r = quotient(subst_rec(e->children()[0], s, memo),
                         subst_rec(e->children()[1], s, memo));
            break;
        case Op::Power: r = power(subst_rec(e->children()[0], s, memo), e->exponent()); break;
        case Op::Neg: r = neg(subst_rec(e->children()[0], s, memo)); break;
        case Op::Sin: r = sin_e(subst_rec(e->children()[0], s, memo)); break;
        case Op::Cos: r = cos_e(subst_rec(e->children()[0], s, memo)); break;
        case Op::Tan: r = tan_e(subst_rec(e->children()[0], s, memo)); break;
        case Op::Sinc: r = sinc_e(subst_rec(e->children()[0], s, memo)); break;
        case Op::Atan: r = atan_e(subst_rec(e->children()[0], s, memo)); break;
    }
    memo.emplace(e.get(), r);
    return r;
}

}  // namespace

Expr substitute(const Expr& e, const SubstMap& s) {
    if (s.empty()) return e;
    std::unordered_map<const ExprNode*, Expr> memo;
    return subst_rec(e, s, memo);
}

Eigen::MatrixXd jacobian(std::span<const Expr> es, std::span<const ShiftedVar> ws,
                         const Assignment& p) {
    Eigen::MatrixXd J(es.size(), ws.size());
    for (std::size_t i = 0; i < es.size(); ++i) {
        for (std::size_t j = 0; j < ws.size(); ++j) {
            J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                eval(diff(es[i], ws[j]), p);
        }
    }
    return J;
}

bool structurally_equal(const Expr& a, const Expr& b) {
    if (a.get() == b.get()) return true;
    if (a->op() != b->op()) return false;
    switch (a->op()) {
        case Op::Constant: return a->value() == b->value();
        case Op::Var: return a->var() == b->var();
        case Op::Power:
            if (a->exponent() != b->exponent()) return false;
            break;
        default: break;
    }
    if (a->children().size() != b->children().size()) return false;
    for (std::size_t i = 0; i < a->children().size(); ++i)
        if (!structurally_equal(a->children()[i], b->children()[i])) return false;
    return true;
}

namespace {
void collect_rec(const Expr& e, std::set<ShiftedVar>& out, std::set<const ExprNode*>& seen) {
    if (!seen.insert(e.get()).second) return;
    if (e->op() == Op::Var) {
        out.insert(e->var());
        return;
    }
    for (const auto& k : e->children()) collect_rec(k, out, seen);
}
}  // namespace

void collect_variables(const Expr& e, std::set<ShiftedVar>& out) {
    std::set<const ExprNode*> seen;
    collect_rec(e, out, seen);
}

std::set<ShiftedVar> variables_of(const Expr& e) {
    std::set<ShiftedVar> out;
    collect_variables(e, out);
    return out;
}

std::set<ShiftedVar> variables_of(std::span<const Expr> es) {
    std::set<ShiftedVar> out;
    for (const auto& e : es) collect_variables(e, out);
    return out;
}

std::size_t dag_size(const Expr& e) {
    std::set<const ExprNode*> seen;
    std::vector<const ExprNode*> stack{e.get()};
    while (!stack.empty()) {
        const ExprNode* n = stack.back();
        stack.pop_back();
        if (!seen.insert(n).second) continue;
        for (const auto& k : n->children()) stack.push_back(k.get());
    }
    return seen.size();
}

namespace {
std::size_t tree_size_rec(const Expr& e, std::unordered_map<const ExprNode*, std::size_t>& memo) {
    auto it = memo.find(e.get());
    if (it != memo.end()) return it->second;
    std::size_t n = 1;
    for (const auto& k : e->children()) n += tree_size_rec(k, memo);
    memo.emplace(e.get(), n);
    return n;
}
}  // namespace

std::size_t tree_size(const Expr& e) {
    std::unordered_map<const ExprNode*, std::size_t> memo;
    return tree_size_rec(e, memo);
}

namespace {

std::string format_double(double c) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", c);
    return buf;
}

const char* block_token(VarBlock b) {
    switch (b) {
        case VarBlock::State: return "x";
        case VarBlock::Input: return "u";
        case VarBlock::Zeta: return "zeta";
        case VarBlock::FlatOutput: return "y";
        case VarBlock::NewInput: return "v";
    }
    return "?";
}

void print_rec(const Expr& e, std::string& out) {
    switch (e->op()) {
        case Op::Constant: out += format_double(e->value()); return;
        case Op::Var: {
            const auto& v = e->var();
            out += "(var ";
            out += block_token(v.block);
            if (v.block == VarBlock::NewInput) {
                out += " " + std::to_string(v.group);
            }
            out += " " + std::to_string(v.component) + " " + std::to_string(v.shift) + ")";
            return;
        }
        default: break;
    }
    const char* head = nullptr;
    switch (e->op()) {
        case Op::Sum: head = "add"; break;
        case Op::Product: head = "mul"; break;
        case Op::Quotient: head = "div"; break;
        case Op::Power: head = "pow"; break;
        case Op::Neg: head = "neg"; break;
        case Op::Sin: head = "sin"; break;
        case Op::Cos: head = "cos"; break;
        case Op::Tan: head = "tan"; break;
        case Op::Sinc: head = "sinc"; break;
        case Op::Atan: head = "atan"; break;
        default: head = "?"; break;
    }
    out += "(";
    out += head;
    for (const auto& k : e->children()) {
        out += " ";
        print_rec(k, out);
    }
    if (e->op() == Op::Power) out += " " + std::to_string(e->exponent());
    out += ")";
}

struct Token {
    enum Kind { LParen, RParen, Atom } kind;
    std::string text;
};

std::vector<Token> tokenize(const std::string& s) {
    std::vector<Token> toks;
    std::size_t i = 0;
    while (i < s.size()) {
        const char c = s[i];
        if (c == '(') {
            toks.push_back({Token::LParen, "("});
            ++i;
        } else if (c == ')') {
            toks.push_back({Token::RParen, ")"});
            ++i;
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else {
            std::size_t j = i;
            while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j])) &&
                   s[j] != '(' && s[j] != ')')
                ++j;
            toks.push_back({Token::Atom, s.substr(i, j - i)});
            i = j;
        }
    }
    return toks;
}

bool looks_numeric(const std::string& t) {
    if (t.empty()) return false;
    const char c = t[0];
    if (std::isdigit(static_cast<unsigned char>(c))) return true;
    if ((c == '-' || c == '+' || c == '.') && t.size() > 1 &&
        (std::isdigit(static_cast<unsigned char>(t[1])) || t[1] == '.'))
        return true;
    return false;
}

class Parser {
public:
    Parser(std::vector<Token> toks, const std::map<std::string, double>* params)
        : toks_(std::move(toks)), params_(params) {}

    Expr parse() {
        Expr e = parse_expr();
        if (pos_ != toks_.size()) throw ParseError("trailing tokens after expression");
        return e;
    }

private:
    const Token& peek() {
        if (pos_ >= toks_.size()) throw ParseError("unexpected end of input");
        return toks_[pos_];
    }
    Token next() {
        Token t = peek();
        ++pos_;
        return t;
    }

    double parse_number(const std::string& t) {
        char* end = nullptr;
        const double v = std::strtod(t.c_str(), &end);
        if (end != t.c_str() + t.size()) throw ParseError("bad number: " + t);
        return v;
    }

    int parse_int(const std::string& t) {
        char* end = nullptr;
        const long v = std::strtol(t.c_str(), &end, 10);
        if (end != t.c_str() + t.size()) throw ParseError("bad integer: " + t);
        return static_cast<int>(v);
    }

    Expr parse_expr() {
        Token t = next();
        if (t.kind == Token::Atom) {
            if (looks_numeric(t.text)) return constant(parse_number(t.text));
            if (params_) {
                auto it = params_->find(t.text);
                if (it != params_->end()) return constant(it->second);
            }
            throw ParseError("unknown atom: " + t.text);
        }
        if (t.kind != Token::LParen) throw ParseError("expected '('");
        Token head = next();
        if (head.kind != Token::Atom) throw ParseError("expected operator name");
        const std::string& op = head.text;

        if (op == "const") {
            Expr e = constant(parse_number(next().text));
            expect_rparen();
            return e;
        }
        if (op == "param") {
            Token name = next();
            expect_rparen();
            if (!params_) throw ParseError("param '" + name.text + "' with no parameter table");
            auto it = params_->find(name.text);
            if (it == params_->end()) throw ParseError("unknown param: " + name.text);
            return constant(it->second);
        }
        if (op == "var") {
            Token blk = next();
            std::vector<int> nums;
            while (peek().kind == Token::Atom) nums.push_back(parse_int(next().text));
            expect_rparen();
            ShiftedVar v;
            if (blk.text == "x") {
                if (nums.size() < 1) throw ParseError("var x needs a component");
                v = state_var(nums[0]);
                if (nums.size() >= 2 && nums[1] != 0)
                    throw ParseError("state variables carry shift 0 only");
            } else if (blk.text == "u") {
                if (nums.size() < 2) throw ParseError("var u needs component and shift");
                v = input_var(nums[0], nums[1]);
            } else if (blk.text == "zeta") {
                if (nums.size() < 2) throw ParseError("var zeta needs component and shift");
                v = zeta_var(nums[0], nums[1]);
            } else if (blk.text == "y") {
                if (nums.size() < 2) throw ParseError("var y needs component and shift");
                v = flat_var(nums[0], nums[1]);
            } else if (blk.text == "v") {
                if (nums.size() < 3) throw ParseError("var v needs group, component and shift");
                v = vnew_var(nums[0], nums[1], nums[2]);
            } else {
                throw ParseError("unknown variable block: " + blk.text);
            }
            return var(v);
        }

        std::vector<Expr> kids;
        std::vector<std::string> tail_atoms;
        while (peek().kind != Token::RParen) {
            if (op == "pow" && kids.size() == 1 && peek().kind == Token::Atom) {
                tail_atoms.push_back(next().text);
                continue;
            }
            kids.push_back(parse_expr());
        }
        expect_rparen();

        if (op == "add") return add(std::move(kids));
        if (op == "mul") return mul(std::move(kids));
        if (op == "div") {
            if (kids.size() != 2) throw ParseError("div needs 2 operands");
            return quotient(kids[0], kids[1]);
        }
        if (op == "pow") {
            if (kids.size() != 1 || tail_atoms.size() != 1)
                throw ParseError("pow needs a base and an integer exponent");
            return power(kids[0], parse_int(tail_atoms[0]));
        }
        auto unary1 = [&](Expr (*f)(const Expr&)) {
            if (kids.size() != 1) throw ParseError(op + " needs 1 operand");
            return f(kids[0]);
        };
        if (op == "neg") return unary1(&neg);
        if (op == "sin") return unary1(&sin_e);
        if (op == "cos") return unary1(&cos_e);
        if (op == "tan") return unary1(&tan_e);
        if (op == "sinc") return unary1(&sinc_e);
        if (op == "atan") return unary1(&atan_e);
        throw ParseError("unknown operator: " + op);
    }

    void expect_rparen() {
        if (next().kind != Token::RParen) throw ParseError("expected ')'");
    }

    std::vector<Token> toks_;
    const std::map<std::string, double>* params_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string to_prefix(const Expr& e) {
    std::string out;
    print_rec(e, out);
    return out;
}

Expr parse_prefix(const std::string& text, const std::map<std::string, double>* params) {
    return Parser(tokenize(text), params).parse();
}

}  // namespace flatlin
