#include "script_ast.hpp"

#include <cctype>
#include <cstdlib>
#include <map>
#include <set>

namespace abrforge::script {

std::string label(FailureKind kind) {
    switch (kind) {
        case FailureKind::syntax_error: return "syntax error";
        case FailureKind::execution_error: return "execution error";
        case FailureKind::timeout: return "timeout";
        case FailureKind::memory_limit: return "memory limit exceeded";
        case FailureKind::disallowed_import: return "disallowed import";
        case FailureKind::non_numeric_output: return "non-numeric output";
        case FailureKind::shape_drift: return "shape drift";
        case FailureKind::invalid_output: return "invalid output";
        case FailureKind::action_mismatch: return "action-dimension mismatch";
    }
    return "execution error";
}

ScriptError::ScriptError(FailureKind kind, const std::string& detail, int line)
    : Error(label(kind) + ": " + (line > 0 ? "line " + std::to_string(line) + ": " : std::string()) + detail),
      kind_(kind),
      detail_(detail),
      line_(line) {}

namespace {

enum class Tok { number, ident, string, punct, end };

struct Token {
    Tok type;
    std::string text;
    double number = 0.0;
    int line = 0;
};

[[noreturn]] void syntax(const std::string& msg, int line) {
    throw ScriptError(FailureKind::syntax_error, msg, line);
}

std::vector<Token> lex(std::string_view src) {
    std::vector<Token> out;
    int line = 1;
    std::size_t i = 0;
    static const char* two_char[] = {"==", "!=", "<=", ">=", "&&", "||", "**", "+=", "-=", "*=", "/="};
    while (i < src.size()) {
        const char c = src[i];
        if (c == '\n') {
            ++line;
            ++i;
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        if (c == '#' || (c == '/' && i + 1 < src.size() && src[i + 1] == '/')) {
            while (i < src.size() && src[i] != '\n') ++i;
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '.' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
            std::size_t j = i;
            while (j < src.size() && (std::isdigit(static_cast<unsigned char>(src[j])) || src[j] == '.')) ++j;
            if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
                std::size_t k = j + 1;
                if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
                if (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) {
                    j = k;
                    while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
                }
            }
            const std::string text(src.substr(i, j - i));
            char* end = nullptr;
            const double v = std::strtod(text.c_str(), &end);
            if (end != text.c_str() + text.size()) syntax("malformed number '" + text + "'", line);
            out.push_back({Tok::number, text, v, line});
            i = j;
            continue;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
            out.push_back({Tok::ident, std::string(src.substr(i, j - i)), 0.0, line});
            i = j;
            continue;
        }
        if (c == '"' || c == '\'') {
            std::size_t j = i + 1;
            std::string text;
            while (j < src.size() && src[j] != c) {
                if (src[j] == '\n') syntax("unterminated string", line);
                text.push_back(src[j]);
                ++j;
            }
            if (j >= src.size()) syntax("unterminated string", line);
            out.push_back({Tok::string, text, 0.0, line});
            i = j + 1;
            continue;
        }
        bool matched = false;
        for (const char* op : two_char) {
            if (src.substr(i, 2) == op) {
                out.push_back({Tok::punct, op, 0.0, line});
                i += 2;
                matched = true;
                break;
            }
        }
        if (matched) continue;
        if (std::string_view("+-*/%<>=!()[]{},;:.").find(c) != std::string_view::npos) {
            out.push_back({Tok::punct, std::string(1, c), 0.0, line});
            ++i;
            continue;
        }
        syntax(std::string("unexpected character '") + c + "'", line);
    }
    out.push_back({Tok::end, "", 0.0, line});
    return out;
}

const std::set<std::string, std::less<>> kKeywords = {
    "fn", "let", "if", "else", "for", "in", "while", "return", "break", "continue",
    "import", "and", "or", "not", "true", "false"};

class Parser {
public:
    explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

    std::shared_ptr<Program> parse_program() {
        auto prog = std::make_shared<Program>();
        while (!at_end()) {
            if (accept_kw("import")) {
                const int line = prev().line;
                const std::string name = expect_ident("module name");
                std::string full = name;
                while (accept(".")) full += "." + expect_ident("module name");
                expect(";");
                prog->imports.push_back({full, line});
            } else if (accept_kw("fn")) {
                prog->functions.push_back(parse_function());
            } else if (accept_kw("let")) {
                const int line = prev().line;
                const std::string name = expect_ident("constant name");
                expect("=");
                auto value = parse_expr();
                expect(";");
                prog->constants.push_back({name, std::move(value), line});
            } else {
                syntax("expected 'import', 'fn' or 'let' at top level, found '" + peek().text + "'", peek().line);
            }
        }
        std::set<std::string> seen;
        for (const auto& f : prog->functions) {
            if (!seen.insert(f.name).second) syntax("function '" + f.name + "' defined twice", f.line);
        }
        for (auto& f : prog->functions) {
            for (auto& s : f.body) link_stmt(*prog, s);
        }
        for (auto& c : prog->constants) link_expr(*prog, *c.value);
        return prog;
    }

private:
    // Function-local name resolution state.
    std::map<std::string, int> locals_;
    std::vector<std::string> local_names_;
    int loop_depth_ = 0;

    const Token& peek() const { return toks_[pos_]; }
    const Token& prev() const { return toks_[pos_ - 1]; }
    bool at_end() const { return peek().type == Tok::end; }

    bool check(std::string_view p) const { return peek().type == Tok::punct && peek().text == p; }
    bool accept(std::string_view p) {
        if (check(p)) {
            ++pos_;
            return true;
        }
        return false;
    }
    void expect(std::string_view p) {
        if (!accept(p)) {
            syntax("expected '" + std::string(p) + "' but found '" +
                       (at_end() ? std::string("end of input") : peek().text) + "'",
                   peek().line);
        }
    }
    bool check_kw(std::string_view kw) const { return peek().type == Tok::ident && peek().text == kw; }
    bool accept_kw(std::string_view kw) {
        if (check_kw(kw)) {
            ++pos_;
            return true;
        }
        return false;
    }
    std::string expect_ident(const char* what) {
        if (peek().type != Tok::ident || kKeywords.count(peek().text)) {
            syntax(std::string("expected ") + what + ", found '" + peek().text + "'", peek().line);
        }
        return toks_[pos_++].text;
    }

    int declare(const std::string& name) {
        auto it = locals_.find(name);
        if (it != locals_.end()) return it->second;
        const int slot = static_cast<int>(local_names_.size());
        locals_[name] = slot;
        local_names_.push_back(name);
        return slot;
    }

    FunctionDef parse_function() {
        FunctionDef f;
        f.line = prev().line;
        f.name = expect_ident("function name");
        locals_.clear();
        local_names_.clear();
        expect("(");
        if (!check(")")) {
            do {
                const std::string p = expect_ident("parameter name");
                if (locals_.count(p)) syntax("duplicate parameter '" + p + "'", prev().line);
                declare(p);
            } while (accept(","));
        }
        expect(")");
        f.n_params = local_names_.size();
        f.body = parse_block();
        // Any name assigned anywhere in the body is local to the function.
        for (auto& s : f.body) resolve_stmt(s);
        f.locals = local_names_;
        return f;
    }

    std::vector<Stmt> parse_block() {
        expect("{");
        std::vector<Stmt> body;
        while (!check("}")) {
            if (at_end()) syntax("unexpected end of input inside block", peek().line);
            body.push_back(parse_stmt());
        }
        expect("}");
        return body;
    }

    Stmt parse_stmt() {
        Stmt s;
        s.line = peek().line;
        if (accept_kw("let")) {
            s.kind = StmtKind::assign;
            s.name = expect_ident("variable name");
            s.slot = declare(s.name);
            expect("=");
            s.a = parse_expr();
            expect(";");
            return s;
        }
        if (accept_kw("if")) return parse_if(s.line);
        if (accept_kw("for")) {
            s.kind = StmtKind::for_;
            s.name = expect_ident("loop variable");
            s.slot = declare(s.name);
            if (!accept_kw("in")) syntax("expected 'in' in for loop", peek().line);
            s.a = parse_expr();
            ++loop_depth_;
            s.body = parse_block();
            --loop_depth_;
            return s;
        }
        if (accept_kw("while")) {
            s.kind = StmtKind::while_;
            s.a = parse_expr();
            ++loop_depth_;
            s.body = parse_block();
            --loop_depth_;
            return s;
        }
        if (accept_kw("return")) {
            s.kind = StmtKind::return_;
            if (!check(";")) s.a = parse_expr();
            expect(";");
            return s;
        }
        if (accept_kw("break") || accept_kw("continue")) {
            s.kind = prev().text == "break" ? StmtKind::break_ : StmtKind::continue_;
            if (loop_depth_ == 0) syntax("'" + prev().text + "' outside a loop", s.line);
            expect(";");
            return s;
        }
        if (check_kw("fn") || check_kw("import")) {
            syntax("'" + peek().text + "' is only allowed at top level", s.line);
        }
        // Assignment forms start with an identifier.
        if (peek().type == Tok::ident && !kKeywords.count(peek().text)) {
            const std::size_t save = pos_;
            const std::string name = toks_[pos_++].text;
            if (accept("=")) {
                s.kind = StmtKind::assign;
                s.name = name;
                s.slot = declare(name);
                s.a = parse_expr();
                expect(";");
                return s;
            }
            for (const char* aug : {"+=", "-=", "*=", "/="}) {
                if (accept(aug)) {
                    s.kind = StmtKind::aug_assign;
                    s.name = name;
                    s.slot = declare(name);
                    s.op = aug[0] == '+' ? BinOp::add : aug[0] == '-' ? BinOp::sub : aug[0] == '*' ? BinOp::mul : BinOp::div;
                    s.a = parse_expr();
                    expect(";");
                    return s;
                }
            }
            if (check("[")) {
                // Could be `x[i] = v;` or an expression statement starting with x[i].
                const std::size_t save2 = pos_;
                ++pos_;
                auto idx = parse_expr();
                if (accept("]") && accept("=")) {
                    s.kind = StmtKind::index_assign;
                    s.name = name;
                    s.a = std::move(idx);
                    s.b = parse_expr();
                    expect(";");
                    return s;
                }
                pos_ = save2;
            }
            pos_ = save;
        }
        s.kind = StmtKind::expr;
        s.a = parse_expr();
        expect(";");
        return s;
    }

    Stmt parse_if(int line) {
        Stmt s;
        s.kind = StmtKind::if_;
        s.line = line;
        s.a = parse_expr();
        s.body = parse_block();
        if (accept_kw("else")) {
            if (accept_kw("if")) {
                s.orelse.push_back(parse_if(prev().line));
            } else {
                s.orelse = parse_block();
            }
        }
        return s;
    }

    ExprPtr make(ExprKind kind, int line) {
        auto e = std::make_unique<Expr>();
        e->kind = kind;
        e->line = line;
        return e;
    }

    ExprPtr parse_expr() { return parse_or(); }

    ExprPtr parse_or() {
        auto lhs = parse_and();
        while (accept("||") || accept_kw("or")) {
            auto e = make(ExprKind::logical_or, prev().line);
            e->args.push_back(std::move(lhs));
            e->args.push_back(parse_and());
            lhs = std::move(e);
        }
        return lhs;
    }

    ExprPtr parse_and() {
        auto lhs = parse_not();
        while (accept("&&") || accept_kw("and")) {
            auto e = make(ExprKind::logical_and, prev().line);
            e->args.push_back(std::move(lhs));
            e->args.push_back(parse_not());
            lhs = std::move(e);
        }
        return lhs;
    }

    ExprPtr parse_not() {
        if (accept("!") || accept_kw("not")) {
            auto e = make(ExprKind::unary_not, prev().line);
            e->args.push_back(parse_not());
            return e;
        }
        return parse_comparison();
    }

    ExprPtr parse_comparison() {
        auto lhs = parse_additive();
        for (;;) {
            BinOp op;
            if (accept("==")) op = BinOp::eq;
            else if (accept("!=")) op = BinOp::ne;
            else if (accept("<=")) op = BinOp::le;
            else if (accept(">=")) op = BinOp::ge;
            else if (accept("<")) op = BinOp::lt;
            else if (accept(">")) op = BinOp::gt;
            else return lhs;
            lhs = binary(op, std::move(lhs), parse_additive());
        }
    }

    ExprPtr binary(BinOp op, ExprPtr a, ExprPtr b) {
        auto e = make(ExprKind::binary, prev().line);
        e->op = op;
        e->args.push_back(std::move(a));
        e->args.push_back(std::move(b));
        return e;
    }

    ExprPtr parse_additive() {
        auto lhs = parse_term();
        for (;;) {
            if (accept("+")) lhs = binary(BinOp::add, std::move(lhs), parse_term());
            else if (accept("-")) lhs = binary(BinOp::sub, std::move(lhs), parse_term());
            else return lhs;
        }
    }

    ExprPtr parse_term() {
        auto lhs = parse_unary();
        for (;;) {
            if (accept("*")) lhs = binary(BinOp::mul, std::move(lhs), parse_unary());
            else if (accept("/")) lhs = binary(BinOp::div, std::move(lhs), parse_unary());
            else if (accept("%")) lhs = binary(BinOp::mod, std::move(lhs), parse_unary());
            else return lhs;
        }
    }

    ExprPtr parse_unary() {
        if (accept("-")) {
            auto e = make(ExprKind::unary_minus, prev().line);
            e->args.push_back(parse_unary());
            return e;
        }
        if (accept("+")) return parse_unary();
        return parse_power();
    }

    ExprPtr parse_power() {
        auto base = parse_postfix();
        if (accept("**")) {
            // Right associative; the exponent may carry a unary sign.
            return binary(BinOp::pow, std::move(base), parse_unary());
        }
        return base;
    }

    ExprPtr parse_postfix() {
        auto e = parse_primary();
        while (check("[")) {
            const int line = peek().line;
            ++pos_;
            ExprPtr lo, hi;
            bool is_slice = false;
            if (!check(":")) lo = parse_expr();
            if (accept(":")) {
                is_slice = true;
                if (!check("]")) hi = parse_expr();
            }
            expect("]");
            if (is_slice) {
                auto s = make(ExprKind::slice, line);
                s->has_lo = static_cast<bool>(lo);
                s->has_hi = static_cast<bool>(hi);
                s->args.push_back(std::move(e));
                if (lo) s->args.push_back(std::move(lo));
                if (hi) s->args.push_back(std::move(hi));
                e = std::move(s);
            } else {
                if (!lo) syntax("empty index", line);
                auto ix = make(ExprKind::index, line);
                ix->args.push_back(std::move(e));
                ix->args.push_back(std::move(lo));
                e = std::move(ix);
            }
        }
        return e;
    }

    std::vector<ExprPtr> parse_args() {
        std::vector<ExprPtr> args;
        expect("(");
        if (!check(")")) {
            do {
                if (peek().type == Tok::ident && toks_[pos_ + 1].type == Tok::punct && toks_[pos_ + 1].text == "=") {
                    syntax("keyword arguments are not supported", peek().line);
                }
                args.push_back(parse_expr());
            } while (accept(","));
        }
        expect(")");
        return args;
    }

    ExprPtr parse_primary() {
        const Token& t = peek();
        if (t.type == Tok::number) {
            ++pos_;
            auto e = make(ExprKind::number, t.line);
            e->number = t.number;
            return e;
        }
        if (t.type == Tok::string) {
            ++pos_;
            auto e = make(ExprKind::string, t.line);
            e->text = t.text;
            return e;
        }
        if (accept("(")) {
            auto e = parse_expr();
            expect(")");
            return e;
        }
        if (accept("[")) {
            auto e = make(ExprKind::list, prev().line);
            if (!check("]")) {
                do {
                    if (check("]")) break;  // trailing comma
                    e->args.push_back(parse_expr());
                } while (accept(","));
            }
            expect("]");
            return e;
        }
        if (accept_kw("true") || accept_kw("false")) {
            auto e = make(ExprKind::number, prev().line);
            e->number = prev().text == "true" ? 1.0 : 0.0;
            return e;
        }
        if (t.type == Tok::ident && !kKeywords.count(t.text)) {
            ++pos_;
            if (accept(".")) {
                const std::string member = expect_ident("module member");
                if (!check("(")) syntax("module members must be called: " + t.text + "." + member, t.line);
                auto e = make(ExprKind::module_call, t.line);
                e->text = t.text;
                e->member = member;
                e->args = parse_args();
                return e;
            }
            if (check("(")) {
                auto e = make(ExprKind::call, t.line);
                e->text = t.text;
                e->args = parse_args();
                return e;
            }
            auto e = make(ExprKind::global, t.line);
            e->text = t.text;
            return e;
        }
        if (t.type == Tok::end) syntax("unexpected end of input", t.line);
        syntax("unexpected '" + t.text + "'", t.line);
    }

    void resolve_expr(Expr& e) {
        if (e.kind == ExprKind::global) {
            auto it = locals_.find(e.text);
            if (it != locals_.end()) {
                e.kind = ExprKind::local;
                e.slot = it->second;
            }
        }
        for (auto& a : e.args) resolve_expr(*a);
    }

    void resolve_stmt(Stmt& s) {
        if (s.kind == StmtKind::aug_assign || s.kind == StmtKind::index_assign) {
            auto it = locals_.find(s.name);
            s.slot = it == locals_.end() ? -1 : it->second;
        }
        if (s.a) resolve_expr(*s.a);
        if (s.b) resolve_expr(*s.b);
        for (auto& b : s.body) resolve_stmt(b);
        for (auto& b : s.orelse) resolve_stmt(b);
    }

    void link_expr(const Program& prog, Expr& e) {
        if (e.kind == ExprKind::call) e.callee = prog.find_function(e.text);
        for (auto& a : e.args) link_expr(prog, *a);
    }

    void link_stmt(const Program& prog, Stmt& s) {
        if (s.a) link_expr(prog, *s.a);
        if (s.b) link_expr(prog, *s.b);
        for (auto& b : s.body) link_stmt(prog, b);
        for (auto& b : s.orelse) link_stmt(prog, b);
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
};

}  // namespace

std::shared_ptr<const Program> compile(std::string_view source) {
    Parser parser(lex(source));
    return parser.parse_program();
}

std::vector<std::pair<std::string, std::size_t>> functions(const Program& program) {
    std::vector<std::pair<std::string, std::size_t>> out;
    for (const auto& f : program.functions) out.emplace_back(f.name, f.n_params);
    return out;
}

std::vector<std::string> imports(const Program& program) {
    std::vector<std::string> out;
    for (const auto& i : program.imports) out.push_back(i.name);
    return out;
}

}  // namespace abrforge::script
