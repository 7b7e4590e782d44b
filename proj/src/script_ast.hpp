#pragma once

#include "abrforge/script.hpp"

#include <memory>
#include <string>
#include <vector>

namespace abrforge::script {

enum class ExprKind {
    number,
    string,
    list,
    local,
    global,
    unary_minus,
    unary_not,
    binary,
    logical_and,
    logical_or,
    call,         // user or builtin function, by name
    module_call,  // module.member(args)
    index,
    slice,
};

enum class BinOp { add, sub, mul, div, mod, pow, eq, ne, lt, le, gt, ge };

struct Expr {
    ExprKind kind;
    int line = 0;
    double number = 0.0;
    std::string text;    // string literal, identifier, function or module name
    std::string member;  // module member for module_call
    int slot = -1;       // local slot
    int callee = -1;     // index of a user function, -1 for builtins
    BinOp op = BinOp::add;
    bool has_lo = false, has_hi = false;
    std::vector<std::unique_ptr<Expr>> args;
};

using ExprPtr = std::unique_ptr<Expr>;

enum class StmtKind { assign, index_assign, aug_assign, if_, for_, while_, return_, break_, continue_, expr };

struct Stmt {
    StmtKind kind;
    int line = 0;
    int slot = -1;
    std::string name;
    BinOp op = BinOp::add;
    ExprPtr a, b;
    std::vector<Stmt> body, orelse;
};

struct FunctionDef {
    std::string name;
    std::size_t n_params = 0;
    std::vector<std::string> locals;  // params first
    std::vector<Stmt> body;
    int line = 0;
};

struct Import {
    std::string name;
    int line = 0;
};

struct Constant {
    std::string name;
    ExprPtr value;
    int line = 0;
};

struct Program {
    std::vector<Import> imports;
    std::vector<Constant> constants;
    std::vector<FunctionDef> functions;
    int find_function(std::string_view name) const {
        for (std::size_t i = 0; i < functions.size(); ++i) {
            if (functions[i].name == name) return static_cast<int>(i);
        }
        return -1;
    }
};

}  // namespace abrforge::script
