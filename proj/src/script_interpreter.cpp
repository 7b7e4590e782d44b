#include "script_ast.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace abrforge::script {

Vec& Value::mutable_vector() {
    auto& p = std::get<1>(v_);
    if (p.use_count() > 1) p = std::make_shared<Vec>(*p);
    return *p;
}

List& Value::mutable_list() {
    auto& p = std::get<2>(v_);
    if (p.use_count() > 1) p = std::make_shared<List>(*p);
    return *p;
}

std::string Value::type_name() const {
    switch (v_.index()) {
        case 0: return "number";
        case 1: return "vector";
        case 2: return "list";
        case 3: return "string";
        default: return object() ? object()->type_name() : "object";
    }
}

ExecutionBudget::ExecutionBudget(const Limits& limits) : limits_(&limits) { reset(); }

void ExecutionBudget::reset() {
    start_ = std::chrono::steady_clock::now();
    steps_ = 0;
    allocated_ = 0;
}

void ExecutionBudget::tick(int line) {
    ++steps_;
    if (steps_ > limits_->max_steps) {
        throw ScriptError(FailureKind::timeout, "step limit of " + std::to_string(limits_->max_steps) + " exceeded", line);
    }
    if ((steps_ & 0xFFF) == 0) {
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start_;
        if (elapsed.count() > limits_->time_limit_s) {
            throw ScriptError(FailureKind::timeout, "time limit of " + std::to_string(limits_->time_limit_s) + " s exceeded", line);
        }
    }
}

void ExecutionBudget::charge(std::size_t bytes, int line) {
    if (bytes > limits_->memory_limit_bytes || allocated_ > limits_->memory_limit_bytes - bytes) {
        throw ScriptError(FailureKind::memory_limit,
                          "allocation budget of " + std::to_string(limits_->memory_limit_bytes) + " bytes exhausted",
                          line);
    }
    allocated_ += bytes;
}

void ModuleRegistry::add(const std::string& name, Module module) { modules_[name] = std::move(module); }

const Module* ModuleRegistry::find(std::string_view name) const {
    auto it = modules_.find(name);
    return it == modules_.end() ? nullptr : &it->second;
}

// Defined in script_builtins.cpp.
const Module& builtin_functions();
Module numeric_module();
Module stats_module();
Module signal_module();

ModuleRegistry ModuleRegistry::with_defaults() {
    ModuleRegistry r;
    r.add("numeric", numeric_module());
    r.add("stats", stats_module());
    r.add("signal", signal_module());
    return r;
}

namespace {

[[noreturn]] void fail(const std::string& msg, int line) {
    throw ScriptError(FailureKind::execution_error, msg, line);
}

bool truthy(const Value& v, int line) {
    if (v.is_number()) return v.number() != 0.0;
    if (v.is_vector()) fail("truth value of a vector is ambiguous; use any() or all()", line);
    if (v.is_list()) fail("truth value of a list is ambiguous", line);
    fail("cannot use a " + v.type_name() + " as a condition", line);
}

double apply(BinOp op, double a, double b) {
    switch (op) {
        case BinOp::add: return a + b;
        case BinOp::sub: return a - b;
        case BinOp::mul: return a * b;
        case BinOp::div: return a / b;
        case BinOp::mod: return b == 0.0 ? std::numeric_limits<double>::quiet_NaN() : a - std::floor(a / b) * b;
        case BinOp::pow: return std::pow(a, b);
        case BinOp::eq: return a == b;
        case BinOp::ne: return a != b;
        case BinOp::lt: return a < b;
        case BinOp::le: return a <= b;
        case BinOp::gt: return a > b;
        case BinOp::ge: return a >= b;
    }
    return 0.0;
}

const char* op_name(BinOp op) {
    switch (op) {
        case BinOp::add: return "+";
        case BinOp::sub: return "-";
        case BinOp::mul: return "*";
        case BinOp::div: return "/";
        case BinOp::mod: return "%";
        case BinOp::pow: return "**";
        case BinOp::eq: return "==";
        case BinOp::ne: return "!=";
        case BinOp::lt: return "<";
        case BinOp::le: return "<=";
        case BinOp::gt: return ">";
        case BinOp::ge: return ">=";
    }
    return "?";
}

std::size_t to_index(const Value& v, std::size_t size, int line) {
    if (!v.is_number()) fail("index must be a number, got " + v.type_name(), line);
    const double x = v.number();
    if (std::abs(x - std::round(x)) > 1e-9) fail("index must be an integer", line);
    long long i = std::llround(x);
    const auto n = static_cast<long long>(size);
    if (i < 0) i += n;
    if (i < 0 || i >= n) fail("index " + std::to_string(std::llround(x)) + " out of range for length " + std::to_string(size), line);
    return static_cast<std::size_t>(i);
}

std::size_t slice_bound(const Value& v, std::size_t size, int line) {
    if (!v.is_number()) fail("slice bound must be a number", line);
    long long i = std::llround(v.number());
    const auto n = static_cast<long long>(size);
    if (i < 0) i += n;
    return static_cast<std::size_t>(std::clamp<long long>(i, 0, n));
}

}  // namespace

Value binary_op(BinOp op, const Value& a, const Value& b, ExecutionBudget& budget, int line) {
    if (a.is_number() && b.is_number()) return apply(op, a.number(), b.number());
    if ((a.is_vector() || a.is_number()) && (b.is_vector() || b.is_number())) {
        const std::size_t n = a.is_vector() ? a.vector().size() : b.vector().size();
        if (a.is_vector() && b.is_vector() && a.vector().size() != b.vector().size()) {
            fail("length mismatch in '" + std::string(op_name(op)) + "': " + std::to_string(a.vector().size()) +
                     " vs " + std::to_string(b.vector().size()),
                 line);
        }
        budget.charge_doubles(n, line);
        Vec out(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double x = a.is_vector() ? a.vector()[i] : a.number();
            const double y = b.is_vector() ? b.vector()[i] : b.number();
            out[i] = apply(op, x, y);
        }
        return out;
    }
    if (op == BinOp::add && a.is_list() && b.is_list()) {
        List out = a.list();
        out.insert(out.end(), b.list().begin(), b.list().end());
        budget.charge(out.size() * sizeof(Value), line);
        return out;
    }
    if (a.is_string() && b.is_string()) {
        if (op == BinOp::add) return a.string() + b.string();
        if (op == BinOp::eq) return static_cast<double>(a.string() == b.string());
        if (op == BinOp::ne) return static_cast<double>(a.string() != b.string());
    }
    fail("unsupported operand types for '" + std::string(op_name(op)) + "': " + a.type_name() + " and " +
             b.type_name(),
         line);
}

struct Interpreter::Impl {
    std::shared_ptr<const Program> program;
    Limits limits;
    std::map<std::string, Value, std::less<>> globals;
    std::shared_ptr<const ModuleRegistry> registry;
    ExecutionBudget budget;
    std::map<std::string, const Module*, std::less<>> imported;
    std::map<std::string, Value, std::less<>> constants;
    std::size_t depth = 0;

    enum class Flow { normal, brk, cont, ret };

    struct Frame {
        std::vector<Value> slots;
        std::vector<char> bound;
    };

    Impl(std::shared_ptr<const Program> p, Limits l, std::map<std::string, Value, std::less<>> g,
         std::shared_ptr<const ModuleRegistry> r)
        : program(std::move(p)), limits(std::move(l)), globals(std::move(g)), registry(std::move(r)), budget(limits) {}

    void initialise() {
        budget.reset();
        for (const auto& imp : program->imports) {
            const bool allowed = std::find(limits.import_allowlist.begin(), limits.import_allowlist.end(), imp.name) !=
                                 limits.import_allowlist.end();
            if (!allowed) {
                throw ScriptError(FailureKind::disallowed_import, "module '" + imp.name + "' is not on the allowlist", imp.line);
            }
            const Module* m = registry ? registry->find(imp.name) : nullptr;
            if (!m) fail("no module named '" + imp.name + "'", imp.line);
            imported[imp.name] = m;
        }
        Frame empty;
        for (const auto& c : program->constants) {
            constants[c.name] = eval(*c.value, empty);
        }
    }

    const Value& lookup_global(const std::string& name, int line) const {
        if (auto it = constants.find(name); it != constants.end()) return it->second;
        if (auto it = globals.find(name); it != globals.end()) return it->second;
        fail("undefined variable '" + name + "'", line);
    }

    Value call_user(int idx, std::vector<Value> args, int line) {
        const FunctionDef& f = program->functions[static_cast<std::size_t>(idx)];
        if (args.size() != f.n_params) {
            fail(f.name + "() takes " + std::to_string(f.n_params) + " arguments but " + std::to_string(args.size()) +
                     " were given",
                 line);
        }
        if (depth >= limits.max_call_depth) fail("maximum call depth exceeded", line);
        ++depth;
        Frame frame;
        frame.slots.resize(f.locals.size());
        frame.bound.assign(f.locals.size(), 0);
        for (std::size_t i = 0; i < args.size(); ++i) {
            frame.slots[i] = std::move(args[i]);
            frame.bound[i] = 1;
        }
        Value ret = List{};
        exec_block(f.body, frame, ret, f);
        --depth;
        return ret;
    }

    Flow exec_block(const std::vector<Stmt>& body, Frame& frame, Value& ret, const FunctionDef& f) {
        for (const auto& s : body) {
            const Flow flow = exec(s, frame, ret, f);
            if (flow != Flow::normal) return flow;
        }
        return Flow::normal;
    }

    Value& local(Frame& frame, int slot, const FunctionDef& f, int line) {
        if (slot < 0 || !frame.bound[static_cast<std::size_t>(slot)]) {
            fail("undefined variable '" + (slot < 0 ? std::string("?") : f.locals[static_cast<std::size_t>(slot)]) + "'", line);
        }
        return frame.slots[static_cast<std::size_t>(slot)];
    }

    Flow exec(const Stmt& s, Frame& frame, Value& ret, const FunctionDef& f) {
        budget.tick(s.line);
        switch (s.kind) {
            case StmtKind::assign: {
                Value v = eval(*s.a, frame);
                frame.slots[static_cast<std::size_t>(s.slot)] = std::move(v);
                frame.bound[static_cast<std::size_t>(s.slot)] = 1;
                return Flow::normal;
            }
            case StmtKind::aug_assign: {
                Value rhs = eval(*s.a, frame);
                Value& target = local(frame, s.slot, f, s.line);
                target = binary_op(s.op, target, rhs, budget, s.line);
                return Flow::normal;
            }
            case StmtKind::index_assign: {
                if (s.slot < 0) fail("cannot assign into '" + s.name + "': not a local variable", s.line);
                Value idx = eval(*s.a, frame);
                Value v = eval(*s.b, frame);
                Value& target = local(frame, s.slot, f, s.line);
                if (target.is_vector()) {
                    if (!v.is_number()) fail("vector elements must be numbers", s.line);
                    const std::size_t i = to_index(idx, target.vector().size(), s.line);
                    target.mutable_vector()[i] = v.number();
                } else if (target.is_list()) {
                    const std::size_t i = to_index(idx, target.list().size(), s.line);
                    target.mutable_list()[i] = std::move(v);
                } else {
                    fail("cannot index-assign into a " + target.type_name(), s.line);
                }
                return Flow::normal;
            }
            case StmtKind::if_: {
                if (truthy(eval(*s.a, frame), s.line)) return exec_block(s.body, frame, ret, f);
                return exec_block(s.orelse, frame, ret, f);
            }
            case StmtKind::for_: {
                const Value seq = eval(*s.a, frame);
                std::size_t n = 0;
                if (seq.is_vector()) n = seq.vector().size();
                else if (seq.is_list()) n = seq.list().size();
                else fail("cannot iterate over a " + seq.type_name(), s.line);
                for (std::size_t i = 0; i < n; ++i) {
                    frame.slots[static_cast<std::size_t>(s.slot)] = seq.is_vector() ? Value(seq.vector()[i]) : seq.list()[i];
                    frame.bound[static_cast<std::size_t>(s.slot)] = 1;
                    const Flow flow = exec_block(s.body, frame, ret, f);
                    if (flow == Flow::brk) break;
                    if (flow == Flow::ret) return flow;
                }
                return Flow::normal;
            }
            case StmtKind::while_: {
                while (truthy(eval(*s.a, frame), s.line)) {
                    budget.tick(s.line);
                    const Flow flow = exec_block(s.body, frame, ret, f);
                    if (flow == Flow::brk) break;
                    if (flow == Flow::ret) return flow;
                }
                return Flow::normal;
            }
            case StmtKind::return_:
                ret = s.a ? eval(*s.a, frame) : Value(List{});
                return Flow::ret;
            case StmtKind::break_: return Flow::brk;
            case StmtKind::continue_: return Flow::cont;
            case StmtKind::expr:
                eval(*s.a, frame);
                return Flow::normal;
        }
        return Flow::normal;
    }

    Value eval(const Expr& e, Frame& frame) {
        budget.tick(e.line);
        switch (e.kind) {
            case ExprKind::number: return e.number;
            case ExprKind::string: return e.text;
            case ExprKind::list: {
                std::vector<Value> items;
                items.reserve(e.args.size());
                bool numeric = true;
                for (const auto& a : e.args) {
                    items.push_back(eval(*a, frame));
                    numeric = numeric && items.back().is_number();
                }
                if (numeric) {
                    budget.charge_doubles(items.size(), e.line);
                    Vec v(items.size());
                    for (std::size_t i = 0; i < items.size(); ++i) v[i] = items[i].number();
                    return v;
                }
                budget.charge(items.size() * sizeof(Value), e.line);
                return List(std::move(items));
            }
            case ExprKind::local: {
                const auto slot = static_cast<std::size_t>(e.slot);
                if (!frame.bound[slot]) fail("undefined variable '" + e.text + "'", e.line);
                return frame.slots[slot];
            }
            case ExprKind::global: return lookup_global(e.text, e.line);
            case ExprKind::unary_minus: {
                const Value v = eval(*e.args[0], frame);
                return binary_op(BinOp::mul, v, Value(-1.0), budget, e.line);
            }
            case ExprKind::unary_not: return static_cast<double>(!truthy(eval(*e.args[0], frame), e.line));
            case ExprKind::binary: {
                const Value a = eval(*e.args[0], frame);
                const Value b = eval(*e.args[1], frame);
                return binary_op(e.op, a, b, budget, e.line);
            }
            case ExprKind::logical_and: {
                if (!truthy(eval(*e.args[0], frame), e.line)) return 0.0;
                return static_cast<double>(truthy(eval(*e.args[1], frame), e.line));
            }
            case ExprKind::logical_or: {
                if (truthy(eval(*e.args[0], frame), e.line)) return 1.0;
                return static_cast<double>(truthy(eval(*e.args[1], frame), e.line));
            }
            case ExprKind::call: {
                std::vector<Value> args;
                args.reserve(e.args.size());
                for (const auto& a : e.args) args.push_back(eval(*a, frame));
                if (e.callee >= 0) return call_user(e.callee, std::move(args), e.line);
                const auto& builtins = builtin_functions();
                auto it = builtins.find(e.text);
                if (it == builtins.end()) fail("undefined function '" + e.text + "'", e.line);
                return call_native(e.text, it->second, args, e.line);
            }
            case ExprKind::module_call: {
                auto mod = imported.find(e.text);
                if (mod == imported.end()) fail("name '" + e.text + "' is not defined (missing import?)", e.line);
                auto it = mod->second->find(e.member);
                if (it == mod->second->end()) fail("module '" + e.text + "' has no function '" + e.member + "'", e.line);
                std::vector<Value> args;
                args.reserve(e.args.size());
                for (const auto& a : e.args) args.push_back(eval(*a, frame));
                return call_native(e.text + "." + e.member, it->second, args, e.line);
            }
            case ExprKind::index: {
                const Value target = eval(*e.args[0], frame);
                const Value idx = eval(*e.args[1], frame);
                if (target.is_vector()) return target.vector()[to_index(idx, target.vector().size(), e.line)];
                if (target.is_list()) return target.list()[to_index(idx, target.list().size(), e.line)];
                fail("cannot index a " + target.type_name(), e.line);
            }
            case ExprKind::slice: {
                const Value target = eval(*e.args[0], frame);
                std::size_t n = 0;
                if (target.is_vector()) n = target.vector().size();
                else if (target.is_list()) n = target.list().size();
                else fail("cannot slice a " + target.type_name(), e.line);
                std::size_t k = 1;
                std::size_t lo = 0, hi = n;
                if (e.has_lo) lo = slice_bound(eval(*e.args[k++], frame), n, e.line);
                if (e.has_hi) hi = slice_bound(eval(*e.args[k++], frame), n, e.line);
                if (hi < lo) hi = lo;
                if (target.is_vector()) {
                    budget.charge_doubles(hi - lo, e.line);
                    return Vec(target.vector().begin() + static_cast<long>(lo), target.vector().begin() + static_cast<long>(hi));
                }
                return List(target.list().begin() + static_cast<long>(lo), target.list().begin() + static_cast<long>(hi));
            }
        }
        fail("unsupported expression", e.line);
    }

    Value call_native(const std::string& name, const NativeFunction& fn, const std::vector<Value>& args, int line) {
        if (args.size() < fn.min_args || args.size() > fn.max_args) {
            std::string expected = fn.min_args == fn.max_args
                                       ? std::to_string(fn.min_args)
                                       : std::to_string(fn.min_args) + " to " + std::to_string(fn.max_args);
            fail(name + "() takes " + expected + " arguments but " + std::to_string(args.size()) + " were given", line);
        }
        CallContext ctx{budget, line};
        try {
            return fn.fn(args, ctx);
        } catch (const ScriptError&) {
            throw;
        } catch (const std::exception& ex) {
            fail(name + "(): " + ex.what(), line);
        }
    }
};

Interpreter::Interpreter(std::shared_ptr<const Program> program, Limits limits,
                         std::map<std::string, Value, std::less<>> globals,
                         std::shared_ptr<const ModuleRegistry> registry)
    : impl_(std::make_unique<Impl>(std::move(program), std::move(limits), std::move(globals), std::move(registry))) {
    impl_->initialise();
}

Interpreter::~Interpreter() = default;
Interpreter::Interpreter(Interpreter&&) noexcept = default;
Interpreter& Interpreter::operator=(Interpreter&&) noexcept = default;

bool Interpreter::has_function(std::string_view name) const { return impl_->program->find_function(name) >= 0; }

Value Interpreter::call(std::string_view name, std::vector<Value> args) {
    const int idx = impl_->program->find_function(name);
    if (idx < 0) throw ScriptError(FailureKind::execution_error, "no function named '" + std::string(name) + "'");
    impl_->budget.reset();
    impl_->depth = 0;
    return impl_->call_user(idx, std::move(args), impl_->program->functions[static_cast<std::size_t>(idx)].line);
}

const ExecutionBudget& Interpreter::last_budget() const { return impl_->budget; }

}  // namespace abrforge::script
