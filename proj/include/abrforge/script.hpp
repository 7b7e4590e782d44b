#pragma once

// A small embedded language for candidate code blocks.
//
//   import stats;
//   let SCALE = 8.0;
//   fn state(tput, dl, sizes, buffer, remaining, last, buffer_hist) {
//       let smooth = stats.slope(tput);
//       return [tput / SCALE, dl / 10.0, smooth];
//   }
//
// Values are numbers, numeric vectors, lists, strings and opaque objects
// produced by native modules. Programs run under an ExecutionBudget: a wall
// clock limit, a step limit, an allocation budget and a call depth limit.
// There are no I/O primitives; native modules must be imported and the
// import must be on the allowlist.

#include "abrforge/util/error.hpp"

#include <chrono>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace abrforge::script {

enum class FailureKind {
    syntax_error,
    execution_error,
    timeout,
    memory_limit,
    disallowed_import,
    non_numeric_output,
    shape_drift,
    invalid_output,
    action_mismatch,
};

// Short human label used in rejection reasons ("execution error", ...).
std::string label(FailureKind kind);

class ScriptError : public Error {
public:
    ScriptError(FailureKind kind, const std::string& detail, int line = 0);
    FailureKind kind() const { return kind_; }
    int line() const { return line_; }
    const std::string& detail() const { return detail_; }

private:
    FailureKind kind_;
    std::string detail_;
    int line_;
};

struct Object {
    virtual ~Object() = default;
    virtual std::string type_name() const = 0;
};

class Value;
using Vec = std::vector<double>;
using List = std::vector<Value>;

class Value {
public:
    Value() : v_(0.0) {}
    Value(double x) : v_(x) {}
    Value(Vec v) : v_(std::make_shared<Vec>(std::move(v))) {}
    Value(List l) : v_(std::make_shared<List>(std::move(l))) {}
    Value(std::string s) : v_(std::move(s)) {}
    Value(std::shared_ptr<const Object> o) : v_(std::move(o)) {}

    bool is_number() const { return v_.index() == 0; }
    bool is_vector() const { return v_.index() == 1; }
    bool is_list() const { return v_.index() == 2; }
    bool is_string() const { return v_.index() == 3; }
    bool is_object() const { return v_.index() == 4; }

    double number() const { return std::get<0>(v_); }
    const Vec& vector() const { return *std::get<1>(v_); }
    const List& list() const { return *std::get<2>(v_); }
    const std::string& string() const { return std::get<3>(v_); }
    const std::shared_ptr<const Object>& object() const { return std::get<4>(v_); }

    // Copy-on-write access for element assignment.
    Vec& mutable_vector();
    List& mutable_list();

    std::string type_name() const;

private:
    std::variant<double, std::shared_ptr<Vec>, std::shared_ptr<List>, std::string,
                 std::shared_ptr<const Object>>
        v_;
};

struct Limits {
    double time_limit_s = 5.0;
    std::size_t memory_limit_bytes = 256u << 20;
    std::size_t max_steps = 50'000'000;
    std::size_t max_call_depth = 64;
    std::vector<std::string> import_allowlist = {"numeric", "stats", "signal", "nn"};
};

// Per-call resource accounting shared with native functions.
class ExecutionBudget {
public:
    explicit ExecutionBudget(const Limits& limits);

    void reset();
    // Counts one evaluation step; checks the clock periodically.
    void tick(int line);
    // Charges an allocation of `bytes`; throws memory_limit when exhausted.
    void charge(std::size_t bytes, int line);
    void charge_doubles(std::size_t n, int line) { charge(n * sizeof(double), line); }

    std::size_t steps() const { return steps_; }
    std::size_t allocated_bytes() const { return allocated_; }

private:
    const Limits* limits_;
    std::chrono::steady_clock::time_point start_;
    std::size_t steps_ = 0;
    std::size_t allocated_ = 0;
};

struct CallContext {
    ExecutionBudget& budget;
    int line;
};

using NativeFn = std::function<Value(std::span<const Value>, CallContext&)>;

struct NativeFunction {
    std::size_t min_args;
    std::size_t max_args;
    NativeFn fn;
};

using Module = std::map<std::string, NativeFunction, std::less<>>;

// Registry of importable native modules. The default registry holds
// "numeric", "stats" and "signal"; callers add others (e.g. "nn").
class ModuleRegistry {
public:
    static ModuleRegistry with_defaults();

    void add(const std::string& name, Module module);
    const Module* find(std::string_view name) const;

private:
    std::map<std::string, Module, std::less<>> modules_;
};

struct Program;  // parsed, immutable

// Parses source text. Throws ScriptError(syntax_error) with a line number.
std::shared_ptr<const Program> compile(std::string_view source);

// Names of top-level functions and their parameter counts.
std::vector<std::pair<std::string, std::size_t>> functions(const Program& program);
std::vector<std::string> imports(const Program& program);

// Executes a compiled program. Construction runs the import statements and
// evaluates top-level `let` constants under the limits. Constants in
// `globals` are visible to every function.
class Interpreter {
public:
    Interpreter(std::shared_ptr<const Program> program, Limits limits,
                std::map<std::string, Value, std::less<>> globals,
                std::shared_ptr<const ModuleRegistry> registry);
    ~Interpreter();
    Interpreter(Interpreter&&) noexcept;
    Interpreter& operator=(Interpreter&&) noexcept;

    bool has_function(std::string_view name) const;
    // Calls a top-level function with a fresh budget.
    Value call(std::string_view name, std::vector<Value> args);

    const ExecutionBudget& last_budget() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace abrforge::script
