#include "abrforge/script.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace abrforge::script;

namespace {

Value run(const std::string& src, const std::string& fn = "f", std::vector<Value> args = {},
          Limits limits = {}) {
    Interpreter interp(compile(src), std::move(limits), {}, std::make_shared<ModuleRegistry>(ModuleRegistry::with_defaults()));
    return interp.call(fn, std::move(args));
}

FailureKind failure_of(const std::string& src, Limits limits = {}) {
    try {
        run(src, "f", {}, std::move(limits));
    } catch (const ScriptError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected a ScriptError";
    return FailureKind::invalid_output;
}

}  // namespace

TEST(Script, Arithmetic) {
    EXPECT_DOUBLE_EQ(run("fn f() { return 1 + 2 * 3 - 4 / 2; }").number(), 5.0);
    EXPECT_DOUBLE_EQ(run("fn f() { return 2 ** 10 % 1000; }").number(), 24.0);
    EXPECT_DOUBLE_EQ(run("fn f() { return -3 ** 2; }").number(), -9.0);
    EXPECT_TRUE(std::isinf(run("fn f() { return 1 / 0; }").number()));
}

TEST(Script, VectorsBroadcastAndIndex) {
    const Value v = run("fn f() { let x = [1, 2, 3]; x[0] = 10; return x * 2 + 1; }");
    ASSERT_TRUE(v.is_vector());
    EXPECT_EQ(v.vector(), (Vec{21, 5, 7}));
    EXPECT_DOUBLE_EQ(run("fn f() { let x = [1, 2, 3]; return x[-1]; }").number(), 3.0);
    EXPECT_EQ(run("fn f() { let x = [1, 2, 3, 4]; return x[1:3]; }").vector(), (Vec{2, 3}));
}

TEST(Script, ArgumentsArePassedByValue) {
    const Value input(Vec{1.0, 2.0});
    run("fn f(x) { x[0] = 99; x += 1; return 0; }", "f", {input});
    EXPECT_EQ(input.vector(), (Vec{1.0, 2.0}));
}

TEST(Script, ControlFlow) {
    const std::string src = R"(
        fn f(n) {
            let acc = 0;
            for i in range(n) {
                if i % 2 == 0 { continue; }
                acc += i;
                if acc > 100 { break; }
            }
            let k = 0;
            while k < 3 { k = k + 1; }
            return acc + k;
        }
    )";
    EXPECT_DOUBLE_EQ(run(src, "f", {Value(10.0)}).number(), 1 + 3 + 5 + 7 + 9 + 3);
}

TEST(Script, ConstantsAndUserFunctions) {
    const std::string src = R"(
        let SCALE = 4;
        fn helper(x) { return x / SCALE; }
        fn f() { return helper(8) + helper(4); }
    )";
    EXPECT_DOUBLE_EQ(run(src).number(), 3.0);
}

TEST(Script, ModulesNeedImport) {
    EXPECT_EQ(failure_of("fn f() { return stats.slope([1, 2, 3]); }"), FailureKind::execution_error);
    EXPECT_DOUBLE_EQ(run("import stats; fn f() { return stats.slope([1, 3, 5]); }").number(), 2.0);
}

TEST(Script, DisallowedImport) {
    EXPECT_EQ(failure_of("import os; fn f() { return 0; }"), FailureKind::disallowed_import);
    Limits narrow;
    narrow.import_allowlist = {"numeric"};
    EXPECT_EQ(failure_of("import stats; fn f() { return 0; }", narrow), FailureKind::disallowed_import);
}

TEST(Script, SyntaxErrorsCarryLines) {
    try {
        compile("fn f() {\n  let x = ;\n}");
        FAIL();
    } catch (const ScriptError& e) {
        EXPECT_EQ(e.kind(), FailureKind::syntax_error);
        EXPECT_EQ(e.line(), 2);
    }
    EXPECT_THROW(compile("fn f() { return g(x=1); }"), ScriptError);
}

TEST(Script, UndefinedVariableIsExecutionError) {
    EXPECT_EQ(failure_of("fn f() { return missing_value * 2; }"), FailureKind::execution_error);
}

TEST(Script, Limits) {
    Limits fast;
    fast.time_limit_s = 0.2;
    EXPECT_EQ(failure_of("fn f() { let x = 0; while true { x = x + 1; } return x; }", fast), FailureKind::timeout);
    Limits small;
    small.memory_limit_bytes = 1 << 20;
    EXPECT_EQ(failure_of("fn f() { return zeros(1000000); }", small), FailureKind::memory_limit);
    EXPECT_EQ(failure_of("fn f() { return f(); }"), FailureKind::execution_error);
}

TEST(Script, VectorTruthinessIsAnError) {
    EXPECT_EQ(failure_of("fn f() { if [1, 2] { return 1; } return 0; }"), FailureKind::execution_error);
}

TEST(Script, StatsAndSignal) {
    const Value lr = run("import stats; fn f() { return stats.linregress([2, 4, 6, 8]); }");
    EXPECT_NEAR(lr.vector()[0], 2.0, 1e-12);
    EXPECT_NEAR(lr.vector()[1], 2.0, 1e-12);
    EXPECT_NEAR(run("import stats; fn f() { return stats.predict_next([1, 2, 3]); }").number(), 4.0, 1e-12);
    // A quadratic is reproduced exactly by a second-order Savitzky-Golay filter.
    const Value sg = run("import signal; fn f() { let x = range(9); return signal.savgol(x * x, 5, 2); }");
    for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(sg.vector()[i], double(i * i), 1e-9);
    const Value pf = run("import numeric; fn f() { return numeric.polyfit([1, 3, 5, 7], 1); }");
    EXPECT_NEAR(pf.vector()[0], 2.0, 1e-12);
    EXPECT_NEAR(pf.vector()[1], 1.0, 1e-12);
    EXPECT_NEAR(run("import stats; fn f() { return stats.percentile([1, 2, 3, 4], 50); }").number(), 2.5, 1e-12);
}

TEST(Script, Builtins) {
    EXPECT_DOUBLE_EQ(run("fn f() { return mean([1, 2, 3, 6]); }").number(), 3.0);
    EXPECT_EQ(run("fn f() { return diff([1, 4, 9]); }").vector(), (Vec{3, 5}));
    EXPECT_EQ(run("fn f() { return clip([-2, 0.5, 3], -1, 1); }").vector(), (Vec{-1, 0.5, 1}));
    EXPECT_EQ(run("fn f() { return pad_left([1, 2], 4); }").vector(), (Vec{0, 0, 1, 2}));
    EXPECT_EQ(run("fn f() { return tail([1, 2, 3], 2); }").vector(), (Vec{2, 3}));
    EXPECT_DOUBLE_EQ(run("fn f() { return max(3, 7); }").number(), 7.0);
    EXPECT_DOUBLE_EQ(run("fn f() { return len([[1, 2], 3]); }").number(), 2.0);
}

TEST(Script, FunctionsListing) {
    const auto prog = compile("fn a(x, y) { return x; } fn b() { return 1; }");
    const auto fns = functions(*prog);
    ASSERT_EQ(fns.size(), 2u);
    EXPECT_EQ(fns[0].first, "a");
    EXPECT_EQ(fns[0].second, 2u);
}
