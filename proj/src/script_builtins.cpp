#include "script_ast.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace abrforge::script {

Value binary_op(BinOp op, const Value& a, const Value& b, ExecutionBudget& budget, int line);

namespace {

[[noreturn]] void fail(const std::string& msg, int line) {
    throw ScriptError(FailureKind::execution_error, msg, line);
}

const Vec& as_vec(const Value& v, const char* fn, CallContext& ctx) {
    if (!v.is_vector()) fail(std::string(fn) + "() expects a vector, got " + v.type_name(), ctx.line);
    return v.vector();
}

double as_num(const Value& v, const char* fn, CallContext& ctx) {
    if (!v.is_number()) fail(std::string(fn) + "() expects a number, got " + v.type_name(), ctx.line);
    return v.number();
}

std::size_t as_count(const Value& v, const char* fn, CallContext& ctx) {
    const double x = as_num(v, fn, ctx);
    if (!(x >= 0.0) || std::abs(x - std::round(x)) > 1e-9 || x > 1e15) {
        fail(std::string(fn) + "() expects a non-negative integer", ctx.line);
    }
    return static_cast<std::size_t>(std::llround(x));
}

const Vec& nonempty(const Value& v, const char* fn, CallContext& ctx) {
    const Vec& x = as_vec(v, fn, ctx);
    if (x.empty()) fail(std::string(fn) + "() of an empty vector", ctx.line);
    return x;
}

Value make_vec(Vec v, CallContext& ctx) {
    ctx.budget.charge_doubles(v.size(), ctx.line);
    return v;
}

template <typename F>
Value map_elementwise(const Value& v, const char* fn, CallContext& ctx, F f) {
    if (v.is_number()) return f(v.number());
    const Vec& x = as_vec(v, fn, ctx);
    ctx.budget.charge_doubles(x.size(), ctx.line);
    Vec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    return out;
}

template <typename F>
NativeFunction unary(const char* name, F f) {
    return {1, 1, [name, f](std::span<const Value> a, CallContext& ctx) { return map_elementwise(a[0], name, ctx, f); }};
}

double mean_of(const Vec& x) { return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size()); }

double var_of(const Vec& x) {
    const double m = mean_of(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size());
}

double median_of(Vec x) {
    std::sort(x.begin(), x.end());
    const std::size_t n = x.size();
    return n % 2 ? x[n / 2] : 0.5 * (x[n / 2 - 1] + x[n / 2]);
}

// Least-squares polynomial fit of y at x = 0..n-1; coefficients lowest order first.
Eigen::VectorXd polyfit_low_first(const Vec& y, std::size_t degree, int line) {
    const std::size_t n = y.size();
    if (degree + 1 > n) fail("polynomial degree too high for " + std::to_string(n) + " points", line);
    Eigen::MatrixXd A(n, degree + 1);
    Eigen::VectorXd b(n);
    for (std::size_t i = 0; i < n; ++i) {
        double p = 1.0;
        for (std::size_t d = 0; d <= degree; ++d) {
            A(static_cast<long>(i), static_cast<long>(d)) = p;
            p *= static_cast<double>(i);
        }
        b(static_cast<long>(i)) = y[i];
    }
    return A.colPivHouseholderQr().solve(b);
}

std::pair<double, double> linear_fit(const Vec& y) {
    const std::size_t n = y.size();
    if (n == 1) return {0.0, y[0]};
    const double xm = 0.5 * static_cast<double>(n - 1);
    const double ym = mean_of(y);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = static_cast<double>(i) - xm;
        sxy += dx * (y[i] - ym);
        sxx += dx * dx;
    }
    const double slope = sxy / sxx;
    return {slope, ym - slope * xm};
}

// Savitzky-Golay smoothing. Interior points use the centred window; the first
// and last half-windows are evaluated on the polynomial fitted to the edge
// window.
Vec savgol(const Vec& y, std::size_t window, std::size_t order, int line) {
    const std::size_t n = y.size();
    if (window % 2 == 0) fail("savgol window length must be odd", line);
    if (window > n) fail("savgol window length exceeds the signal length", line);
    if (order >= window) fail("savgol polyorder must be less than the window length", line);
    const std::size_t half = window / 2;
    Eigen::MatrixXd A(window, order + 1);
    for (std::size_t r = 0; r < window; ++r) {
        double p = 1.0;
        for (std::size_t d = 0; d <= order; ++d) {
            A(static_cast<long>(r), static_cast<long>(d)) = p;
            p *= static_cast<double>(r);
        }
    }
    const auto qr = A.colPivHouseholderQr();
    auto fit_window = [&](std::size_t start) {
        Eigen::VectorXd b(window);
        for (std::size_t r = 0; r < window; ++r) b(static_cast<long>(r)) = y[start + r];
        return Eigen::VectorXd(qr.solve(b));
    };
    auto eval = [&](const Eigen::VectorXd& c, double x) {
        double acc = 0.0, p = 1.0;
        for (long d = 0; d < c.size(); ++d) {
            acc += c(d) * p;
            p *= x;
        }
        return acc;
    };
    Vec out(n);
    const Eigen::VectorXd left = fit_window(0);
    const Eigen::VectorXd right = fit_window(n - window);
    for (std::size_t i = 0; i < n; ++i) {
        if (i < half) {
            out[i] = eval(left, static_cast<double>(i));
        } else if (i + half >= n) {
            out[i] = eval(right, static_cast<double>(i - (n - window)));
        } else {
            out[i] = eval(fit_window(i - half), static_cast<double>(half));
        }
    }
    return out;
}

Module make_builtins() {
    Module m;
    m["len"] = {1, 1, [](std::span<const Value> a, CallContext& ctx) -> Value {
                    if (a[0].is_vector()) return static_cast<double>(a[0].vector().size());
                    if (a[0].is_list()) return static_cast<double>(a[0].list().size());
                    if (a[0].is_string()) return static_cast<double>(a[0].string().size());
                    fail("len() of a " + a[0].type_name(), ctx.line);
                }};
    m["sum"] = {1, 1, [](std::span<const Value> a, CallContext& ctx) -> Value {
                    const Vec& x = as_vec(a[0], "sum", ctx);
                    return std::accumulate(x.begin(), x.end(), 0.0);
                }};
    m["mean"] = {1, 1, [](std::span<const Value> a, CallContext& ctx) -> Value {
                     return mean_of(nonempty(a[0], "mean", ctx));
                 }};
    m["var"] = {1, 1, [](std::span<const Value> a, CallContext& ctx) -> Value {
                    return var_of(nonempty(a[0], "var", ctx));
                }};
    m["std"] = {1, 1, [](std::span<const Value> a, CallContext& ctx) -> Value {
                    return std::sqrt(var_of(nonempty(a[0], "std", ctx)));
                }};
    m["median"] = {1, 1, [](std::span<const Value> a, CallContext& ctx) -> Value {
                       return median_of(nonempty(a[0], "median", ctx));
                   }};
    auto extremum = [](bool want_max) {
        return NativeFunction{1, 2, [want_max](std::span<const Value> a, CallContext& ctx) -> Value {
                                  const char* name = want_max ? "max" : "min";
                                  if (a.size() == 1) {
                                      const Vec& x = nonempty(a[0], name, ctx);
                                      return want_max ? *std::max_element(x.begin(), x.end())
                                                      : *std::min_element(x.begin(), x.end());
                                  }
                                  const Value lt = binary_op(BinOp::lt, a[0], a[1], ctx.budget, ctx.line);
                                  auto pick = [&](double x, double y) { return want_max ? std::max(x, y) : std::min(x, y); };
                                  if (lt.is_number()) return pick(as_num(a[0], name, ctx), as_num(a[1], name, ctx));
                                  const std::size_t n = lt.vector().size();
                                  Vec out(n);
                                  for (std::size_t i = 0; i < n; ++i) {
                                      const double x = a[0].is_vector() ? a[0].vector()[i] : a[0].number();
                                      const double y = a[1].is_vector() ? a[1].vector()[i] : a[1].number();
                                      out[i] = pick(x, y);
                                  }
                                  return make_vec(std::move(out), ctx);
                              }};
    };
    m["max"] = extremum(true);
    m["min"] = extremum(false);
    m["maximum"] = {2, 2, extremum(true).fn};
    m["minimum"] = {2, 2, extremum(false).fn};
    m["abs"] = unary("abs", [](double x) { return std::abs(x); });
    m["sqrt"] = unary("sqrt", [](double x) { return std::sqrt(x); });
    m["exp"] = unary("exp", [](double x) { return std::exp(x); });
    m["log"] = unary("log", [](double x) { return std::log(x); });
    m["log1p"] = unary("log1p", [](double x) { return std::log1p(x); });
    m["log10"] = unary("log10", [](double x) { return std::log10(x); });
    m["tanh"] = unary("tanh", [](double x) { return std::tanh(x); });
    m["sigmoid"] = unary("sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    m["floor"] = unary("floor", [](double x) { return std::floor(x); });
    m["ceil"] = unary("ceil", [](double x) { return std::ceil(x); });
    m["round"] = unary("round", [](double x) { return std::round(x); });
    m["sign"] = unary("sign", [](double x) { return static_cast<double>((x > 0) - (x < 0)); });
    m["isfinite"] = unary("isfinite", [](double x) { return static_cast<double>(std::isfinite(x)); });
    m["float"] = unary("float", [](double x) { return x; });
    m["int"] = unary("int", [](double x) { return std::trunc(x); });
    m["pow"] = {2, 2, [](std::span<const Value> a, CallContext& ctx) { return binary_op(BinOp::pow, a[0], a[1], ctx.budget, ctx.line); }};
    m["clip"] = {3, 3, [](std::span<const Value> a, CallContext& ctx) -> Value {
                     const double lo = as_num(a[1], "clip", ctx), hi = as_num(a[2], "clip", ctx);
                     return map_elementwise(a[0], "clip", ctx, [lo, hi](double x) { return std::min(std::max(x, lo), hi); });
                 }};
    m["zeros"] = {1, 1, [](std::span<const Value> a, CallContext& ctx) -> Value {
                      const std::size_t n = as_count(a[0], "zeros", ctx);
                      ctx.budget.charge_doubles(n, ctx.line);
                      return Vec(n, 0.0);
                  }};
    m["ones"] = {1, 1, [](std::span<const Value> a, CallContext& ctx) -> Value {
                     const std::size_t n = as_count(a[0], "ones", ctx);
                     ctx.budget.charge_doubles(n, ctx.line);
                     return Vec(n, 1.0);
                 }};
    m["full"] = {2, 2, [](std::span<const Value> a, CallContext& ctx) -> Value {
                     const std::size_t n = as_count(a[0], "full", ctx);
                     const double v = as_num(a[1], "full", ctx);
                     ctx.budget.charge_doubles(n, ctx.line);
                     return Vec(n, v);
                 }};
    m["range"] = {1, 3, [](std::span<const Value> a, CallContext& ctx) -> Value {
                      double lo = 0.0, hi, step = 1.0;
                      if (a.size() == 1) {
                          hi = as_num(a[0], "range", ctx);
                      } else {
                          lo = as_num(a[0], "range", ctx);
                          hi = as_num(a[1], "range", ctx);
                          if (a.size() == 3) step = as_num(a[2], "range", ctx);
                      }
                      if (step == 0.0) fail("range() step must not be zero", ctx.line);
                      const double count = std::max(0.0, std::ceil((hi - lo) / step));
                      if (!std::isfinite(count)) fail("range() bounds must be finite", ctx.line);
                      ctx.budget.charge_doubles(static_cast<std::size_t>(count), ctx.line);
                      Vec out(static_cast<std::size_t>(count));
                      for (std::size_t i = 0; i < out.size(); ++i) out[i] = lo + step * static_cast<double>(i);
                      return out;
                  }};
    m["linspace"] = {3, 3, [](std::span<const Value> a, CallContext& ctx) -> Value {
                         const double lo = as_num(a[0], "linspace", ctx), hi = as_num(a[1], "linspace", ctx);
                         const std::size_t n = as_count(a[2], "linspace", ctx);
                         ctx.budget.charge_doubles(n, ctx.line);
                         Vec out(n);
                         for (std::size_t i = 0; i < n; ++i) {
                             out[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
                         }
                         return out;
                     }};
    m["append"] = {2, 2, [](std::span<const Value> a, CallContext& ctx) -> Value {
                       if (a[0].is_list()) {
                           List out = a[0].list();
                           out.push_back(a[1]);
                           ctx.budget.charge(out.size() * sizeof(Value), ctx.line);
                           return out;
                       }
                       const Vec& x = as_vec(a[0], "append", ctx);
                       if (!a[1].is_number()) {
                           List out;
                           for (double v : x) out.emplace_back(v);
                           out.push_back(a[1]);
                           return out;
                       }
                       Vec out = x;
                       out.push_back(a[1].number());
                       return make_vec(std::move(out), ctx);
                   }};
    m["concat"] = {2, 2, [](std::span<const Value> a, CallContext& ctx) -> Value {
                       auto flat = [&](const Value& v) -> Vec {
                           if (v.is_number()) return Vec{v.number()};
                           return as_vec(v, "concat", ctx);
                       };
                       Vec out = flat(a[0]);
                       const Vec rhs = flat(a[1]);
                       out.insert(out.end(), rhs.begin(), rhs.end());
                       return make_vec(std::move(out), ctx);
                   }};
    m["reverse"] = {1, 1, [](std::span<const Value> a, CallContext& ctx) -> Value {
                        Vec out = as_vec(a[0], "reverse", ctx);
                        std::reverse(out.begin(), out.end());
                        return make_vec(std::move(out), ctx);
                    }};
    m["sort"] = {1, 1, [](std::span<const Value> a, CallContext& ctx) -> Value {
                     Vec out = as_vec(a[0], "sort", ctx);
                     std::sort(out.begin(), out.end());
                     return make_vec(std::move(out), ctx);
                 }};
    m["tail"] = {2, 2, [](std::span<const Value> a, CallContext& ctx) -> Value {
                     const Vec& x = as_vec(a[0], "tail", ctx);
                     const std::size_t k = std::min(as_count(a[1], "tail", ctx), x.size());
                     return make_vec(Vec(x.end() - static_cast<long>(k), x.end()), ctx);
                 }};
    m["head"] = {2, 2, [](std::span<const Value> a, CallContext& ctx) -> Value {
                     const Vec& x = as_vec(a[0], "head", ctx);
                     const std::size_t k = std::min(as_count(a[1], "head", ctx), x.size());
                     return make_vec(Vec(x.begin(), x.begin() + static_cast<long>(k)), ctx);
                 }};
    m["pad_left"] = {2, 3, [](std::span<const Value> a, CallContext& ctx) -> Value {
                         const Vec& x = as_vec(a[0], "pad_left", ctx);
                         const std::size_t n = as_count(a[1], "pad_left", ctx);
                         const double fill = a.size() == 3 ? as_num(a[2], "pad_left", ctx) : 0.0;
                         if (x.size() >= n) return make_vec(Vec(x.end() - static_cast<long>(n), x.end()), ctx);
                         Vec out(n - x.size(), fill);
                         out.insert(out.end(), x.begin(), x.end());
                         return make_vec(std::move(out), ctx);
                     }};
    m["diff"] = {1, 1, [](std::span<const Value> a, CallContext& ctx) -> Value {
                     const Vec& x = as_vec(a[0], "diff", ctx);
                     Vec out;
                     for (std::size_t i = 1; i < x.size(); ++i) out.push_back(x[i] - x[i - 1]);
                     return make_vec(std::move(out), ctx);
                 }};
    m["cumsum"] = {1, 1, [](std::span<const Value> a, CallContext& ctx) -> Value {
                       Vec out = as_vec(a[0], "cumsum", ctx);
                       for (std::size_t i = 1; i < out.size(); ++i) out[i] += out[i - 1];
                       return make_vec(std::move(out), ctx);
                   }};
    m["argmax"] = {1, 1, [](std::span<const Value> a, CallContext& ctx) -> Value {
                       const Vec& x = nonempty(a[0], "argmax", ctx);
                       return static_cast<double>(std::max_element(x.begin(), x.end()) - x.begin());
                   }};
    m["argmin"] = {1, 1, [](std::span<const Value> a, CallContext& ctx) -> Value {
                       const Vec& x = nonempty(a[0], "argmin", ctx);
                       return static_cast<double>(std::min_element(x.begin(), x.end()) - x.begin());
                   }};
    m["dot"] = {2, 2, [](std::span<const Value> a, CallContext& ctx) -> Value {
                    const Vec& x = as_vec(a[0], "dot", ctx);
                    const Vec& y = as_vec(a[1], "dot", ctx);
                    if (x.size() != y.size()) fail("dot() length mismatch", ctx.line);
                    return std::inner_product(x.begin(), x.end(), y.begin(), 0.0);
                }};
    m["norm"] = {1, 1, [](std::span<const Value> a, CallContext& ctx) -> Value {
                     const Vec& x = as_vec(a[0], "norm", ctx);
                     return std::sqrt(std::inner_product(x.begin(), x.end(), x.begin(), 0.0));
                 }};
    m["any"] = {1, 1, [](std::span<const Value> a, CallContext& ctx) -> Value {
                    const Vec& x = as_vec(a[0], "any", ctx);
                    return static_cast<double>(std::any_of(x.begin(), x.end(), [](double v) { return v != 0.0; }));
                }};
    m["all"] = {1, 1, [](std::span<const Value> a, CallContext& ctx) -> Value {
                    const Vec& x = as_vec(a[0], "all", ctx);
                    return static_cast<double>(std::all_of(x.begin(), x.end(), [](double v) { return v != 0.0; }));
                }};
    m["where"] = {3, 3, [](std::span<const Value> a, CallContext& ctx) -> Value {
                      if (a[0].is_number()) return a[0].number() != 0.0 ? a[1] : a[2];
                      const Vec& c = as_vec(a[0], "where", ctx);
                      Vec out(c.size());
                      for (std::size_t i = 0; i < c.size(); ++i) {
                          const Value& src = c[i] != 0.0 ? a[1] : a[2];
                          if (src.is_number()) out[i] = src.number();
                          else if (src.is_vector() && src.vector().size() == c.size()) out[i] = src.vector()[i];
                          else fail("where() branches must be numbers or vectors of matching length", ctx.line);
                      }
                      return make_vec(std::move(out), ctx);
                  }};
    m["vec"] = {1, 1, [](std::span<const Value> a, CallContext& ctx) -> Value {
                    if (a[0].is_vector()) return a[0];
                    if (a[0].is_number()) return make_vec(Vec{a[0].number()}, ctx);
                    if (!a[0].is_list()) fail("vec() expects a list", ctx.line);
                    Vec out;
                    for (const auto& v : a[0].list()) {
                        if (v.is_number()) out.push_back(v.number());
                        else if (v.is_vector()) out.insert(out.end(), v.vector().begin(), v.vector().end());
                        else fail("vec() elements must be numeric", ctx.line);
                    }
                    return make_vec(std::move(out), ctx);
                }};
    return m;
}

}  // namespace

const Module& builtin_functions() {
    static const Module m = make_builtins();
    return m;
}

Module numeric_module() {
    Module m;
    m["polyfit"] = {2, 2, [](std::span<const Value> a, CallContext& ctx) -> Value {
                        const Vec& y = nonempty(a[0], "polyfit", ctx);
                        const std::size_t deg = as_count(a[1], "polyfit", ctx);
                        const Eigen::VectorXd c = polyfit_low_first(y, deg, ctx.line);
                        Vec out(static_cast<std::size_t>(c.size()));
                        for (long i = 0; i < c.size(); ++i) out[static_cast<std::size_t>(c.size() - 1 - i)] = c(i);
                        return make_vec(std::move(out), ctx);
                    }};
    m["polyval"] = {2, 2, [](std::span<const Value> a, CallContext& ctx) -> Value {
                        const Vec& c = nonempty(a[0], "polyval", ctx);
                        return map_elementwise(a[1], "polyval", ctx, [&c](double x) {
                            double acc = 0.0;
                            for (double k : c) acc = acc * x + k;
                            return acc;
                        });
                    }};
    m["interp"] = {3, 3, [](std::span<const Value> a, CallContext& ctx) -> Value {
                       const Vec& xp = nonempty(a[1], "interp", ctx);
                       const Vec& fp = nonempty(a[2], "interp", ctx);
                       if (xp.size() != fp.size()) fail("interp() xp and fp lengths differ", ctx.line);
                       return map_elementwise(a[0], "interp", ctx, [&](double x) {
                           if (x <= xp.front()) return fp.front();
                           if (x >= xp.back()) return fp.back();
                           const auto it = std::upper_bound(xp.begin(), xp.end(), x);
                           const std::size_t j = static_cast<std::size_t>(it - xp.begin());
                           const double t = (x - xp[j - 1]) / (xp[j] - xp[j - 1]);
                           return fp[j - 1] + t * (fp[j] - fp[j - 1]);
                       });
                   }};
    return m;
}

Module stats_module() {
    Module m;
    m["linregress"] = {1, 1, [](std::span<const Value> a, CallContext& ctx) -> Value {
                           const auto [slope, intercept] = linear_fit(nonempty(a[0], "linregress", ctx));
                           return make_vec(Vec{slope, intercept}, ctx);
                       }};
    m["slope"] = {1, 1, [](std::span<const Value> a, CallContext& ctx) -> Value {
                      return linear_fit(nonempty(a[0], "slope", ctx)).first;
                  }};
    m["predict_next"] = {1, 2, [](std::span<const Value> a, CallContext& ctx) -> Value {
                             const Vec& y = nonempty(a[0], "predict_next", ctx);
                             const double ahead = a.size() == 2 ? as_num(a[1], "predict_next", ctx) : 1.0;
                             const auto [slope, intercept] = linear_fit(y);
                             return intercept + slope * (static_cast<double>(y.size()) - 1.0 + ahead);
                         }};
    m["percentile"] = {2, 2, [](std::span<const Value> a, CallContext& ctx) -> Value {
                           Vec x = nonempty(a[0], "percentile", ctx);
                           const double q = as_num(a[1], "percentile", ctx);
                           if (q < 0.0 || q > 100.0) fail("percentile() q must be in [0, 100]", ctx.line);
                           std::sort(x.begin(), x.end());
                           const double pos = q / 100.0 * static_cast<double>(x.size() - 1);
                           const auto lo = static_cast<std::size_t>(std::floor(pos));
                           const auto hi = std::min(lo + 1, x.size() - 1);
                           return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
                       }};
    m["zscore"] = {1, 1, [](std::span<const Value> a, CallContext& ctx) -> Value {
                       const Vec& x = nonempty(a[0], "zscore", ctx);
                       const double mu = mean_of(x), sd = std::sqrt(var_of(x));
                       Vec out(x.size());
                       for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mu) / sd;
                       return make_vec(std::move(out), ctx);
                   }};
    m["corr"] = {2, 2, [](std::span<const Value> a, CallContext& ctx) -> Value {
                     const Vec& x = nonempty(a[0], "corr", ctx);
                     const Vec& y = nonempty(a[1], "corr", ctx);
                     if (x.size() != y.size()) fail("corr() length mismatch", ctx.line);
                     const double mx = mean_of(x), my = mean_of(y);
                     double sxy = 0.0, sxx = 0.0, syy = 0.0;
                     for (std::size_t i = 0; i < x.size(); ++i) {
                         sxy += (x[i] - mx) * (y[i] - my);
                         sxx += (x[i] - mx) * (x[i] - mx);
                         syy += (y[i] - my) * (y[i] - my);
                     }
                     return sxy / std::sqrt(sxx * syy);
                 }};
    return m;
}

Module signal_module() {
    Module m;
    m["savgol"] = {3, 3, [](std::span<const Value> a, CallContext& ctx) -> Value {
                       const Vec& y = nonempty(a[0], "savgol", ctx);
                       return make_vec(savgol(y, as_count(a[1], "savgol", ctx), as_count(a[2], "savgol", ctx), ctx.line), ctx);
                   }};
    m["ema"] = {2, 2, [](std::span<const Value> a, CallContext& ctx) -> Value {
                    Vec out = nonempty(a[0], "ema", ctx);
                    const double alpha = as_num(a[1], "ema", ctx);
                    if (!(alpha > 0.0 && alpha <= 1.0)) fail("ema() alpha must be in (0, 1]", ctx.line);
                    for (std::size_t i = 1; i < out.size(); ++i) out[i] = alpha * out[i] + (1.0 - alpha) * out[i - 1];
                    return make_vec(std::move(out), ctx);
                }};
    m["moving_average"] = {2, 2, [](std::span<const Value> a, CallContext& ctx) -> Value {
                               const Vec& x = nonempty(a[0], "moving_average", ctx);
                               const std::size_t w = as_count(a[1], "moving_average", ctx);
                               if (w == 0) fail("moving_average() window must be >= 1", ctx.line);
                               Vec out(x.size());
                               double acc = 0.0;
                               for (std::size_t i = 0; i < x.size(); ++i) {
                                   acc += x[i];
                                   if (i >= w) acc -= x[i - w];
                                   out[i] = acc / static_cast<double>(std::min(i + 1, w));
                               }
                               return make_vec(std::move(out), ctx);
                           }};
    m["detrend"] = {1, 1, [](std::span<const Value> a, CallContext& ctx) -> Value {
                        const Vec& y = nonempty(a[0], "detrend", ctx);
                        const auto [slope, intercept] = linear_fit(y);
                        Vec out(y.size());
                        for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] - (intercept + slope * static_cast<double>(i));
                        return make_vec(std::move(out), ctx);
                    }};
    return m;
}

}  // namespace abrforge::script
