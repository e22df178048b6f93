#include "clickpath/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "clickpath/error.hpp"

namespace clickpath {

namespace {

double evaluate(const TapedScalarFn& f) {
    Tape tape(false);
    const Var out = f(tape);
    if (out.value().size() != 1) throw ArgumentError("grad_check: function is not scalar");
    const double v = out.value()[0];
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
    return v;
}

}  // namespace

double grad_check(const TapedScalarFn& f, std::span<Var> params, double h) {
    if (params.empty()) return 0.0;
    for (Var& p : params) p.zero_grad();
    {
        Tape tape;
        const Var loss = f(tape);
        if (!std::isfinite(loss.value()[0]))
            throw NumericError("grad_check: non-finite function value");
        tape.backward(loss);
    }
    double worst = 0.0;
    for (Var& p : params) {
        Matrix& value = p.mutable_value();
        const Matrix& analytic = p.grad();
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double saved = value[i];
            value[i] = saved + h;
            const double up = evaluate(f);
            value[i] = saved - h;
            const double down = evaluate(f);
            value[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[i];
            const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace clickpath
