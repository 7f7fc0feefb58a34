#pragma once

// Central finite-difference gradient checking. Runs in double precision;
// single-precision tapes are too noisy for a 1e-5 step.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "loco/tensor.hpp"

namespace loco {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst;  // "param[i]" of the worst element
    bool ok(double tol) const { return max_rel_err < tol; }
};

// fn must rebuild the graph from scratch on the given tape and return the
// scalar loss. Analytic gradients are compared against
// (f(x+h) - f(x-h)) / 2h elementwise for every listed parameter; the error
// is |a - f| / max(1, |a|, |f|).
inline GradCheckResult gradcheck(const std::function<TensorT<double>(TapeT<double>&)>& fn,
                                 std::vector<TensorT<double>> params,
                                 const std::vector<std::string>& names = {},
                                 double step = 1e-5) {
    GradCheckResult res;
    for (auto& p : params) p.zero_grad();
    {
        TapeT<double> tape;
        TensorT<double> loss = fn(tape);
        tape.backward(loss);
    }
    for (size_t pi = 0; pi < params.size(); ++pi) {
        TensorT<double>& p = params[pi];
        for (int i = 0; i < p.numel(); ++i) {
            const double orig = p[i];
            p[i] = orig + step;
            TapeT<double> t1;
            const double fp = fn(t1)[0];
            p[i] = orig - step;
            TapeT<double> t2;
            const double fm = fn(t2)[0];
            p[i] = orig;
            const double fd = (fp - fm) / (2.0 * step);
            const double an = (*p.grad)[i];
            const double err = std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
            if (err > res.max_rel_err) {
                res.max_rel_err = err;
                const std::string name =
                    pi < names.size() ? names[pi] : ("param" + std::to_string(pi));
                res.worst = name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return res;
}

}  // namespace loco
