#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "dcan/ops.hpp"
#include "dcan/tensor.hpp"

namespace dcan {

// Compares reverse-mode gradients against central differences. f must be a
// deterministic function of x (dropout disabled or its mask frozen); f may
// capture other tensors, which are held fixed. Vector-valued f is reduced to a
// scalar through a fixed random projection so one backward pass checks every
// output. Returns max over coordinates of
//   |analytic - numeric| / max(1, |analytic|, |numeric|).
template <typename T>
double grad_check(const std::function<Tensor<T>(Tensor<T>&)>& f, Tensor<T>& x,
                  double epsilon = 1e-5) {
    // Two tape-free evaluations must agree bitwise, otherwise the caller
    // passed a non-deterministic computation.
    Tensor<T> probe1 = f(x);
    Tensor<T> probe2 = f(x);
    if (probe1.shape() != probe2.shape())
        throw ContractViolation("grad_check: f changed output shape between calls");
    for (int64_t i = 0; i < probe1.numel(); ++i)
        if (probe1.values()[i] != probe2.values()[i])
            throw ContractViolation("grad_check: f is not deterministic");

    std::vector<T> proj(static_cast<size_t>(probe1.numel()));
    if (proj.size() == 1) {
        proj[0] = T(1);
    } else {
        RngStream rng(0x5eedc0de);
        for (auto& w : proj) w = T(rng.uniform(-1.0, 1.0));
    }

    const bool had_rg = x.requires_grad();
    x.set_requires_grad(true);
    x.zero_grad();

    std::vector<double> analytic(static_cast<size_t>(x.numel()));
    {
        Tape<T> tape;
        typename Tape<T>::Scope scope(tape);
        Tensor<T> y = f(x);
        Tensor<T> s = dot_const(y, proj);
        tape.backward(s);
        auto gx = x.grad();
        for (size_t i = 0; i < analytic.size(); ++i) analytic[i] = static_cast<double>(gx[i]);
    }

    const auto project = [&](const Tensor<T>& y) {
        double acc = 0.0;
        auto yv = y.values();
        for (size_t i = 0; i < proj.size(); ++i)
            acc += static_cast<double>(proj[i]) * static_cast<double>(yv[i]);
        return acc;
    };

    double max_err = 0.0;
    auto xv = x.values();
    for (int64_t i = 0; i < x.numel(); ++i) {
        const T saved = xv[i];
        xv[i] = saved + T(epsilon);
        const double up = project(f(x));
        xv[i] = saved - T(epsilon);
        const double down = project(f(x));
        xv[i] = saved;
        const double numeric = (up - down) / (2.0 * epsilon);
        const double a = analytic[static_cast<size_t>(i)];
        const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
        max_err = std::max(max_err, err);
    }

    x.set_requires_grad(had_rg);
    return max_err;
}

}  // namespace dcan
