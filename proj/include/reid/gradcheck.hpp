#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "reid/error.hpp"

namespace reid {

/// Central-difference gradient verification. `loss` is evaluated with the
/// coordinates of `x` perturbed in place; the returned value is the maximum
/// relative error against `analytic`, with denominator
/// max(|analytic|, |numeric|, eps).
template <typename S, typename F>
S finite_difference_check(F&& loss, std::span<S> x, std::span<const S> analytic, S eps) {
    if (eps <= S(0)) throw Error("finite_difference_check: eps must be positive");
    if (x.size() != analytic.size())
        throw Error("finite_difference_check: gradient size does not match input size");
    for (S v : x) {
        if (!std::isfinite(static_cast<double>(v)))
            throw Error("finite_difference_check: non-finite input");
    }

    S max_rel = S(0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const S orig = x[i];
        x[i] = orig + eps;
        const S fp = loss();
        x[i] = orig - eps;
        const S fm = loss();
        x[i] = orig;
        if (!std::isfinite(static_cast<double>(fp)) || !std::isfinite(static_cast<double>(fm)))
            throw Error("finite_difference_check: non-finite loss at perturbed point");
        const S numeric = (fp - fm) / (S(2) * eps);
        const S a = analytic[i];
        const S denom = std::max({std::abs(a), std::abs(numeric), eps});
        max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
    return max_rel;
}

/// Same check over a parameter list (e.g. all tensors of a model).
template <typename S, typename F>
S finite_difference_check_many(F&& loss, const std::vector<std::span<S>>& params,
                               const std::vector<std::span<const S>>& analytic, S eps) {
    if (params.size() != analytic.size())
        throw Error("finite_difference_check_many: parameter/gradient count mismatch");
    S max_rel = S(0);
    for (std::size_t p = 0; p < params.size(); ++p) {
        max_rel = std::max(max_rel, finite_difference_check(loss, params[p], analytic[p], eps));
    }
    return max_rel;
}

} // namespace reid
