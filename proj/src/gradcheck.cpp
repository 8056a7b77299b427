#include "toalign/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "toalign/errors.hpp"

namespace toalign {

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-6});
    return std::fabs(analytic - numeric) / denom;
}

double central_difference(const std::function<double()>& eval, TensorPtr wrt, std::size_t index,
                          double step) {
    if (index >= wrt->numel()) throw IndexError("central_difference: index out of range");
    const double saved = wrt->data[index];
    wrt->data[index] = saved + step;
    const double up = eval();
    wrt->data[index] = saved - step;
    const double down = eval();
    wrt->data[index] = saved;
    return (up - down) / (2.0 * step);
}

GradCheckReport check_gradient(const std::function<double()>& eval, TensorPtr wrt,
                               const std::vector<double>& analytic, double step,
                               const std::vector<std::size_t>& indices) {
    if (analytic.size() != wrt->numel()) {
        throw ContractError("check_gradient: analytic gradient size mismatch");
    }
    GradCheckReport report;
    auto probe = [&](std::size_t i) {
        const double fd = central_difference(eval, wrt, i, step);
        report.max_rel_err = std::max(report.max_rel_err, relative_error(analytic[i], fd));
        ++report.checked;
    };
    if (indices.empty()) {
        for (std::size_t i = 0; i < wrt->numel(); ++i) probe(i);
    } else {
        for (std::size_t i : indices) probe(i);
    }
    return report;
}

}  // namespace toalign
