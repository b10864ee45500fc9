#include "mmdiff/quadrature.hpp"

#include "mmdiff/error.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>
#include <queue>
#include <sstream>
#include <vector>

namespace mmdiff {

namespace {

using Rule = boost::math::quadrature::gauss_kronrod<double, 61>;

struct Panel {
    double a;
    double b;
    double value;
    double error;
    double l1;
    bool operator<(const Panel& other) const { return error < other.error; }
};

Panel evaluate(const std::function<double(double)>& f, double a, double b) {
    Panel p{a, b, 0.0, 0.0, 0.0};
    // depth 0 gives the single-panel Kronrod estimate and its Gauss difference
    p.value = Rule::integrate(f, a, b, 0, 0.0, &p.error, &p.l1);
    // Boost scales the value and L1 by the half-width at depth 0 but not the
    // error, which is left in units of the reference interval [-1, 1].
    p.error *= 0.5 * std::abs(b - a);
    if (!std::isfinite(p.value) || !std::isfinite(p.error)) {
        throw ConvergenceError("integrate: non-finite integrand value");
    }
    return p;
}

// Maps an infinite range onto a finite one so the panel rule applies.
QuadratureResult finite_range(const std::function<double(double)>& f, double a, double b,
                              double rel_tol, double abs_tol, unsigned max_panels);

QuadratureResult adapt(const std::function<double(double)>& f, double a, double b, double rel_tol,
                       double abs_tol, unsigned max_panels) {
    std::priority_queue<Panel> heap;
    Panel first = evaluate(f, a, b);
    double value = first.value;
    double error = first.error;
    double l1 = first.l1;
    heap.push(first);
    const double eps = std::numeric_limits<double>::epsilon();
    auto bound = [&] { return std::max({rel_tol * std::abs(value), abs_tol, 50.0 * eps * l1}); };

    while (error > bound() && heap.size() < max_panels) {
        Panel worst = heap.top();
        double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > std::min(worst.a, worst.b) && mid < std::max(worst.a, worst.b))) break;
        heap.pop();
        Panel left = evaluate(f, worst.a, mid);
        Panel right = evaluate(f, mid, worst.b);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        l1 += left.l1 + right.l1 - worst.l1;
        heap.push(left);
        heap.push(right);
    }
    // re-sum to shed the drift of the running totals
    value = 0.0;
    error = 0.0;
    l1 = 0.0;
    while (!heap.empty()) {
        value += heap.top().value;
        error += heap.top().error;
        l1 += heap.top().l1;
        heap.pop();
    }
    double allowed = std::max({rel_tol * std::abs(value), abs_tol, 50.0 * eps * l1});
    if (error > 100.0 * allowed && error > 1e-300) {
        std::ostringstream os;
        os << "integrate: error estimate " << error << " exceeds tolerance on [" << a << ", " << b
           << "], partial value " << value;
        throw ConvergenceError(os.str());
    }
    return {value, error};
}

QuadratureResult finite_range(const std::function<double(double)>& f, double a, double b,
                              double rel_tol, double abs_tol, unsigned max_panels) {
    if (std::isinf(a) && std::isinf(b)) {
        // x = t / (1 - t^2) on (-1, 1)
        auto g = [&f](double t) {
            double inv = 1.0 / (1.0 - t * t);
            double x = t * inv;
            double w = (1.0 + t * t) * inv * inv;
            double v = f(x);
            return v == 0.0 ? 0.0 : v * w;
        };
        return adapt(g, -1.0, 1.0, rel_tol, abs_tol, max_panels);
    }
    if (std::isinf(b)) {
        // x = a + t / (1 - t) on (0, 1)
        auto g = [&f, a](double t) {
            double inv = 1.0 / (1.0 - t);
            double v = f(a + t * inv);
            return v == 0.0 ? 0.0 : v * inv * inv;
        };
        return adapt(g, 0.0, 1.0, rel_tol, abs_tol, max_panels);
    }
    auto g = [&f, b](double t) {
        double inv = 1.0 / (1.0 - t);
        double v = f(b - t * inv);
        return v == 0.0 ? 0.0 : v * inv * inv;
    };
    return adapt(g, 0.0, 1.0, rel_tol, abs_tol, max_panels);
}

}  // namespace

QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           double rel_tol, double abs_tol, unsigned max_panels) {
    if (a == b) return {0.0, 0.0};
    if (std::isnan(a) || std::isnan(b)) throw std::invalid_argument("integrate: NaN limit");
    if (a > b) {
        auto r = integrate(f, b, a, rel_tol, abs_tol, max_panels);
        return {-r.value, r.error};
    }
    if (std::isinf(a) || std::isinf(b)) return finite_range(f, a, b, rel_tol, abs_tol, max_panels);
    return adapt(f, a, b, rel_tol, abs_tol, max_panels);
}

}  // namespace mmdiff
