#pragma once

#include <cmath>
#include <vector>

namespace gps {

// Graded panel mesh with Gauss-Legendre order 4 per panel. Panels shrink
// geometrically (ratio 2) toward the requested singular end(s); the
// integrable power singularities of the kernels then converge algebraically.
struct Quad1D {
    std::vector<double> x;
    std::vector<double> w;
};

namespace quad_detail {
// 4-point Gauss-Legendre on [-1, 1]
constexpr double kGlX[4] = {-0.8611363115940526, -0.3399810435848563,
                            0.3399810435848563, 0.8611363115940526};
constexpr double kGlW[4] = {0.3478548451374538, 0.6521451548625461,
                            0.6521451548625461, 0.3478548451374538};

inline void add_panel(Quad1D& q, double a, double b) {
    double c = 0.5 * (a + b), h = 0.5 * (b - a);
    for (int i = 0; i < 4; ++i) {
        q.x.push_back(c + h * kGlX[i]);
        q.w.push_back(h * kGlW[i]);
    }
}

// geometric subdivision of [a,b] refined toward a; covers [a,b] exactly
inline void graded_panels_down(Quad1D& q, double a, double b, int panels) {
    double len = b - a;
    double lo = a + len * std::pow(0.5, panels);
    add_panel(q, a, lo);
    for (int j = panels; j >= 1; --j) {
        double hi = a + len * std::pow(0.5, j - 1);
        add_panel(q, lo, hi);
        lo = hi;
    }
}

inline void graded_panels_up(Quad1D& q, double a, double b, int panels) {
    double len = b - a;
    double hi = b - len * std::pow(0.5, panels);
    std::vector<std::pair<double, double>> ps;
    ps.push_back({hi, b});
    for (int j = panels; j >= 1; --j) {
        double lo = b - len * std::pow(0.5, j - 1);
        ps.push_back({lo, hi});
        hi = lo;
    }
    for (auto it = ps.rbegin(); it != ps.rend(); ++it) add_panel(q, it->first, it->second);
}
} // namespace quad_detail

// grade toward both ends of [a,b]; `panels` panels per half
inline Quad1D graded_both(double a, double b, int panels) {
    Quad1D q;
    if (!(b > a)) return q;
    double mid = 0.5 * (a + b);
    quad_detail::graded_panels_down(q, a, mid, panels);
    quad_detail::graded_panels_up(q, mid, b, panels);
    return q;
}

inline Quad1D graded_down(double a, double b, int panels) {
    Quad1D q;
    if (!(b > a)) return q;
    quad_detail::graded_panels_down(q, a, b, panels);
    return q;
}

} // namespace gps
