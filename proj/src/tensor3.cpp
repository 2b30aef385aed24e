#include "microcurl/tensor3.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace microcurl {

Tensor3 Tensor3::identity()
{
    Tensor3 t;
    t(0, 0) = t(1, 1) = t(2, 2) = 1.0;
    return t;
}

Tensor3 Tensor3::outer(const Vec3& x, const Vec3& y)
{
    Tensor3 t;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) t(i, j) = x[i] * y[j];
    return t;
}

Tensor3& Tensor3::operator+=(const Tensor3& o)
{
    for (int k = 0; k < 9; ++k) a[k] += o.a[k];
    return *this;
}

Tensor3& Tensor3::operator-=(const Tensor3& o)
{
    for (int k = 0; k < 9; ++k) a[k] -= o.a[k];
    return *this;
}

Tensor3& Tensor3::operator*=(double s)
{
    for (auto& v : a) v *= s;
    return *this;
}

Tensor3 operator+(Tensor3 x, const Tensor3& y) { return x += y; }
Tensor3 operator-(Tensor3 x, const Tensor3& y) { return x -= y; }
Tensor3 operator-(Tensor3 x) { return x *= -1.0; }
Tensor3 operator*(double s, Tensor3 x) { return x *= s; }
Tensor3 operator*(Tensor3 x, double s) { return x *= s; }

Tensor3 transpose(const Tensor3& x)
{
    Tensor3 t;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) t(i, j) = x(j, i);
    return t;
}

Tensor3 sym(const Tensor3& x)
{
    Tensor3 t;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) t(i, j) = 0.5 * (x(i, j) + x(j, i));
    return t;
}

// x - sym(x) keeps sym + skew == x exact in floating point
Tensor3 skew(const Tensor3& x) { return x - sym(x); }

double tr(const Tensor3& x) { return x(0, 0) + x(1, 1) + x(2, 2); }

Tensor3 dev(const Tensor3& x)
{
    Tensor3 t = x;
    const double m = tr(x) / 3.0;
    for (int i = 0; i < 3; ++i) t(i, i) -= m;
    return t;
}

double dot(const Tensor3& x, const Tensor3& y)
{
    double s = 0.0;
    for (int k = 0; k < 9; ++k) s += x.a[k] * y.a[k];
    return s;
}

double norm(const Tensor3& x) { return std::sqrt(dot(x, x)); }

double max_abs(const Tensor3& x)
{
    double m = 0.0;
    for (double v : x.a) m = std::max(m, std::abs(v));
    return m;
}

double dot(const Vec3& x, const Vec3& y) { return x[0] * y[0] + x[1] * y[1] + x[2] * y[2]; }
double norm(const Vec3& x) { return std::sqrt(dot(x, x)); }

double ElasticModuli::m0() const { return std::min(2.0 * mu, 3.0 * lambda + 2.0 * mu); }

bool ElasticModuli::valid() const { return mu > 0.0 && 3.0 * lambda + 2.0 * mu > 0.0; }

ElasticModuli make_moduli(double mu, double lambda)
{
    ElasticModuli e{mu, lambda};
    if (!e.valid())
        throw std::invalid_argument("Lame moduli must satisfy mu > 0 and 3*lambda + 2*mu > 0");
    return e;
}

Tensor3 apply_ciso(const ElasticModuli& e, const Tensor3& x)
{
    Tensor3 t = 2.0 * e.mu * sym(x);
    const double v = e.lambda * tr(x);
    for (int i = 0; i < 3; ++i) t(i, i) += v;
    return t;
}

Tensor3 apply_ciso_inverse(const ElasticModuli& e, const Tensor3& s)
{
    Tensor3 t = (1.0 / (2.0 * e.mu)) * dev(s);
    const double v = tr(s) / (3.0 * (3.0 * e.lambda + 2.0 * e.mu));
    for (int i = 0; i < 3; ++i) t(i, i) += v;
    return t;
}

SlipSystem make_slip_system(const Vec3& l, const Vec3& nu)
{
    const double nl = norm(l), nn = norm(nu);
    if (nl == 0.0 || nn == 0.0) throw std::invalid_argument("slip system with zero vector");
    SlipSystem s;
    for (int i = 0; i < 3; ++i) {
        s.l[i] = l[i] / nl;
        s.nu[i] = nu[i] / nn;
    }
    if (std::abs(dot(s.l, s.nu)) > 1e-14) throw std::invalid_argument("slip direction not in slip plane");
    s.m = Tensor3::outer(s.l, s.nu);
    return s;
}

double resolved_shear(const Tensor3& s, const SlipSystem& sys) { return dot(s, sys.m); }

std::vector<SlipSystem> fcc_slip_family()
{
    // directions within each {111} plane signed so that they sum to zero
    struct Row {
        Vec3 n;
        Vec3 d[3];
    };
    static const Row table[4] = {
        {{1, 1, 1}, {{0, 1, -1}, {-1, 0, 1}, {1, -1, 0}}},
        {{-1, 1, 1}, {{0, 1, -1}, {1, 0, 1}, {-1, -1, 0}}},
        {{1, -1, 1}, {{0, 1, 1}, {1, 0, -1}, {-1, -1, 0}}},
        {{1, 1, -1}, {{0, 1, 1}, {-1, 0, -1}, {1, -1, 0}}},
    };
    std::vector<SlipSystem> out;
    out.reserve(12);
    for (const auto& r : table)
        for (const auto& d : r.d) out.push_back(make_slip_system(d, r.n));
    return out;
}

Tensor3 assemble_p_from_slips(std::span<const double> gamma, const std::vector<SlipSystem>& systems)
{
    if (gamma.size() != systems.size()) throw std::invalid_argument("slip count mismatch");
    Tensor3 p;
    for (std::size_t a = 0; a < systems.size(); ++a) p += gamma[a] * systems[a].m;
    return p;
}

}  // namespace microcurl
