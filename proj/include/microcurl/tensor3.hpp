#pragma once

#include <array>
#include <span>
#include <vector>

namespace microcurl {

using Vec3 = std::array<double, 3>;

// Row-major 3x3 tensor, a(i,j) = a[3*i+j].
struct Tensor3 {
    std::array<double, 9> a{};

    double& operator()(int i, int j) { return a[3 * i + j]; }
    double operator()(int i, int j) const { return a[3 * i + j]; }

    static Tensor3 zero() { return Tensor3{}; }
    static Tensor3 identity();
    static Tensor3 outer(const Vec3& x, const Vec3& y);

    Tensor3& operator+=(const Tensor3& o);
    Tensor3& operator-=(const Tensor3& o);
    Tensor3& operator*=(double s);

    bool operator==(const Tensor3& o) const = default;
};

Tensor3 operator+(Tensor3 x, const Tensor3& y);
Tensor3 operator-(Tensor3 x, const Tensor3& y);
Tensor3 operator-(Tensor3 x);
Tensor3 operator*(double s, Tensor3 x);
Tensor3 operator*(Tensor3 x, double s);

Tensor3 transpose(const Tensor3& x);
Tensor3 sym(const Tensor3& x);
Tensor3 skew(const Tensor3& x);
Tensor3 dev(const Tensor3& x);
double tr(const Tensor3& x);
// <A,B> = tr(A B^T)
double dot(const Tensor3& x, const Tensor3& y);
double norm(const Tensor3& x);
double max_abs(const Tensor3& x);

double dot(const Vec3& x, const Vec3& y);
double norm(const Vec3& x);

struct ElasticModuli {
    double mu = 1.0;
    double lambda = 1.0;

    double kappa() const { return lambda + 2.0 * mu / 3.0; }
    double m0() const;
    bool valid() const;
};

// Throws std::invalid_argument unless mu > 0 and 3 lambda + 2 mu > 0.
ElasticModuli make_moduli(double mu, double lambda);

Tensor3 apply_ciso(const ElasticModuli& e, const Tensor3& x);
Tensor3 apply_ciso_inverse(const ElasticModuli& e, const Tensor3& s);

struct SlipSystem {
    Vec3 l{};
    Vec3 nu{};
    Tensor3 m{};
};

// Normalizes l and nu; throws if they are degenerate or not orthogonal.
SlipSystem make_slip_system(const Vec3& l, const Vec3& nu);

double resolved_shear(const Tensor3& s, const SlipSystem& sys);

std::vector<SlipSystem> fcc_slip_family();

Tensor3 assemble_p_from_slips(std::span<const double> gamma, const std::vector<SlipSystem>& systems);

}  // namespace microcurl
