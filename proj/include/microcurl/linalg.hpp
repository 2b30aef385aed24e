#pragma once

#include <functional>
#include <span>
#include <vector>

#include "microcurl/grid_fields.hpp"

namespace microcurl {

using Vector = std::vector<double>;
using LinOp = std::function<void(const Vector&, Vector&)>;

double vdot(const Vector& a, const Vector& b);
double vnorm(const Vector& a);
void axpy(double a, const Vector& x, Vector& y);

struct CgResult {
    bool converged = false;
    int iterations = 0;
    double residual = 0.0;   // ||b - A x|| at exit
    double rhs_norm = 0.0;
    // Ritz values of the Lanczos tridiagonal built from the CG coefficients
    double ritz_min = 0.0;
    double ritz_max = 0.0;
};

// Stops when ||b - A x|| <= tol * ||b||. x is used as the initial guess.
CgResult conjugate_gradient(const LinOp& A, const Vector& b, Vector& x, double tol, int max_iter,
                            bool estimate_spectrum = false);

// Anderson mixing for a fixed-point map x -> g(x), depth m.
class AndersonMixer {
public:
    explicit AndersonMixer(int depth) : depth_(depth) {}
    // Records (x, g(x)) and returns the next input.
    Vector next(const Vector& x, const Vector& g);
    void reset();
    int size() const { return int(df_.size()); }

private:
    int depth_;
    Vector last_f_, last_g_;
    std::vector<Vector> df_, dg_;
};

// Flat views of nodal fields.
Vector flatten(const VectorField3& u);
Vector flatten(const TensorField3& x);
void unflatten(const Vector& v, VectorField3& u);
void unflatten(const Vector& v, TensorField3& x);

}  // namespace microcurl
