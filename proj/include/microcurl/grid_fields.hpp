#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "microcurl/tensor3.hpp"

namespace microcurl {

enum Face : int { XMin = 0, XMax = 1, YMin = 2, YMax = 3, ZMin = 4, ZMax = 5 };

const char* face_name(Face f);

// Uniform nodal grid on the box [0,(n1-1)h] x [0,(n2-1)h] x [0,(n3-1)h].
// Node index = i + n1*(j + n2*k), x fastest.
struct Grid {
    std::array<int, 3> n{8, 8, 8};
    double h = 1.0 / 7.0;
    std::array<bool, 6> gamma_d{};

    std::size_t size() const { return std::size_t(n[0]) * n[1] * n[2]; }
    std::size_t index(int i, int j, int k) const { return std::size_t(i) + std::size_t(n[0]) * (j + std::size_t(n[1]) * k); }
    std::array<int, 3> ijk(std::size_t idx) const;
    Vec3 coords(std::size_t idx) const;
    std::size_t stride(int axis) const;

    bool on_face(std::size_t idx, Face f) const;
    bool on_gamma_d(std::size_t idx) const;
    bool has_gamma_d() const;
    double cell_volume() const { return h * h * h; }
    std::string gamma_d_string() const;
};

// Throws std::invalid_argument on n_i < 2 or h <= 0.
Grid make_grid(std::array<int, 3> n, double h, std::array<bool, 6> gamma_d);

using ScalarField = std::vector<double>;
using VectorField3 = std::vector<Vec3>;
using TensorField3 = std::vector<Tensor3>;

// Plastic state on the dual cells (one control volume per node).
// p holds the plastic distortion; for polycrystal variants it is eps_p.
struct CellState {
    int nslip = 0;
    std::vector<double> gamma;
    std::vector<double> eta;
    TensorField3 p;
    ScalarField eta_p;

    static CellState zeros(const Grid& g, int nslip);
};

// Forward differences with the last layer of each axis padded by zero, so
// mixed differences commute and curl_h(grad_h u) vanishes identically.
TensorField3 grad_h(const Grid& g, const VectorField3& u);
TensorField3 curl_h(const Grid& g, const TensorField3& x);
VectorField3 div_h(const Grid& g, const TensorField3& x);

// Exact transposes of the forward stencils under inner_l2.
VectorField3 grad_h_adjoint(const Grid& g, const TensorField3& y);
TensorField3 curl_h_adjoint(const Grid& g, const TensorField3& y);
// Negative adjoint of grad_h: <grad_h u, X> = -<u, div_h_dual X>.
VectorField3 div_h_dual(const Grid& g, const TensorField3& x);

// Zeroes the in-face components X(a,b), b != normal axis, on Gamma_D nodes.
void apply_tangential_bc(const Grid& g, TensorField3& x);
TensorField3 tangential_projected(const Grid& g, TensorField3 x);
// Zeroes vectors on Gamma_D nodes.
void apply_dirichlet_mask(const Grid& g, VectorField3& u);

double inner_l2(const Grid& g, const TensorField3& a, const TensorField3& b);
double inner_l2(const Grid& g, const VectorField3& a, const VectorField3& b);
double inner_l2(const Grid& g, const ScalarField& a, const ScalarField& b);
double norm_l2(const Grid& g, const TensorField3& a);
double norm_l2(const Grid& g, const VectorField3& a);
double norm_l2(const Grid& g, const ScalarField& a);

// Sum of f(0..n-1) in fixed blocks, independent of the thread count.
template <class F>
double deterministic_sum(std::size_t n, F f);

// Reads MICROCURL_THREADS once and caps OpenMP accordingly.
void configure_threads();
int thread_count();

}  // namespace microcurl

#include "microcurl/detail/reduce.hpp"
