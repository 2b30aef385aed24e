#pragma once

#include "microcurl/grid_fields.hpp"

// Plain serial versions of the stencil kernels, kept to check the OpenMP ones.
namespace microcurl::reference {

TensorField3 grad_h(const Grid& g, const VectorField3& u);
TensorField3 curl_h(const Grid& g, const TensorField3& x);
VectorField3 div_h(const Grid& g, const TensorField3& x);
VectorField3 grad_h_adjoint(const Grid& g, const TensorField3& y);
TensorField3 curl_h_adjoint(const Grid& g, const TensorField3& y);
double inner_l2(const Grid& g, const TensorField3& a, const TensorField3& b);

}  // namespace microcurl::reference
