#pragma once

#include <complex>
#include <vector>

namespace surfpde {

using Cplx = std::complex<double>;

struct HankelTriple {
  Cplx h0, h1, h2;
};

// Hankel functions of the first kind, orders 0..2, at a common argument.
// Ascending series in compensated (double-double) arithmetic below the
// crossover radius, Poincare asymptotic expansion above; relative accuracy
// ~1e-12 for 1e-8 <= |z| <= 1e3 in the closed upper half-plane (arguments
// pushed slightly below the real axis by roundoff are tolerated).
HankelTriple hankel(Cplx z);

// sqrt with Im >= 0, ties broken to Re >= 0.  This is the branch used for
// kappa = sqrt(c/a) throughout: it keeps H0(kappa r) decaying for Re c < 0.
Cplx sqrt_up(Cplx w);

// Orthonormal Koornwinder basis on T0 = {(u,v): u,v >= 0, u+v <= 1} with
// respect to the area measure, ordered by total degree k then secondary
// index j; n_p = p(p+1)/2 values, the first being the constant sqrt(2).
// Evaluated by singularity-free recurrences (stable at v = 1).
void koornwinder(int p, double u, double v, double* out);
std::vector<double> koornwinder(int p, double u, double v);

}  // namespace surfpde
