#pragma once

// Symmetric tridiagonal eigensolver: implicit-shift QL with eigenvector
// accumulation, in the lineage of the Algol tql2 procedure and its EISPACK
// descendants. Eigenvalues are returned ascending, eigenvectors orthonormal.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace qbatt {

struct SymTridiagonal {
  std::vector<double> diag;     // n entries
  std::vector<double> offdiag;  // n-1 entries, coupling i <-> i+1

  std::size_t size() const { return diag.size(); }
};

/// Dense spectral factorization H = Z diag(lambda) Z^T of a symmetric
/// tridiagonal matrix. Z is row-major n x n; column j holds eigenvector j.
struct SpectralDecomposition {
  std::size_t n = 0;
  std::vector<double> eigenvalues;
  std::vector<double> z;  // row-major, z[i*n + j] = component i of vector j

  double vec(std::size_t i, std::size_t j) const { return z[i * n + j]; }
};

inline SpectralDecomposition eigendecompose(const SymTridiagonal& h) {
  const std::size_t n = h.size();
  if (n == 0) throw std::invalid_argument("eigendecompose: empty matrix");
  if (h.offdiag.size() + 1 != n)
    throw std::invalid_argument("eigendecompose: offdiag must have n-1 entries");

  SpectralDecomposition out;
  out.n = n;
  out.eigenvalues = h.diag;
  out.z.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) out.z[i * n + i] = 1.0;
  if (n == 1) return out;

  std::vector<double>& d = out.eigenvalues;
  std::vector<double> e(h.offdiag);
  e.push_back(0.0);
  std::vector<double>& z = out.z;

  const double eps = std::numeric_limits<double>::epsilon();
  for (std::size_t l = 0; l < n; ++l) {
    int iter = 0;
    std::size_t m;
    do {
      for (m = l; m + 1 < n; ++m) {
        // Split where the offdiagonal is negligible against its neighbours.
        const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= eps * dd) break;
      }
      if (m != l) {
        if (++iter == 50)
          throw std::runtime_error("eigendecompose: QL failed to converge at index " +
                                   std::to_string(l));
        // Implicit shift from the 2x2 corner.
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + (g >= 0.0 ? std::abs(r) : -std::abs(r)));
        double s = 1.0, c = 1.0, p = 0.0;
        bool deflated = false;
        for (std::size_t i = m; i-- > l;) {
          double f = s * e[i];
          const double b = c * e[i];
          r = std::hypot(f, g);
          e[i + 1] = r;
          if (r == 0.0) {
            // Deflate: recover and restart the sweep.
            d[i + 1] -= p;
            e[m] = 0.0;
            deflated = true;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + 2.0 * c * b;
          p = s * r;
          d[i + 1] = g + p;
          g = c * r - b;
          for (std::size_t k = 0; k < n; ++k) {
            f = z[k * n + i + 1];
            z[k * n + i + 1] = s * z[k * n + i] + c * f;
            z[k * n + i] = c * z[k * n + i] - s * f;
          }
        }
        if (deflated) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }

  // Sort ascending, permuting eigenvector columns alongside.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
  std::vector<double> d_sorted(n);
  std::vector<double> z_sorted(n * n);
  for (std::size_t j = 0; j < n; ++j) {
    d_sorted[j] = d[order[j]];
    for (std::size_t i = 0; i < n; ++i) z_sorted[i * n + j] = z[i * n + order[j]];
  }
  out.eigenvalues = std::move(d_sorted);
  out.z = std::move(z_sorted);
  return out;
}

} // namespace qbatt
