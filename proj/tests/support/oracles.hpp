#pragma once

// Reference implementations written as plain loops over std::vector, sharing
// no code with the library. Tests compare library outputs against these.

#include <array>
#include <complex>
#include <cstddef>
#include <vector>

namespace oracle {

struct Grid {
    std::size_t h = 0;
    std::size_t w = 0;
    std::vector<double> v;

    Grid() = default;
    Grid(std::size_t rows, std::size_t cols, double fill = 0.0) : h(rows), w(cols), v(rows * cols, fill) {}
    Grid(std::size_t rows, std::size_t cols, std::vector<double> values) : h(rows), w(cols), v(std::move(values)) {}
    double& operator()(std::size_t i, std::size_t j) { return v[i * w + j]; }
    double operator()(std::size_t i, std::size_t j) const { return v[i * w + j]; }
};

using cplx = std::complex<double>;

/// Direct O(n^2) forward DFT, X[u,v] = sum x[m,n] exp(-2 pi i (um/H + vn/W)).
std::vector<cplx> naive_dft2(const std::vector<cplx>& x, std::size_t h, std::size_t w, bool inverse = false);
std::vector<cplx> naive_dft2(const Grid& x);

/// Ideal low-pass: keeps the frequencies whose centered position falls in the
/// k x k window around (H/2, W/2), then returns the real part of the inverse.
Grid lowpass(const Grid& x, std::size_t k);

/// Direct convolution on one batch item: x [Cin][H][W], w [Cout][Cin/groups][k][k].
/// "Same" padding of k/2, zero or replicate.
std::vector<double> conv2d_direct(const std::vector<double>& x, std::size_t cin, std::size_t h, std::size_t w,
                                  const std::vector<double>& weight, std::size_t cout, std::size_t k,
                                  const std::vector<double>& bias, std::size_t stride = 1, std::size_t groups = 1,
                                  bool replicate = false);

// Morphology with replicate padding.
Grid dilate(const Grid& y);
Grid erode(const Grid& y);
Grid band(const Grid& y);
double perimeter(const Grid& u);

struct Features {
    double tau = 0.0;
    double c = 0.0;
    double iota = 0.0;
    double s = 0.0;
};
Features features(const Grid& y);
std::array<double, 5> alphas(const Features& f);

double loss_core(const Grid& y, const Grid& p, double lambda = 5.0);
double loss_boundary(const Grid& y, const Grid& p);
double loss_structure(const Grid& y, const Grid& p);
double loss_focal(const Grid& y, const Grid& p);
double loss_texture(const Grid& y, const Grid& p);
std::array<double, 5> components(const Grid& y, const Grid& p);
double masl_total(const Grid& y, const Grid& p, const std::array<double, 5>& weights);

double dice(const std::vector<double>& y, const std::vector<double>& p, double threshold = 0.5);
double iou(const std::vector<double>& y, const std::vector<double>& p, double threshold = 0.5);

double sigmoid(double x);
double elu(double x);

}  // namespace oracle
