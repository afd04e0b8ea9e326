#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace oracle {

namespace {

constexpr double eps = 1e-7;

std::size_t clampi(long i, std::size_t n) { return static_cast<std::size_t>(std::clamp<long>(i, 0, static_cast<long>(n) - 1)); }

Grid pool3(const Grid& y, bool take_max)
{
    Grid out(y.h, y.w);
    for (std::size_t i = 0; i < y.h; ++i) {
        for (std::size_t j = 0; j < y.w; ++j) {
            double best = take_max ? -1e300 : 1e300;
            for (long di = -1; di <= 1; ++di) {
                for (long dj = -1; dj <= 1; ++dj) {
                    const double v = y(clampi(long(i) + di, y.h), clampi(long(j) + dj, y.w));
                    best = take_max ? std::max(best, v) : std::min(best, v);
                }
            }
            out(i, j) = best;
        }
    }
    return out;
}

double total(const Grid& g)
{
    double s = 0.0;
    for (double v : g.v) s += v;
    return s;
}

Grid avg_pool(const Grid& g, std::size_t q)
{
    Grid out(g.h / q, g.w / q);
    for (std::size_t i = 0; i < out.h; ++i) {
        for (std::size_t j = 0; j < out.w; ++j) {
            double s = 0.0;
            for (std::size_t a = 0; a < q; ++a) {
                for (std::size_t b = 0; b < q; ++b) s += g(i * q + a, j * q + b);
            }
            out(i, j) = s / double(q * q);
        }
    }
    return out;
}

double clamp_p(double p) { return std::clamp(p, 1e-7, 1.0 - 1e-7); }

}  // namespace

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double elu(double x) { return x > 0.0 ? x : std::expm1(x); }

std::vector<cplx> naive_dft2(const std::vector<cplx>& x, std::size_t h, std::size_t w, bool inverse)
{
    const double sign = inverse ? 1.0 : -1.0;
    std::vector<cplx> out(h * w);
    for (std::size_t u = 0; u < h; ++u) {
        for (std::size_t v = 0; v < w; ++v) {
            cplx acc = 0.0;
            for (std::size_t m = 0; m < h; ++m) {
                for (std::size_t n = 0; n < w; ++n) {
                    const double phase = sign * 2.0 * std::numbers::pi *
                                         (double((u * m) % h) / double(h) + double((v * n) % w) / double(w));
                    acc += x[m * w + n] * cplx(std::cos(phase), std::sin(phase));
                }
            }
            out[u * w + v] = acc;
        }
    }
    return out;
}

std::vector<cplx> naive_dft2(const Grid& x)
{
    std::vector<cplx> c(x.v.begin(), x.v.end());
    return naive_dft2(c, x.h, x.w);
}

Grid lowpass(const Grid& x, std::size_t k)
{
    auto spec = naive_dft2(x);
    auto kept = [k](std::size_t f, std::size_t n) {
        // Centered position of frequency f after a shift by n/2.
        const std::size_t pos = (f + n / 2) % n;
        const std::size_t lo = n / 2 - k / 2;
        return pos >= lo && pos < lo + k;
    };
    for (std::size_t u = 0; u < x.h; ++u) {
        for (std::size_t v = 0; v < x.w; ++v) {
            if (!(kept(u, x.h) && kept(v, x.w))) spec[u * x.w + v] = 0.0;
        }
    }
    const auto back = naive_dft2(spec, x.h, x.w, true);
    Grid out(x.h, x.w);
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = back[i].real() / double(x.h * x.w);
    return out;
}

std::vector<double> conv2d_direct(const std::vector<double>& x, std::size_t cin, std::size_t h, std::size_t w,
                                  const std::vector<double>& weight, std::size_t cout, std::size_t k,
                                  const std::vector<double>& bias, std::size_t stride, std::size_t groups,
                                  bool replicate)
{
    const std::size_t ho = (h - 1) / stride + 1;
    const std::size_t wo = (w - 1) / stride + 1;
    const std::size_t cin_g = cin / groups;
    const std::size_t cout_g = cout / groups;
    const long r = long(k / 2);
    std::vector<double> out(cout * ho * wo, 0.0);
    for (std::size_t o = 0; o < cout; ++o) {
        const std::size_t g = o / cout_g;
        for (std::size_t i = 0; i < ho; ++i) {
            for (std::size_t j = 0; j < wo; ++j) {
                double acc = bias.empty() ? 0.0 : bias[o];
                for (std::size_t ci = 0; ci < cin_g; ++ci) {
                    const std::size_t c = g * cin_g + ci;
                    for (long a = 0; a < long(k); ++a) {
                        for (long b = 0; b < long(k); ++b) {
                            long yi = long(i * stride) + a - r;
                            long xj = long(j * stride) + b - r;
                            double v;
                            if (replicate) {
                                v = x[(c * h + clampi(yi, h)) * w + clampi(xj, w)];
                            } else if (yi < 0 || xj < 0 || yi >= long(h) || xj >= long(w)) {
                                v = 0.0;
                            } else {
                                v = x[(c * h + std::size_t(yi)) * w + std::size_t(xj)];
                            }
                            acc += v * weight[((o * cin_g + ci) * k + std::size_t(a)) * k + std::size_t(b)];
                        }
                    }
                }
                out[(o * ho + i) * wo + j] = acc;
            }
        }
    }
    return out;
}

Grid dilate(const Grid& y) { return pool3(y, true); }
Grid erode(const Grid& y) { return pool3(y, false); }

Grid band(const Grid& y)
{
    Grid d = dilate(y), e = erode(y), out(y.h, y.w);
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = std::clamp(d.v[i] - e.v[i], 0.0, 1.0);
    return out;
}

double perimeter(const Grid& u)
{
    double p = 0.0;
    for (std::size_t i = 0; i < u.h; ++i) {
        for (std::size_t j = 0; j + 1 < u.w; ++j) p += std::fabs(u(i, j + 1) - u(i, j));
    }
    for (std::size_t i = 0; i + 1 < u.h; ++i) {
        for (std::size_t j = 0; j < u.w; ++j) p += std::fabs(u(i + 1, j) - u(i, j));
    }
    return p;
}

Features features(const Grid& y)
{
    Features f;
    const double hw = double(y.h * y.w);
    const double a = total(y);
    f.s = a / hw;
    if (a > 0.0) {
        f.tau = total(erode(y)) / (a + eps);
        const double p = perimeter(y);
        f.c = std::clamp(4.0 * std::numbers::pi * a / (p * p + eps), 0.0, 1.0);
    }
    const Grid b = band(y);
    auto at = [&](long i, long j) {
        if (i < 0 || j < 0 || i >= long(b.h) || j >= long(b.w)) return 0.0;
        return b(std::size_t(i), std::size_t(j));
    };
    double l1 = 0.0;
    for (long i = 0; i < long(b.h); ++i) {
        for (long j = 0; j < long(b.w); ++j) {
            l1 += std::fabs(at(i - 1, j) + at(i + 1, j) + at(i, j - 1) + at(i, j + 1) - 4.0 * at(i, j));
        }
    }
    f.iota = l1 / hw;
    return f;
}

std::array<double, 5> alphas(const Features& f)
{
    return {1.0 + 0.5 * f.c, 1.0 + 1.5 * f.tau + f.c, 1.0 + f.tau, 1.0 + 1.5 * f.iota, 1.0 + f.iota};
}

double loss_core(const Grid& y, const Grid& p, double lambda)
{
    double syp = 0.0, sy = 0.0, sp = 0.0, wbce = 0.0;
    const Grid b = band(y);
    for (std::size_t i = 0; i < y.v.size(); ++i) {
        syp += y.v[i] * p.v[i];
        sy += y.v[i];
        sp += p.v[i];
        const double q = clamp_p(p.v[i]);
        const double bce = -(y.v[i] * std::log(q) + (1.0 - y.v[i]) * std::log(1.0 - q));
        wbce += (1.0 + lambda * b.v[i]) * bce;
    }
    wbce /= double(y.v.size());
    const double dice = 1.0 - (2.0 * syp + eps) / (sy + sp + eps);
    const double iou = 1.0 - (syp + eps) / (sy + sp - syp + eps);
    return 0.4 * dice + 0.3 * iou + 0.3 * wbce;
}

double loss_boundary(const Grid& y, const Grid& p)
{
    const std::size_t scales[] = {1, 2, 4};
    const double omega[] = {0.5, 0.3, 0.2};
    Grid d(y.h, y.w);
    for (std::size_t i = 0; i < d.v.size(); ++i) d.v[i] = y.v[i] - p.v[i];
    double out = 0.0;
    for (int s = 0; s < 3; ++s) {
        const Grid g = avg_pool(d, scales[s]);
        double term = 0.0;
        if (g.w > 1) {
            double acc = 0.0;
            for (std::size_t i = 0; i < g.h; ++i) {
                for (std::size_t j = 0; j + 1 < g.w; ++j) acc += std::fabs(g(i, j + 1) - g(i, j));
            }
            term += acc / double(g.h * (g.w - 1));
        }
        if (g.h > 1) {
            double acc = 0.0;
            for (std::size_t i = 0; i + 1 < g.h; ++i) {
                for (std::size_t j = 0; j < g.w; ++j) acc += std::fabs(g(i + 1, j) - g(i, j));
            }
            term += acc / double((g.h - 1) * g.w);
        }
        out += omega[s] * term;
    }
    return out;
}

double loss_structure(const Grid& y, const Grid& p)
{
    auto kappa = [](const Grid& u) {
        const double per = perimeter(u);
        return total(u) / (per * per + eps);
    };
    return std::fabs(kappa(y) - kappa(p));
}

double loss_focal(const Grid& y, const Grid& p)
{
    const double s = total(y) / double(y.v.size());
    const double gamma = s < 0.05 ? 3.0 : (s < 0.2 ? 2.0 : 1.5);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.v.size(); ++i) {
        const double q = clamp_p(p.v[i]);
        const double pt = y.v[i] * q + (1.0 - y.v[i]) * (1.0 - q);
        acc += -std::pow(1.0 - pt, gamma) * std::log(pt);
    }
    return acc / double(y.v.size());
}

double loss_texture(const Grid& y, const Grid& p)
{
    Grid d(y.h, y.w);
    for (std::size_t i = 0; i < d.v.size(); ++i) d.v[i] = y.v[i] - p.v[i];
    double acc = 0.0;
    for (std::size_t i = 0; i < d.h; ++i) {
        for (std::size_t j = 1; j + 1 < d.w; ++j) acc += std::fabs(d(i, j + 1) - 2.0 * d(i, j) + d(i, j - 1));
    }
    for (std::size_t i = 1; i + 1 < d.h; ++i) {
        for (std::size_t j = 0; j < d.w; ++j) acc += std::fabs(d(i + 1, j) - 2.0 * d(i, j) + d(i - 1, j));
    }
    return acc / double(d.h * d.w);
}

std::array<double, 5> components(const Grid& y, const Grid& p)
{
    return {loss_core(y, p), loss_boundary(y, p), loss_structure(y, p), loss_focal(y, p), loss_texture(y, p)};
}

double masl_total(const Grid& y, const Grid& p, const std::array<double, 5>& weights)
{
    const auto l = components(y, p);
    const auto a = alphas(features(y));
    double num = 0.0, den = 0.0;
    for (int i = 0; i < 5; ++i) {
        num += weights[i] * a[i] * l[i];
        den += weights[i] * a[i];
    }
    return num / (den + eps);
}

double dice(const std::vector<double>& y, const std::vector<double>& p, double threshold)
{
    double inter = 0.0, a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double pi = p[i] >= threshold ? 1.0 : 0.0;
        const double yi = y[i] >= 0.5 ? 1.0 : 0.0;
        inter += pi * yi;
        a += pi;
        b += yi;
    }
    return (2.0 * inter + eps) / (a + b + eps);
}

double iou(const std::vector<double>& y, const std::vector<double>& p, double threshold)
{
    double inter = 0.0, uni = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const bool pi = p[i] >= threshold;
        const bool yi = y[i] >= 0.5;
        inter += (pi && yi) ? 1.0 : 0.0;
        uni += (pi || yi) ? 1.0 : 0.0;
    }
    return (inter + eps) / (uni + eps);
}

}  // namespace oracle
