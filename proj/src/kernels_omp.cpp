#include <algorithm>
#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "vton/kernels.hpp"

namespace vton::kernels {

int thread_count() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace parallel {

void dilate_once(std::span<const std::uint8_t> in, std::span<std::uint8_t> out, int height, int width,
                 std::span<const std::uint8_t> element, int radius) {
    const int side = 2 * radius + 1;
    // Offsets of set element cells, scanned in the same order as the reference.
    std::vector<std::pair<int, int>> offsets;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            if (element[(dy + radius) * side + (dx + radius)]) offsets.emplace_back(dy, dx);

#pragma omp parallel for schedule(static)
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            std::uint8_t hit = 0;
            for (const auto& [dy, dx] : offsets) {
                const int sy = y - dy;
                const int sx = x - dx;
                if (sy < 0 || sy >= height || sx < 0 || sx >= width) continue;
                if (in[sy * width + sx]) {
                    hit = 1;
                    break;
                }
            }
            out[y * width + x] = hit;
        }
    }
}

void conv2d_forward(std::span<const double> x, std::span<const double> w, std::span<const double> bias,
                    std::span<double> out, const ConvShape& s) {
    const int k = s.kernel;
    const int pad = k / 2;
    const int H = s.height;
    const int W = s.width;
    const int C = s.in_channels;
#pragma omp parallel for collapse(2) schedule(static)
    for (int o = 0; o < s.out_channels; ++o) {
        for (int y = 0; y < H; ++y) {
            const int ky0 = std::max(0, pad - y);
            const int ky1 = std::min(k, H + pad - y);
            for (int xx = 0; xx < W; ++xx) {
                const int kx0 = std::max(0, pad - xx);
                const int kx1 = std::min(k, W + pad - xx);
                double acc = bias.empty() ? 0.0 : bias[o];
                for (int c = 0; c < C; ++c) {
                    const double* wk = &w[((o * C + c) * k) * k];
                    const double* xc = &x[c * H * W];
                    for (int ky = ky0; ky < ky1; ++ky) {
                        const double* xrow = xc + (y + ky - pad) * W + (xx - pad);
                        for (int kx = kx0; kx < kx1; ++kx) acc += wk[ky * k + kx] * xrow[kx];
                    }
                }
                out[(o * H + y) * W + xx] = acc;
            }
        }
    }
}

void conv2d_backward_input(std::span<const double> grad_out, std::span<const double> w, std::span<double> grad_x,
                           const ConvShape& s) {
    const int k = s.kernel;
    const int pad = k / 2;
    const int H = s.height;
    const int W = s.width;
    const int C = s.in_channels;
#pragma omp parallel for collapse(2) schedule(static)
    for (int c = 0; c < C; ++c) {
        for (int y = 0; y < H; ++y) {
            // oy = y - ky + pad in [0, H)  <=>  ky in (y + pad - H, y + pad]
            const int ky0 = std::max(0, y + pad - H + 1);
            const int ky1 = std::min(k, y + pad + 1);
            for (int xx = 0; xx < W; ++xx) {
                const int kx0 = std::max(0, xx + pad - W + 1);
                const int kx1 = std::min(k, xx + pad + 1);
                double acc = 0.0;
                for (int o = 0; o < s.out_channels; ++o) {
                    const double* wk = &w[((o * C + c) * k) * k];
                    const double* go = &grad_out[o * H * W];
                    for (int ky = ky0; ky < ky1; ++ky) {
                        const int oy = y - ky + pad;
                        for (int kx = kx0; kx < kx1; ++kx) acc += wk[ky * k + kx] * go[oy * W + (xx - kx + pad)];
                    }
                }
                grad_x[(c * H + y) * W + xx] += acc;
            }
        }
    }
}

void conv2d_backward_weight(std::span<const double> grad_out, std::span<const double> x, std::span<double> grad_w,
                            std::span<double> grad_bias, const ConvShape& s) {
    const int k = s.kernel;
    const int pad = k / 2;
    const int H = s.height;
    const int W = s.width;
    const int C = s.in_channels;
#pragma omp parallel for collapse(2) schedule(static)
    for (int o = 0; o < s.out_channels; ++o) {
        for (int c = 0; c < C; ++c) {
            for (int ky = 0; ky < k; ++ky) {
                const int y0 = std::max(0, pad - ky);
                const int y1 = std::min(H, H + pad - ky);
                for (int kx = 0; kx < k; ++kx) {
                    const int x0 = std::max(0, pad - kx);
                    const int x1 = std::min(W, W + pad - kx);
                    double acc = 0.0;
                    for (int y = y0; y < y1; ++y) {
                        const double* go = &grad_out[(o * H + y) * W];
                        const double* xr = &x[(c * H + y + ky - pad) * W + kx - pad];
                        for (int xx = x0; xx < x1; ++xx) acc += go[xx] * xr[xx];
                    }
                    grad_w[((o * C + c) * k + ky) * k + kx] += acc;
                }
            }
        }
    }
    if (!grad_bias.empty()) {
#pragma omp parallel for schedule(static)
        for (int o = 0; o < s.out_channels; ++o) {
            double acc = 0.0;
            for (int i = 0; i < H * W; ++i) acc += grad_out[o * H * W + i];
            grad_bias[o] += acc;
        }
    }
}

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, int m, int k, int n,
            bool transpose_a, bool transpose_b) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            if (!transpose_a && transpose_b) {
                const double* ar = &a[i * k];
                const double* br = &b[j * k];
                for (int p = 0; p < k; ++p) acc += ar[p] * br[p];
            } else {
                for (int p = 0; p < k; ++p) {
                    const double av = transpose_a ? a[p * m + i] : a[i * k + p];
                    const double bv = transpose_b ? b[j * k + p] : b[p * n + j];
                    acc += av * bv;
                }
            }
            c[i * n + j] = acc;
        }
    }
}

double ssim_channel(std::span<const double> a, std::span<const double> b, int height, int width,
                    const SsimParams& p) {
    const int win = p.window;
    std::vector<double> g(static_cast<std::size_t>(win) * win);
    double total = 0.0;
    const int r = win / 2;
    for (int dy = 0; dy < win; ++dy)
        for (int dx = 0; dx < win; ++dx) {
            const double d2 = double((dy - r) * (dy - r) + (dx - r) * (dx - r));
            g[dy * win + dx] = std::exp(-d2 / (2.0 * p.gaussian_sigma * p.gaussian_sigma));
            total += g[dy * win + dx];
        }
    for (double& v : g) v /= total;

    const int rows = height - win + 1;
    const int cols = width - win + 1;
    std::vector<double> local(static_cast<std::size_t>(rows) * cols);
#pragma omp parallel for collapse(2) schedule(static)
    for (int y = 0; y < rows; ++y) {
        for (int x = 0; x < cols; ++x) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int dy = 0; dy < win; ++dy) {
                const double* ar = &a[(y + dy) * width + x];
                const double* br = &b[(y + dy) * width + x];
                const double* gr = &g[dy * win];
                for (int dx = 0; dx < win; ++dx) {
                    const double wgt = gr[dx];
                    ma += wgt * ar[dx];
                    mb += wgt * br[dx];
                    saa += wgt * ar[dx] * ar[dx];
                    sbb += wgt * br[dx] * br[dx];
                    sab += wgt * ar[dx] * br[dx];
                }
            }
            const double var_a = saa - ma * ma;
            const double var_b = sbb - mb * mb;
            const double cov = sab - ma * mb;
            local[y * cols + x] =
                ((2 * ma * mb + p.c1) * (2 * cov + p.c2)) / ((ma * ma + mb * mb + p.c1) * (var_a + var_b + p.c2));
        }
    }
    double sum = 0.0;
    for (double v : local) sum += v;
    return sum / (static_cast<double>(rows) * cols);
}

}  // namespace parallel
}  // namespace vton::kernels
