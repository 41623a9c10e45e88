#include "cityfm/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>

namespace cityfm::kernels {

namespace {
std::atomic<int> g_threads{1};

bool parallel() { return g_threads.load(std::memory_order_relaxed) > 1; }
}  // namespace

int thread_count() { return g_threads.load(std::memory_order_relaxed); }

void set_thread_count(int n) { g_threads.store(std::max(1, n), std::memory_order_relaxed); }

// ---------------------------------------------------------------------------
// dense

namespace {
inline void dense_forward_row(const double* w, const double* b, const double* xr,
                              double* yr, int in_dim, int out_dim) {
  for (int o = 0; o < out_dim; ++o) {
    const double* wo = w + static_cast<std::ptrdiff_t>(o) * in_dim;
    double acc = b ? b[o] : 0.0;
    for (int i = 0; i < in_dim; ++i) acc += wo[i] * xr[i];
    yr[o] = acc;
  }
}
}  // namespace

void dense_forward_serial(const double* w, const double* b, const double* x,
                          double* y, int rows, int in_dim, int out_dim) {
  for (int r = 0; r < rows; ++r) {
    dense_forward_row(w, b, x + static_cast<std::ptrdiff_t>(r) * in_dim,
                      y + static_cast<std::ptrdiff_t>(r) * out_dim, in_dim, out_dim);
  }
}

void dense_forward_omp(const double* w, const double* b, const double* x,
                       double* y, int rows, int in_dim, int out_dim) {
#pragma omp parallel for num_threads(g_threads.load()) schedule(static)
  for (int r = 0; r < rows; ++r) {
    dense_forward_row(w, b, x + static_cast<std::ptrdiff_t>(r) * in_dim,
                      y + static_cast<std::ptrdiff_t>(r) * out_dim, in_dim, out_dim);
  }
}

void dense_forward(const double* w, const double* b, const double* x, double* y,
                   int rows, int in_dim, int out_dim) {
  if (parallel()) {
    dense_forward_omp(w, b, x, y, rows, in_dim, out_dim);
  } else {
    dense_forward_serial(w, b, x, y, rows, in_dim, out_dim);
  }
}

namespace {
inline void dense_backward_dx(const double* w, const double* dy, double* dx,
                              int rows, int in_dim, int out_dim) {
  if (!dx) return;
  for (int r = 0; r < rows; ++r) {
    const double* dyr = dy + static_cast<std::ptrdiff_t>(r) * out_dim;
    double* dxr = dx + static_cast<std::ptrdiff_t>(r) * in_dim;
    for (int i = 0; i < in_dim; ++i) {
      double acc = 0.0;
      for (int o = 0; o < out_dim; ++o) acc += w[static_cast<std::ptrdiff_t>(o) * in_dim + i] * dyr[o];
      dxr[i] = acc;
    }
  }
}

inline void dense_backward_dw_one(const double* x, const double* dy, double* dw,
                                  double* db, int rows, int in_dim, int out_dim,
                                  int o) {
  double* dwo = dw + static_cast<std::ptrdiff_t>(o) * in_dim;
  double dbo = 0.0;
  for (int r = 0; r < rows; ++r) {
    const double g = dy[static_cast<std::ptrdiff_t>(r) * out_dim + o];
    dbo += g;
    const double* xr = x + static_cast<std::ptrdiff_t>(r) * in_dim;
    for (int i = 0; i < in_dim; ++i) dwo[i] += g * xr[i];
  }
  db[o] += dbo;
}
}  // namespace

void dense_backward_serial(const double* w, const double* x, const double* dy,
                           double* dx, double* dw, double* db, int rows,
                           int in_dim, int out_dim) {
  dense_backward_dx(w, dy, dx, rows, in_dim, out_dim);
  for (int o = 0; o < out_dim; ++o) {
    dense_backward_dw_one(x, dy, dw, db, rows, in_dim, out_dim, o);
  }
}

void dense_backward_omp(const double* w, const double* x, const double* dy,
                        double* dx, double* dw, double* db, int rows, int in_dim,
                        int out_dim) {
  if (dx) {
#pragma omp parallel for num_threads(g_threads.load()) schedule(static)
    for (int r = 0; r < rows; ++r) {
      const double* dyr = dy + static_cast<std::ptrdiff_t>(r) * out_dim;
      double* dxr = dx + static_cast<std::ptrdiff_t>(r) * in_dim;
      for (int i = 0; i < in_dim; ++i) {
        double acc = 0.0;
        for (int o = 0; o < out_dim; ++o) acc += w[static_cast<std::ptrdiff_t>(o) * in_dim + i] * dyr[o];
        dxr[i] = acc;
      }
    }
  }
#pragma omp parallel for num_threads(g_threads.load()) schedule(static)
  for (int o = 0; o < out_dim; ++o) {
    dense_backward_dw_one(x, dy, dw, db, rows, in_dim, out_dim, o);
  }
}

void dense_backward(const double* w, const double* x, const double* dy,
                    double* dx, double* dw, double* db, int rows, int in_dim,
                    int out_dim) {
  if (parallel()) {
    dense_backward_omp(w, x, dy, dx, dw, db, rows, in_dim, out_dim);
  } else {
    dense_backward_serial(w, x, dy, dx, dw, db, rows, in_dim, out_dim);
  }
}

// ---------------------------------------------------------------------------
// conv2d, fixed 3x3 stride-2 pad-1

int conv_out_extent(int in_extent) { return (in_extent + 1) / 2; }

namespace {
inline void conv2d_forward_one(const double* in, const double* kernel,
                               const double* bias, double* out, int ic, int h,
                               int w, int o, int oh, int ow) {
  double* outo = out + static_cast<std::ptrdiff_t>(o) * oh * ow;
  const double* ko = kernel + static_cast<std::ptrdiff_t>(o) * ic * 9;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      double acc = bias ? bias[o] : 0.0;
      for (int c = 0; c < ic; ++c) {
        const double* inc = in + static_cast<std::ptrdiff_t>(c) * h * w;
        const double* kc = ko + static_cast<std::ptrdiff_t>(c) * 9;
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = 2 * oy + ky - 1;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = 2 * ox + kx - 1;
            if (ix < 0 || ix >= w) continue;
            acc += inc[static_cast<std::ptrdiff_t>(iy) * w + ix] * kc[ky * 3 + kx];
          }
        }
      }
      outo[static_cast<std::ptrdiff_t>(oy) * ow + ox] = acc;
    }
  }
}
}  // namespace

void conv2d_forward_serial(const double* in, const double* kernel,
                           const double* bias, double* out, int ic, int h,
                           int w, int oc) {
  const int oh = conv_out_extent(h), ow = conv_out_extent(w);
  for (int o = 0; o < oc; ++o) conv2d_forward_one(in, kernel, bias, out, ic, h, w, o, oh, ow);
}

void conv2d_forward_omp(const double* in, const double* kernel,
                        const double* bias, double* out, int ic, int h, int w,
                        int oc) {
  const int oh = conv_out_extent(h), ow = conv_out_extent(w);
#pragma omp parallel for num_threads(g_threads.load()) schedule(static)
  for (int o = 0; o < oc; ++o) conv2d_forward_one(in, kernel, bias, out, ic, h, w, o, oh, ow);
}

void conv2d_forward(const double* in, const double* kernel, const double* bias,
                    double* out, int ic, int h, int w, int oc) {
  if (parallel()) {
    conv2d_forward_omp(in, kernel, bias, out, ic, h, w, oc);
  } else {
    conv2d_forward_serial(in, kernel, bias, out, ic, h, w, oc);
  }
}

namespace {
// din for a single input channel: gather over all output positions the
// channel feeds, in a fixed (o, oy, ox, ky, kx) order.
inline void conv2d_backward_data_one(const double* kernel, const double* dout,
                                     double* din, int ic, int h, int w, int oc,
                                     int c, int oh, int ow) {
  double* dinc = din + static_cast<std::ptrdiff_t>(c) * h * w;
  std::memset(dinc, 0, sizeof(double) * static_cast<std::size_t>(h) * w);
  for (int o = 0; o < oc; ++o) {
    const double* douto = dout + static_cast<std::ptrdiff_t>(o) * oh * ow;
    const double* kc = kernel + (static_cast<std::ptrdiff_t>(o) * ic + c) * 9;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const double g = douto[static_cast<std::ptrdiff_t>(oy) * ow + ox];
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = 2 * oy + ky - 1;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = 2 * ox + kx - 1;
            if (ix < 0 || ix >= w) continue;
            dinc[static_cast<std::ptrdiff_t>(iy) * w + ix] += g * kc[ky * 3 + kx];
          }
        }
      }
    }
  }
}

inline void conv2d_backward_filter_one(const double* in, const double* dout,
                                       double* dkernel, double* dbias, int ic,
                                       int h, int w, int o, int oh, int ow) {
  const double* douto = dout + static_cast<std::ptrdiff_t>(o) * oh * ow;
  double* dko = dkernel + static_cast<std::ptrdiff_t>(o) * ic * 9;
  double dbo = 0.0;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const double g = douto[static_cast<std::ptrdiff_t>(oy) * ow + ox];
      dbo += g;
      for (int c = 0; c < ic; ++c) {
        const double* inc = in + static_cast<std::ptrdiff_t>(c) * h * w;
        double* dkc = dko + static_cast<std::ptrdiff_t>(c) * 9;
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = 2 * oy + ky - 1;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = 2 * ox + kx - 1;
            if (ix < 0 || ix >= w) continue;
            dkc[ky * 3 + kx] += g * inc[static_cast<std::ptrdiff_t>(iy) * w + ix];
          }
        }
      }
    }
  }
  dbias[o] += dbo;
}
}  // namespace

void conv2d_backward_data_serial(const double* kernel, const double* dout,
                                 double* din, int ic, int h, int w, int oc) {
  const int oh = conv_out_extent(h), ow = conv_out_extent(w);
  for (int c = 0; c < ic; ++c) conv2d_backward_data_one(kernel, dout, din, ic, h, w, oc, c, oh, ow);
}

void conv2d_backward_data_omp(const double* kernel, const double* dout,
                              double* din, int ic, int h, int w, int oc) {
  const int oh = conv_out_extent(h), ow = conv_out_extent(w);
#pragma omp parallel for num_threads(g_threads.load()) schedule(static)
  for (int c = 0; c < ic; ++c) conv2d_backward_data_one(kernel, dout, din, ic, h, w, oc, c, oh, ow);
}

void conv2d_backward_data(const double* kernel, const double* dout, double* din,
                          int ic, int h, int w, int oc) {
  if (parallel()) {
    conv2d_backward_data_omp(kernel, dout, din, ic, h, w, oc);
  } else {
    conv2d_backward_data_serial(kernel, dout, din, ic, h, w, oc);
  }
}

void conv2d_backward_filter_serial(const double* in, const double* dout,
                                   double* dkernel, double* dbias, int ic,
                                   int h, int w, int oc) {
  const int oh = conv_out_extent(h), ow = conv_out_extent(w);
  for (int o = 0; o < oc; ++o) conv2d_backward_filter_one(in, dout, dkernel, dbias, ic, h, w, o, oh, ow);
}

void conv2d_backward_filter_omp(const double* in, const double* dout,
                                double* dkernel, double* dbias, int ic, int h,
                                int w, int oc) {
  const int oh = conv_out_extent(h), ow = conv_out_extent(w);
#pragma omp parallel for num_threads(g_threads.load()) schedule(static)
  for (int o = 0; o < oc; ++o) conv2d_backward_filter_one(in, dout, dkernel, dbias, ic, h, w, o, oh, ow);
}

void conv2d_backward_filter(const double* in, const double* dout,
                            double* dkernel, double* dbias, int ic, int h,
                            int w, int oc) {
  if (parallel()) {
    conv2d_backward_filter_omp(in, dout, dkernel, dbias, ic, h, w, oc);
  } else {
    conv2d_backward_filter_serial(in, dout, dkernel, dbias, ic, h, w, oc);
  }
}

// ---------------------------------------------------------------------------
// pairwise dot

namespace {
inline void pairwise_dot_row(const double* a, const double* b, double* z, int m,
                             int dim, double scale, int i) {
  const double* ai = a + static_cast<std::ptrdiff_t>(i) * dim;
  double* zi = z + static_cast<std::ptrdiff_t>(i) * m;
  for (int j = 0; j < m; ++j) {
    const double* bj = b + static_cast<std::ptrdiff_t>(j) * dim;
    double acc = 0.0;
    for (int d = 0; d < dim; ++d) acc += ai[d] * bj[d];
    zi[j] = acc * scale;
  }
}
}  // namespace

void pairwise_dot_serial(const double* a, const double* b, double* z, int n,
                         int m, int dim, double scale) {
  for (int i = 0; i < n; ++i) pairwise_dot_row(a, b, z, m, dim, scale, i);
}

void pairwise_dot_omp(const double* a, const double* b, double* z, int n, int m,
                      int dim, double scale) {
#pragma omp parallel for num_threads(g_threads.load()) schedule(static)
  for (int i = 0; i < n; ++i) pairwise_dot_row(a, b, z, m, dim, scale, i);
}

void pairwise_dot(const double* a, const double* b, double* z, int n, int m,
                  int dim, double scale) {
  if (parallel()) {
    pairwise_dot_omp(a, b, z, n, m, dim, scale);
  } else {
    pairwise_dot_serial(a, b, z, n, m, dim, scale);
  }
}

// ---------------------------------------------------------------------------
// raster fill

namespace {
inline void raster_fill_row(const std::vector<double>& xs,
                            const std::vector<double>& ys, std::uint8_t* grid,
                            int size, int row, std::vector<double>& crossings) {
  const double yc = row + 0.5;
  crossings.clear();
  const std::size_t n = xs.size();
  for (std::size_t e = 0; e + 1 < n; ++e) {
    const double y1 = ys[e], y2 = ys[e + 1];
    // Half-open rule so a vertex on the scanline is counted exactly once.
    if ((y1 <= yc && yc < y2) || (y2 <= yc && yc < y1)) {
      const double t = (yc - y1) / (y2 - y1);
      crossings.push_back(xs[e] + t * (xs[e + 1] - xs[e]));
    }
  }
  std::sort(crossings.begin(), crossings.end());
  std::uint8_t* rowp = grid + static_cast<std::ptrdiff_t>(row) * size;
  for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) {
    const double xa = crossings[k], xb = crossings[k + 1];
    int first = static_cast<int>(std::ceil(xa - 0.5));
    int last = static_cast<int>(std::ceil(xb - 0.5)) - 1;
    first = std::max(first, 0);
    last = std::min(last, size - 1);
    for (int c = first; c <= last; ++c) rowp[c] = 1;
  }
}
}  // namespace

void raster_fill_serial(const std::vector<double>& xs,
                        const std::vector<double>& ys, std::uint8_t* grid,
                        int size) {
  std::memset(grid, 0, static_cast<std::size_t>(size) * size);
  std::vector<double> crossings;
  for (int row = 0; row < size; ++row) raster_fill_row(xs, ys, grid, size, row, crossings);
}

void raster_fill_omp(const std::vector<double>& xs, const std::vector<double>& ys,
                     std::uint8_t* grid, int size) {
  std::memset(grid, 0, static_cast<std::size_t>(size) * size);
#pragma omp parallel num_threads(g_threads.load())
  {
    std::vector<double> crossings;
#pragma omp for schedule(static)
    for (int row = 0; row < size; ++row) raster_fill_row(xs, ys, grid, size, row, crossings);
  }
}

void raster_fill(const std::vector<double>& xs, const std::vector<double>& ys,
                 std::uint8_t* grid, int size) {
  if (parallel()) {
    raster_fill_omp(xs, ys, grid, size);
  } else {
    raster_fill_serial(xs, ys, grid, size);
  }
}

}  // namespace cityfm::kernels
