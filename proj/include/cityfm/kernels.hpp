#pragma once

#include <cstdint>
#include <vector>

// Compute kernels behind the encoders, losses and rasterizer. Every kernel
// comes in a serial reference variant and an OpenMP variant; the unsuffixed
// entry point dispatches on the configured thread count. Parallelism is only
// ever over independent output elements and each element is accumulated in a
// fixed order, so both variants produce bitwise-identical results.
namespace cityfm::kernels {

int thread_count();
void set_thread_count(int n);

// y (rows x out) = x (rows x in) * w^T (out x in) + b
void dense_forward_serial(const double* w, const double* b, const double* x,
                          double* y, int rows, int in_dim, int out_dim);
void dense_forward_omp(const double* w, const double* b, const double* x,
                       double* y, int rows, int in_dim, int out_dim);
void dense_forward(const double* w, const double* b, const double* x,
                   double* y, int rows, int in_dim, int out_dim);

// Given dy, accumulates dw (out x in) and db (out), and writes dx (rows x in)
// unless dx is null.
void dense_backward_serial(const double* w, const double* x, const double* dy,
                           double* dx, double* dw, double* db, int rows,
                           int in_dim, int out_dim);
void dense_backward_omp(const double* w, const double* x, const double* dy,
                        double* dx, double* dw, double* db, int rows,
                        int in_dim, int out_dim);
void dense_backward(const double* w, const double* x, const double* dy,
                    double* dx, double* dw, double* db, int rows, int in_dim,
                    int out_dim);

// 3x3 stride-2 pad-1 convolution on one CHW image.
// in: (ic, h, w), kernel: (oc, ic, 3, 3), out: (oc, oh, ow).
int conv_out_extent(int in_extent);

void conv2d_forward_serial(const double* in, const double* kernel,
                           const double* bias, double* out, int ic, int h,
                           int w, int oc);
void conv2d_forward_omp(const double* in, const double* kernel,
                        const double* bias, double* out, int ic, int h, int w,
                        int oc);
void conv2d_forward(const double* in, const double* kernel, const double* bias,
                    double* out, int ic, int h, int w, int oc);

void conv2d_backward_data_serial(const double* kernel, const double* dout,
                                 double* din, int ic, int h, int w, int oc);
void conv2d_backward_data_omp(const double* kernel, const double* dout,
                              double* din, int ic, int h, int w, int oc);
void conv2d_backward_data(const double* kernel, const double* dout, double* din,
                          int ic, int h, int w, int oc);

// Accumulates dkernel (oc, ic, 3, 3) and dbias (oc).
void conv2d_backward_filter_serial(const double* in, const double* dout,
                                   double* dkernel, double* dbias, int ic,
                                   int h, int w, int oc);
void conv2d_backward_filter_omp(const double* in, const double* dout,
                                double* dkernel, double* dbias, int ic, int h,
                                int w, int oc);
void conv2d_backward_filter(const double* in, const double* dout,
                            double* dkernel, double* dbias, int ic, int h,
                            int w, int oc);

// z (n x m): z[i][j] = scale * dot(a_i, b_j)
void pairwise_dot_serial(const double* a, const double* b, double* z, int n,
                         int m, int dim, double scale);
void pairwise_dot_omp(const double* a, const double* b, double* z, int n,
                      int m, int dim, double scale);
void pairwise_dot(const double* a, const double* b, double* z, int n, int m,
                  int dim, double scale);

// Even-odd scanline fill of a closed polygon given in pixel coordinates
// (vertex i at (xs[i], ys[i]), last vertex == first). A pixel is set when its
// center (col + 0.5, row + 0.5) is inside. grid is row-major size x size.
void raster_fill_serial(const std::vector<double>& xs,
                        const std::vector<double>& ys, std::uint8_t* grid,
                        int size);
void raster_fill_omp(const std::vector<double>& xs, const std::vector<double>& ys,
                     std::uint8_t* grid, int size);
void raster_fill(const std::vector<double>& xs, const std::vector<double>& ys,
                 std::uint8_t* grid, int size);

}  // namespace cityfm::kernels
