#pragma once

// Dense and sparse inner loops. Every kernel exists twice: a plain serial
// version under kernels::reference, and an OpenMP version under kernels.
// Both compute each output element with the same loop order, so they agree
// bit for bit; the reference copies exist for tests and benchmarks.

#include <cstddef>
#include <span>
#include <vector>

namespace skg {

// Row-compressed weight matrix applied as out = S * in.
// Row r of the output is sum over entries k of weights[k] * in[indices[k]].
struct SparseRows {
  std::size_t out_rows = 0;
  std::size_t in_rows = 0;
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> indices;
  std::vector<double> weights;

  void add(std::size_t index, double weight) {
    indices.push_back(index);
    weights.push_back(weight);
  }
  // Closes the row being filled.
  void end_row() {
    offsets.push_back(indices.size());
    ++out_rows;
  }
  std::size_t nnz() const { return indices.size(); }
  bool valid() const;

  // Column-compressed copy (rows of S^T), entries ordered by ascending source row.
  SparseRows transposed() const;
};

namespace kernels {

// Below this many multiply-adds a kernel runs on the calling thread.
inline constexpr std::size_t kParallelWork = 1 << 15;

int max_threads();
void set_threads(int n);

namespace reference {
// out[m x n] = a[m x k] * b[k x n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n);
// out[rows x out_dim] = x[rows x in_dim] * w[out_dim x in_dim]^T
void linear(std::span<const double> x, std::span<const double> w, std::span<double> out,
            std::size_t rows, std::size_t in_dim, std::size_t out_dim);
// gw[out_dim x in_dim] += g[rows x out_dim]^T * x[rows x in_dim]
void linear_weight_grad(std::span<const double> g, std::span<const double> x, std::span<double> gw,
                        std::size_t rows, std::size_t in_dim, std::size_t out_dim);
// out[s.out_rows x dim] = s * in[s.in_rows x dim]
void spmm(const SparseRows& s, std::span<const double> in, std::span<double> out, std::size_t dim);
// gin[s.in_rows x dim] += s^T * g[s.out_rows x dim], scattering row by row.
void spmm_transpose(const SparseRows& s, std::span<const double> g, std::span<double> gin,
                    std::size_t dim);
}  // namespace reference

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n);
void linear(std::span<const double> x, std::span<const double> w, std::span<double> out,
            std::size_t rows, std::size_t in_dim, std::size_t out_dim);
void linear_weight_grad(std::span<const double> g, std::span<const double> x, std::span<double> gw,
                        std::size_t rows, std::size_t in_dim, std::size_t out_dim);
void spmm(const SparseRows& s, std::span<const double> in, std::span<double> out, std::size_t dim);
// `st` must be s.transposed(); accumulation order matches the reference scatter.
void spmm_transpose(const SparseRows& st, std::span<const double> g, std::span<double> gin,
                    std::size_t dim);

}  // namespace kernels
}  // namespace skg
