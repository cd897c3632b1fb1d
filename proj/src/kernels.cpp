#include "skg/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace skg {

bool SparseRows::valid() const {
  if (offsets.size() != out_rows + 1 || offsets.front() != 0 || offsets.back() != indices.size() ||
      indices.size() != weights.size())
    return false;
  if (!std::is_sorted(offsets.begin(), offsets.end())) return false;
  return std::all_of(indices.begin(), indices.end(), [&](std::size_t i) { return i < in_rows; });
}

SparseRows SparseRows::transposed() const {
  SparseRows t;
  t.out_rows = in_rows;
  t.in_rows = out_rows;
  std::vector<std::size_t> count(in_rows + 1, 0);
  for (std::size_t idx : indices) ++count[idx + 1];
  std::partial_sum(count.begin(), count.end(), count.begin());
  t.offsets = count;
  t.indices.resize(indices.size());
  t.weights.resize(weights.size());
  std::vector<std::size_t> cursor(count.begin(), count.end() - 1);
  for (std::size_t r = 0; r < out_rows; ++r) {
    for (std::size_t e = offsets[r]; e < offsets[r + 1]; ++e) {
      const std::size_t slot = cursor[indices[e]]++;
      t.indices[slot] = r;
      t.weights[slot] = weights[e];
    }
  }
  return t;
}

namespace kernels {
namespace {

// Elementwise vector type (GCC/Clang extension). Lanes never mix, so the width
// only changes speed, not results.
#if defined(__AVX512F__)
using vec = double __attribute__((vector_size(64)));
#elif defined(__AVX__)
using vec = double __attribute__((vector_size(32)));
#else
using vec = double __attribute__((vector_size(16)));
#endif
constexpr std::size_t kVec = sizeof(vec) / sizeof(double);
constexpr std::size_t kTileCols = 4 * kVec;
constexpr std::size_t kVecsPerTile = kTileCols / kVec;
constexpr std::size_t kTileRows = 4;
constexpr std::size_t kDepthBlock = 64;
constexpr std::size_t kColumnBlock = 64;

inline vec load(const double* p) {
  vec v;
  std::memcpy(&v, p, sizeof v);
  return v;
}
inline void store(double* p, vec v) { std::memcpy(p, &v, sizeof v); }

// Rows [i0, i0 + R), columns [c, c + kTileCols) of out += a[:, p0:p1] * b[p0:p1, :].
template <std::size_t R>
inline void gemm_tile(const double* a, const double* b, double* out, std::size_t i0, std::size_t k,
                      std::size_t n, std::size_t c, std::size_t p0, std::size_t p1) {
  vec acc[R][kVecsPerTile];
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t v = 0; v < kVecsPerTile; ++v) acc[r][v] = load(out + (i0 + r) * n + c + v * kVec);
  for (std::size_t p = p0; p < p1; ++p) {
    vec bv[kVecsPerTile];
    for (std::size_t v = 0; v < kVecsPerTile; ++v) bv[v] = load(b + p * n + c + v * kVec);
    for (std::size_t r = 0; r < R; ++r) {
      const double av = a[(i0 + r) * k + p];
      for (std::size_t v = 0; v < kVecsPerTile; ++v) acc[r][v] += av * bv[v];
    }
  }
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t v = 0; v < kVecsPerTile; ++v) store(out + (i0 + r) * n + c + v * kVec, acc[r][v]);
}

inline void gemm_column(const double* a, const double* b, double* out, std::size_t i, std::size_t k,
                        std::size_t n, std::size_t c, std::size_t p0, std::size_t p1) {
  double acc = out[i * n + c];
  for (std::size_t p = p0; p < p1; ++p) acc += a[i * k + p] * b[p * n + c];
  out[i * n + c] = acc;
}

// Columns [c0, c1) of out (+)= a[m x k] * b[k x n]. Every output element adds
// its k products in ascending order onto its start value (zero unless
// accumulating), however the loops are blocked or split across threads.
void gemm_cols(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n,
               std::size_t c0, std::size_t c1, bool accumulate) {
  if (!accumulate)
    for (std::size_t i = 0; i < m; ++i) std::fill(out + i * n + c0, out + i * n + c1, 0.0);
  for (std::size_t p0 = 0; p0 < k; p0 += kDepthBlock) {
    const std::size_t p1 = std::min(k, p0 + kDepthBlock);
    std::size_t c = c0;
    for (; c + kTileCols <= c1; c += kTileCols) {
      std::size_t i = 0;
      for (; i + kTileRows <= m; i += kTileRows) gemm_tile<kTileRows>(a, b, out, i, k, n, c, p0, p1);
      for (; i < m; ++i) gemm_tile<1>(a, b, out, i, k, n, c, p0, p1);
    }
    for (; c < c1; ++c)
      for (std::size_t i = 0; i < m; ++i) gemm_column(a, b, out, i, k, n, c, p0, p1);
  }
}

// src[rows x cols] -> [cols x rows]. Eight output rows are filled side by
// side, each sequentially, which stays fast when rows * 8 bytes is a multiple
// of the page size. The result lives in a per-thread scratch buffer that the
// next call overwrites.
const double* transpose(const double* src, std::size_t rows, std::size_t cols) {
  constexpr std::size_t kBand = 8;
  thread_local std::vector<double> scratch;
  if (scratch.size() < rows * cols) scratch.resize(rows * cols);
  double* t = scratch.data();
  std::size_t c0 = 0;
  for (; c0 + kBand <= cols; c0 += kBand)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < kBand; ++j) t[(c0 + j) * rows + r] = src[r * cols + c0 + j];
  for (; c0 < cols; ++c0)
    for (std::size_t r = 0; r < rows; ++r) t[c0 * rows + r] = src[r * cols + c0];
  return t;
}

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

inline void spmm_row(const SparseRows& s, const double* in, double* out, std::size_t r, std::size_t dim) {
  double* o = out + r * dim;
  std::fill(o, o + dim, 0.0);
  for (std::size_t e = s.offsets[r]; e < s.offsets[r + 1]; ++e) axpy(s.weights[e], in + s.indices[e] * dim, o, dim);
}

inline bool go_parallel(std::size_t work) { return work >= kParallelWork && max_threads() > 1; }

void gemm_parallel(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n,
                   bool accumulate) {
  const auto blocks = static_cast<std::ptrdiff_t>((n + kColumnBlock - 1) / kColumnBlock);
#pragma omp parallel for schedule(static) if (go_parallel(m * k * n))
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
    const std::size_t c0 = static_cast<std::size_t>(blk) * kColumnBlock;
    gemm_cols(a, b, out, m, k, n, c0, std::min(n, c0 + kColumnBlock), accumulate);
  }
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

namespace reference {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n) {
  gemm_cols(a.data(), b.data(), out.data(), m, k, n, 0, n, false);
}

void linear(std::span<const double> x, std::span<const double> w, std::span<double> out,
            std::size_t rows, std::size_t in_dim, std::size_t out_dim) {
  const auto wt = transpose(w.data(), out_dim, in_dim);
  gemm_cols(x.data(), wt, out.data(), rows, in_dim, out_dim, 0, out_dim, false);
}

void linear_weight_grad(std::span<const double> g, std::span<const double> x, std::span<double> gw,
                        std::size_t rows, std::size_t in_dim, std::size_t out_dim) {
  const auto gt = transpose(g.data(), rows, out_dim);
  gemm_cols(gt, x.data(), gw.data(), out_dim, rows, in_dim, 0, in_dim, true);
}

void spmm(const SparseRows& s, std::span<const double> in, std::span<double> out, std::size_t dim) {
  for (std::size_t r = 0; r < s.out_rows; ++r) spmm_row(s, in.data(), out.data(), r, dim);
}

void spmm_transpose(const SparseRows& s, std::span<const double> g, std::span<double> gin,
                    std::size_t dim) {
  for (std::size_t r = 0; r < s.out_rows; ++r)
    for (std::size_t e = s.offsets[r]; e < s.offsets[r + 1]; ++e)
      axpy(s.weights[e], g.data() + r * dim, gin.data() + s.indices[e] * dim, dim);
}

}  // namespace reference

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n) {
  gemm_parallel(a.data(), b.data(), out.data(), m, k, n, false);
}

void linear(std::span<const double> x, std::span<const double> w, std::span<double> out,
            std::size_t rows, std::size_t in_dim, std::size_t out_dim) {
  const auto wt = transpose(w.data(), out_dim, in_dim);
  gemm_parallel(x.data(), wt, out.data(), rows, in_dim, out_dim, false);
}

void linear_weight_grad(std::span<const double> g, std::span<const double> x, std::span<double> gw,
                        std::size_t rows, std::size_t in_dim, std::size_t out_dim) {
  const auto gt = transpose(g.data(), rows, out_dim);
  gemm_parallel(gt, x.data(), gw.data(), out_dim, rows, in_dim, true);
}

void spmm(const SparseRows& s, std::span<const double> in, std::span<double> out, std::size_t dim) {
  const auto rows = static_cast<std::ptrdiff_t>(s.out_rows);
#pragma omp parallel for schedule(static) if (go_parallel(s.nnz() * dim))
  for (std::ptrdiff_t r = 0; r < rows; ++r) spmm_row(s, in.data(), out.data(), static_cast<std::size_t>(r), dim);
}

void spmm_transpose(const SparseRows& st, std::span<const double> g, std::span<double> gin,
                    std::size_t dim) {
  const auto rows = static_cast<std::ptrdiff_t>(st.out_rows);
#pragma omp parallel for schedule(static) if (go_parallel(st.nnz() * dim))
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const auto idx = static_cast<std::size_t>(r);
    for (std::size_t e = st.offsets[idx]; e < st.offsets[idx + 1]; ++e)
      axpy(st.weights[e], g.data() + st.indices[e] * dim, gin.data() + idx * dim, dim);
  }
}

}  // namespace kernels
}  // namespace skg
