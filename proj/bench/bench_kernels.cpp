// Serial reference kernels against the OpenMP kernels at model-typical sizes.
//
//   bench_kernels [--threads N] [--reps R]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "skg/kernels.hpp"
#include "skg/rng.hpp"

using namespace skg;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

SparseRows random_sparse(std::size_t rows, std::size_t degree, Rng& rng) {
  SparseRows s;
  s.in_rows = rows;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < degree; ++k) s.add(rng.below(rows), 1.0 / static_cast<double>(degree));
    s.end_row();
  }
  return s;
}

double seconds_per_call(const std::function<void()>& f, int reps) {
  f();
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reps;
}

void row(const char* name, double macs, double t_ref, double t_par, bool same) {
  std::printf("%-34s %10.3f %10.3f %8.2fx %8.2f %s\n", name, t_ref * 1e3, t_par * 1e3, t_ref / t_par,
              macs / t_par * 1e-9, same ? "identical" : "DIFFERENT");
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 20;
  for (int i = 1; i < argc; ++i) {
    if (!std::strcmp(argv[i], "--threads") && i + 1 < argc) kernels::set_threads(std::atoi(argv[++i]));
    else if (!std::strcmp(argv[i], "--reps") && i + 1 < argc) reps = std::atoi(argv[++i]);
    else {
      std::fprintf(stderr, "usage: bench_kernels [--threads N] [--reps R]\n");
      return 2;
    }
  }
  std::printf("threads: %d\n", kernels::max_threads());
  std::printf("%-34s %10s %10s %9s %8s\n", "kernel", "ref ms", "omp ms", "speedup", "GMAC/s");
  Rng rng(7);

  struct Dense {
    const char* label;
    std::size_t rows, in, out;
  };
  for (const Dense& d : {Dense{"linear 8x600 -> 512", 8, 600, 512}, Dense{"linear 8x512 -> 512", 8, 512, 512},
                         Dense{"linear 256x512 -> 512", 256, 512, 512}}) {
    auto x = random_vec(d.rows * d.in, rng), w = random_vec(d.out * d.in, rng);
    std::vector<double> a(d.rows * d.out), b(d.rows * d.out);
    const double tr = seconds_per_call([&] { kernels::reference::linear(x, w, a, d.rows, d.in, d.out); }, reps);
    const double tp = seconds_per_call([&] { kernels::linear(x, w, b, d.rows, d.in, d.out); }, reps);
    row(d.label, double(d.rows * d.in * d.out), tr, tp, a == b);

    auto g = random_vec(d.rows * d.out, rng);
    std::vector<double> ga(d.out * d.in), gb(d.out * d.in);
    const double tr2 = seconds_per_call([&] { kernels::reference::linear_weight_grad(g, x, ga, d.rows, d.in, d.out); }, reps);
    const double tp2 = seconds_per_call([&] { kernels::linear_weight_grad(g, x, gb, d.rows, d.in, d.out); }, reps);
    std::string name = std::string("weight grad ") + (d.label + 7);
    row(name.c_str(), double(d.rows * d.in * d.out), tr2, tp2, ga == gb);

    std::vector<double> ma(d.rows * d.in), mb(d.rows * d.in);
    const double tr3 = seconds_per_call([&] { kernels::reference::matmul(g, w, ma, d.rows, d.out, d.in); }, reps);
    const double tp3 = seconds_per_call([&] { kernels::matmul(g, w, mb, d.rows, d.out, d.in); }, reps);
    name = std::string("input grad ") + (d.label + 7);
    row(name.c_str(), double(d.rows * d.in * d.out), tr3, tp3, ma == mb);
  }

  for (std::size_t n : {64, 4096}) {
    const std::size_t dim = 512, degree = 4;
    SparseRows s = random_sparse(n, degree, rng), st = s.transposed();
    auto x = random_vec(n * dim, rng);
    std::vector<double> a(n * dim), b(n * dim);
    const double tr = seconds_per_call([&] { kernels::reference::spmm(s, x, a, dim); }, reps);
    const double tp = seconds_per_call([&] { kernels::spmm(s, x, b, dim); }, reps);
    std::string name = "spmm " + std::to_string(n) + " nodes x 512";
    row(name.c_str(), double(s.nnz() * dim), tr, tp, a == b);
    std::fill(a.begin(), a.end(), 0.0);
    std::fill(b.begin(), b.end(), 0.0);
    const double tr2 = seconds_per_call([&] { kernels::reference::spmm_transpose(s, x, a, dim); }, 1);
    const double tp2 = seconds_per_call([&] { kernels::spmm_transpose(st, x, b, dim); }, 1);
    name = "spmm^T " + std::to_string(n) + " nodes x 512";
    row(name.c_str(), double(s.nnz() * dim), tr2, tp2, a == b);
  }
  return 0;
}
