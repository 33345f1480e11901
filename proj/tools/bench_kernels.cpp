// Microbenchmark comparing the serial reference kernels against the
// OpenMP/SIMD ones. Prints ms per call and effective GFLOP/s.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "cdpd/core/rng.hpp"
#include "cdpd/core/tensor.hpp"
#include "cdpd/kernels/conv3d.hpp"
#include "cdpd/kernels/gemm.hpp"

using namespace cdpd;

namespace {

double now_ms() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

template <class F>
double time_call(const F& f, int reps) {
    f(); // warm-up
    double t0 = now_ms();
    for (int r = 0; r < reps; ++r) f();
    return (now_ms() - t0) / reps;
}

void bench_gemm(i64 M, i64 N, i64 K, int reps) {
    Rng rng(1234);
    Tensor<float> a = Tensor<float>::randn({M, K}, rng);
    Tensor<float> b = Tensor<float>::randn({K, N}, rng);
    Tensor<float> c({M, N});
    const double flops = 2.0 * double(M) * N * K;

    double ms_par = time_call(
        [&] { kernels::par::gemm_nn(M, N, K, a.data(), b.data(), c.data(), false); }, reps);
    double ms_ser = time_call(
        [&] { kernels::serial::gemm_nn(M, N, K, a.data(), b.data(), c.data(), false); }, 1);
    std::printf("gemm_nn  %5lldx%-5lldx%-5lld  par %8.2f ms (%6.1f GF/s)   serial %8.2f ms (%6.1f GF/s)\n",
                (long long)M, (long long)N, (long long)K, ms_par, flops / ms_par / 1e6, ms_ser,
                flops / ms_ser / 1e6);
}

void bench_gemm_tn_nt(i64 M, i64 N, i64 K, int reps) {
    Rng rng(77);
    Tensor<float> a = Tensor<float>::randn({M, K}, rng);
    Tensor<float> b = Tensor<float>::randn({M, N}, rng);
    Tensor<float> c({K, N});
    const double flops = 2.0 * double(M) * N * K;
    double ms = time_call(
        [&] { kernels::par::gemm_tn(M, N, K, a.data(), b.data(), c.data(), false); }, reps);
    std::printf("gemm_tn  %5lldx%-5lldx%-5lld  par %8.2f ms (%6.1f GF/s)\n", (long long)M,
                (long long)N, (long long)K, ms, flops / ms / 1e6);
    Tensor<float> bt = Tensor<float>::randn({N, K}, rng);
    Tensor<float> c2({M, N});
    double ms2 = time_call(
        [&] { kernels::par::gemm_nt(M, N, K, a.data(), bt.data(), c2.data(), false); }, reps);
    std::printf("gemm_nt  %5lldx%-5lldx%-5lld  par %8.2f ms (%6.1f GF/s)\n", (long long)M,
                (long long)N, (long long)K, ms2, flops / ms2 / 1e6);
}

void check_small() {
    Rng rng(5);
    const i64 M = 37, N = 29, K = 41;
    Tensor<float> a = Tensor<float>::randn({M, K}, rng);
    Tensor<float> b = Tensor<float>::randn({K, N}, rng);
    Tensor<float> c1({M, N}), c2({M, N});
    kernels::serial::gemm_nn(M, N, K, a.data(), b.data(), c1.data(), false);
    kernels::par::gemm_nn(M, N, K, a.data(), b.data(), c2.data(), false);
    std::printf("nn max diff: %.3g\n", max_abs_diff(c1, c2));
    Tensor<float> bm = Tensor<float>::randn({M, N}, rng);
    Tensor<float> d1({K, N}), d2({K, N});
    kernels::serial::gemm_tn(M, N, K, a.data(), bm.data(), d1.data(), false);
    kernels::par::gemm_tn(M, N, K, a.data(), bm.data(), d2.data(), false);
    std::printf("tn max diff: %.3g\n", max_abs_diff(d1, d2));
    Tensor<float> bn = Tensor<float>::randn({N, K}, rng);
    Tensor<float> e1({M, N}), e2({M, N});
    kernels::serial::gemm_nt(M, N, K, a.data(), bn.data(), e1.data(), false);
    kernels::par::gemm_nt(M, N, K, a.data(), bn.data(), e2.data(), false);
    std::printf("nt max diff: %.3g\n", max_abs_diff(e1, e2));
}

void bench_conv(i64 D, i64 H, i64 W, i64 Cin, i64 Cout, std::array<i64, 3> k,
                std::array<i64, 3> s, int reps) {
    Rng rng(99);
    Tensor<float> x = Tensor<float>::randn({D, H, W, Cin}, rng);
    kernels::Conv3dSpec spec{k, s, kernels::same_padding(k)};
    Tensor<float> w = Tensor<float>::randn({k[0], k[1], k[2], Cin, Cout}, rng, 0.0, 0.05);
    Tensor<float> bias({Cout});
    Tensor<float> y;
    double ms_par = time_call([&] { y = kernels::par::conv3d(x, w, &bias, spec); }, reps);
    double ms_ser = time_call([&] { y = kernels::serial::conv3d(x, w, &bias, spec); }, 1);
    const double flops = 2.0 * double(y.numel()) * Cin * k[0] * k[1] * k[2];
    std::printf("conv3d   in %lldx%lldx%lldx%lld k%lldx%lldx%lld s%lldx%lldx%lld c%lld->%lld  par %8.2f ms (%6.1f GF/s)  serial %8.2f ms\n",
                (long long)D, (long long)H, (long long)W, (long long)Cin, (long long)k[0],
                (long long)k[1], (long long)k[2], (long long)s[0], (long long)s[1],
                (long long)s[2], (long long)Cin, (long long)Cout, ms_par, flops / ms_par / 1e6,
                ms_ser);
}

} // namespace

int main(int argc, char** argv) {
    int reps = argc > 1 ? std::atoi(argv[1]) : 3;
    std::printf("threads: %d\n", max_threads());
    check_small();
    bench_gemm(512, 512, 512, reps);
    bench_gemm_tn_nt(4096, 512, 512, reps);
    bench_gemm(4096, 320, 864, reps);   // decoder-style tall GEMM
    bench_gemm(1728, 64, 1728, reps);   // attention-style
    bench_conv(32, 16, 16, 64, 64, {3, 3, 3}, {1, 1, 1}, reps);
    bench_conv(16, 8, 8, 128, 128, {3, 3, 3}, {1, 1, 1}, reps);
    bench_conv(96, 96, 96, 32, 32, {1, 3, 3}, {1, 1, 1}, 1);
    return 0;
}
