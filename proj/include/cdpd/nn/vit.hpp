#pragma once

#include "cdpd/nn/modules.hpp"

namespace cdpd::nn {

// Frozen ViT used as the dense feature backbone. It never participates in the
// autograd tape: gradients stop at its outputs by construction. A seeded
// stand-in configuration covers desk-scale runs; the same structure can be
// filled from an external weights file.

struct ViTConfig {
    i64 patch = 16;
    i64 embed = 64;
    int depth = 4;
    int heads = 4;
    double mlp_ratio = 2.0;
    i64 pos_grid = 14; // base grid; interpolated to the actual token grid
    int taps = 4;      // last `taps` block outputs are exposed

    i64 mlp_hidden() const { return i64(mlp_ratio * double(embed)); }
};

template <class T>
struct ViTBackbone {
    ViTConfig cfg;
    Value<T> patch_w, patch_b, pos;
    struct Block {
        Value<T> ln1_g, ln1_b, qkv_w, qkv_b, proj_w, proj_b;
        Value<T> ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
    };
    std::vector<Block> blocks;

    static ViTBackbone make(ParamStore<T>& ps, const std::string& name, const ViTConfig& cfg,
                            Rng& rng) {
        ViTBackbone m;
        m.cfg = cfg;
        const std::string grp = "dense_backbone";
        const i64 pk = cfg.patch * cfg.patch * 3;
        auto rnd = [&](Shape s, double sd) { return Tensor<T>::randn(std::move(s), rng, 0.0, sd); };
        m.patch_w = ps.add(name + ".patch.w", grp, rnd({pk, cfg.embed}, 1.0 / std::sqrt(double(pk))), false);
        m.patch_b = ps.add(name + ".patch.b", grp, Tensor<T>({cfg.embed}), false);
        m.pos = ps.add(name + ".pos", grp, rnd({cfg.pos_grid, cfg.pos_grid, cfg.embed}, 0.02), false);
        const double sd = 1.0 / std::sqrt(double(cfg.embed));
        for (int i = 0; i < cfg.depth; ++i) {
            const std::string bn = name + ".blk" + std::to_string(i);
            Block b;
            b.ln1_g = ps.add(bn + ".ln1.g", grp, Tensor<T>::full({cfg.embed}, T(1)), false);
            b.ln1_b = ps.add(bn + ".ln1.b", grp, Tensor<T>({cfg.embed}), false);
            b.qkv_w = ps.add(bn + ".qkv.w", grp, rnd({cfg.embed, 3 * cfg.embed}, sd), false);
            b.qkv_b = ps.add(bn + ".qkv.b", grp, Tensor<T>({3 * cfg.embed}), false);
            b.proj_w = ps.add(bn + ".proj.w", grp, rnd({cfg.embed, cfg.embed}, sd), false);
            b.proj_b = ps.add(bn + ".proj.b", grp, Tensor<T>({cfg.embed}), false);
            b.ln2_g = ps.add(bn + ".ln2.g", grp, Tensor<T>::full({cfg.embed}, T(1)), false);
            b.ln2_b = ps.add(bn + ".ln2.b", grp, Tensor<T>({cfg.embed}), false);
            b.fc1_w = ps.add(bn + ".fc1.w", grp, rnd({cfg.embed, cfg.mlp_hidden()}, sd), false);
            b.fc1_b = ps.add(bn + ".fc1.b", grp, Tensor<T>({cfg.mlp_hidden()}), false);
            b.fc2_w = ps.add(bn + ".fc2.w", grp,
                             rnd({cfg.mlp_hidden(), cfg.embed}, 1.0 / std::sqrt(double(cfg.mlp_hidden()))),
                             false);
            b.fc2_b = ps.add(bn + ".fc2.b", grp, Tensor<T>({cfg.embed}), false);
            m.blocks.push_back(std::move(b));
        }
        return m;
    }

    // slice: {H, W, 3} with H, W multiples of patch. Returns the last `taps`
    // block outputs as {gh, gw, embed} grids.
    std::vector<Tensor<T>> forward_slice(const Tensor<T>& slice) const {
        const i64 H = slice.dim(0), W = slice.dim(1);
        CDPD_CHECK(slice.rank() == 3 && slice.dim(2) == 3, "backbone expects an HxWx3 slice");
        CDPD_CHECK(H % cfg.patch == 0 && W % cfg.patch == 0, "slice ", H, "x", W,
                   " not divisible by patch ", cfg.patch);
        const i64 gh = H / cfg.patch, gw = W / cfg.patch;
        const i64 N = gh * gw;
        const i64 pk = cfg.patch * cfg.patch * 3;

        Tensor<T> tokens({N, cfg.embed});
        {
            Tensor<T> patches({N, pk});
            parallel_for(N, [&](i64 t) {
                const i64 gy = t / gw, gx = t % gw;
                T* dst = patches.data() + t * pk;
                for (i64 py = 0; py < cfg.patch; ++py)
                    for (i64 px = 0; px < cfg.patch; ++px) {
                        const T* src = &slice[( (gy * cfg.patch + py) * W + gx * cfg.patch + px) * 3];
                        *dst++ = src[0];
                        *dst++ = src[1];
                        *dst++ = src[2];
                    }
            }, 8);
            kernels::par::gemm_nn(N, cfg.embed, pk, patches.data(), patch_w->value.data(),
                                  tokens.data(), false);
            for (i64 t = 0; t < N; ++t) {
                T* row = tokens.data() + t * cfg.embed;
                for (i64 e = 0; e < cfg.embed; ++e) row[e] += patch_b->value[e];
            }
        }
        {
            Tensor<T> pos_grid = pos->value.reshaped({1, cfg.pos_grid, cfg.pos_grid, cfg.embed});
            Tensor<T> pos_resized = kernels::par::resize_trilinear(pos_grid, {1, gh, gw});
            for (i64 i = 0; i < tokens.numel(); ++i) tokens[i] += pos_resized[i];
        }

        std::vector<Tensor<T>> out;
        const int first_tap = cfg.depth - cfg.taps;
        CDPD_CHECK(first_tap >= 0, "backbone: ", cfg.taps, " taps but only ", cfg.depth,
                   " blocks");
        for (int i = 0; i < cfg.depth; ++i) {
            block_forward(blocks[size_t(i)], tokens);
            if (i >= first_tap) out.push_back(tokens.reshaped({gh, gw, cfg.embed}));
        }
        return out;
    }

private:
    static void layernorm(const Tensor<T>& x, const Tensor<T>& g, const Tensor<T>& b,
                          Tensor<T>& y) {
        const i64 N = x.dim(0), E = x.dim(1);
        for (i64 i = 0; i < N; ++i) {
            const T* xi = x.data() + i * E;
            T* yi = y.data() + i * E;
            double mean = 0.0;
            for (i64 e = 0; e < E; ++e) mean += double(xi[e]);
            mean /= double(E);
            double var = 0.0;
            for (i64 e = 0; e < E; ++e) {
                const double d = double(xi[e]) - mean;
                var += d * d;
            }
            var /= double(E);
            const double inv = 1.0 / std::sqrt(var + 1e-6);
            for (i64 e = 0; e < E; ++e)
                yi[e] = T((double(xi[e]) - mean) * inv * double(g[e]) + double(b[e]));
        }
    }

    static void gelu_inplace(Tensor<T>& x) {
        for (i64 i = 0; i < x.numel(); ++i) {
            const double v = double(x[i]);
            x[i] = T(0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))));
        }
    }

    void block_forward(const Block& b, Tensor<T>& tokens) const {
        const i64 N = tokens.dim(0), E = cfg.embed;
        const int H = cfg.heads;
        const i64 d = E / H;
        Tensor<T> normed({N, E});
        layernorm(tokens, b.ln1_g->value, b.ln1_b->value, normed);
        Tensor<T> qkv({N, 3 * E});
        kernels::par::gemm_nn(N, 3 * E, E, normed.data(), b.qkv_w->value.data(), qkv.data(), false);
        for (i64 i = 0; i < N; ++i) {
            T* row = qkv.data() + i * 3 * E;
            for (i64 e = 0; e < 3 * E; ++e) row[e] += b.qkv_b->value[e];
        }
        Tensor<T> attn_out({N, E});
        Tensor<T> q({N, d}), k({N, d}), v({N, d}), logits({N, N}), weights({N, N}), oh({N, d});
        for (int h = 0; h < H; ++h) {
            for (i64 i = 0; i < N; ++i) {
                const T* row = qkv.data() + i * 3 * E;
                std::memcpy(q.data() + i * d, row + h * d, size_t(d) * sizeof(T));
                std::memcpy(k.data() + i * d, row + E + h * d, size_t(d) * sizeof(T));
                std::memcpy(v.data() + i * d, row + 2 * E + h * d, size_t(d) * sizeof(T));
            }
            kernels::par::gemm_nt(N, N, d, q.data(), k.data(), logits.data(), false);
            const T s = T(1.0 / std::sqrt(double(d)));
            for (i64 i = 0; i < logits.numel(); ++i) logits[i] *= s;
            kernels::softmax_rows_forward(logits.data(), weights.data(), N, N);
            kernels::par::gemm_nn(N, d, N, weights.data(), v.data(), oh.data(), false);
            for (i64 i = 0; i < N; ++i)
                std::memcpy(attn_out.data() + i * E + h * d, oh.data() + i * d,
                            size_t(d) * sizeof(T));
        }
        Tensor<T> proj({N, E});
        kernels::par::gemm_nn(N, E, E, attn_out.data(), b.proj_w->value.data(), proj.data(), false);
        for (i64 i = 0; i < N; ++i) {
            T* row = proj.data() + i * E;
            const T* t = tokens.data() + i * E;
            for (i64 e = 0; e < E; ++e) row[e] = row[e] + b.proj_b->value[e] + t[e];
        }
        // proj now holds x + attn(ln1(x))
        layernorm(proj, b.ln2_g->value, b.ln2_b->value, normed);
        Tensor<T> hidden({N, cfg.mlp_hidden()});
        kernels::par::gemm_nn(N, cfg.mlp_hidden(), E, normed.data(), b.fc1_w->value.data(),
                              hidden.data(), false);
        for (i64 i = 0; i < N; ++i) {
            T* row = hidden.data() + i * cfg.mlp_hidden();
            for (i64 e = 0; e < cfg.mlp_hidden(); ++e) row[e] += b.fc1_b->value[e];
        }
        gelu_inplace(hidden);
        kernels::par::gemm_nn(N, E, cfg.mlp_hidden(), hidden.data(), b.fc2_w->value.data(),
                              tokens.data(), false);
        for (i64 i = 0; i < N; ++i) {
            T* row = tokens.data() + i * E;
            const T* p = proj.data() + i * E;
            for (i64 e = 0; e < E; ++e) row[e] = row[e] + b.fc2_b->value[e] + p[e];
        }
    }
};

} // namespace cdpd::nn
