#pragma once

#include "cdpd/nn/modules.hpp"

namespace cdpd::nn {

// Text-to-vision alignment: a text embedding generates a channel-wise scale
// and shift which modulate the feature volume,
//   psi(v, t) = (Wa t + ba) (.) v + Wb t + bb.
template <class T>
struct AlignmentPsi {
    Value<T> wa, ba, wb, bb;
    i64 channels = 0, text_dim = 0;

    static AlignmentPsi make(ParamStore<T>& ps, const std::string& name, const std::string& group,
                             i64 channels, i64 text_dim, Rng& rng) {
        AlignmentPsi m;
        m.channels = channels;
        m.text_dim = text_dim;
        const double sd = 0.02 / std::sqrt(double(text_dim));
        m.wa = ps.add(name + ".wa", group, Tensor<T>::randn({channels, text_dim}, rng, 0.0, sd),
                      true);
        m.ba = ps.add(name + ".ba", group, Tensor<T>::full({channels}, T(1)), true);
        m.wb = ps.add(name + ".wb", group, Tensor<T>::randn({channels, text_dim}, rng, 0.0, sd),
                      true);
        m.bb = ps.add(name + ".bb", group, Tensor<T>({channels}), true);
        return m;
    }

    Value<T> forward(Graph<T>& g, const Value<T>& v, const Tensor<T>& t) const {
        CDPD_CHECK(v->value.shape().back() == channels, "psi: feature volume has ",
                   v->value.shape().back(), " channels, params expect ", channels);
        Value<T> s = ag::affine_vec(g, wa, ba, t);
        Value<T> sh = ag::affine_vec(g, wb, bb, t);
        return ag::film(g, v, s, sh);
    }
};

} // namespace cdpd::nn
