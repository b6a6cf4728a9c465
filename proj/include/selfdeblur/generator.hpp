#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "selfdeblur/autodiff.hpp"
#include "selfdeblur/image.hpp"
#include "selfdeblur/imgmath.hpp"

namespace selfdeblur {

/// Topology of the multi-input multi-output encoder-decoder.
///
/// `scales` is the number of input/output resolutions (1 gives the
/// single-scale ablation); `levels` is the encoder depth and must be at
/// least `scales`. Level l runs at ceil(H / 2^l) x ceil(W / 2^l) with
/// min(base_width * 2^l, max_width) channels.
struct GeneratorConfig {
    int scales = 4;
    int levels = 4;
    int input_channels = 16;
    int output_channels = 3;
    int base_width = 32;
    int max_width = 128;
    int fe_depth = 2;         // convs per FE / LFF block, including the entry conv
    int converter_depth = 1;  // hidden convs in each CFN block
    double leaky_slope = 0.2;
    std::uint64_t seed = 0;

    [[nodiscard]] int width_at(int level) const {
        return std::min(base_width << level, max_width);
    }

    void validate() const {
        if (scales < 1 || scales > 4) throw std::invalid_argument("GeneratorConfig: scales must be in 1..4");
        if (levels < scales) throw std::invalid_argument("GeneratorConfig: levels must be >= scales");
        if (input_channels < 1) throw std::invalid_argument("GeneratorConfig: input_channels must be >= 1");
        if (output_channels != 1 && output_channels != 3) {
            throw std::invalid_argument("GeneratorConfig: output_channels must be 1 or 3");
        }
        if (base_width < 1 || max_width < base_width) {
            throw std::invalid_argument("GeneratorConfig: invalid widths");
        }
        if (fe_depth < 1 || converter_depth < 0) {
            throw std::invalid_argument("GeneratorConfig: invalid block depths");
        }
    }
};

struct ParamTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<double> data;
};

/// All learnable tensors plus the configuration and target size they were
/// built for, which fully determine the layout.
struct GeneratorParams {
    GeneratorConfig config;
    int height = 0;
    int width = 0;
    std::vector<ParamTensor> tensors;

    [[nodiscard]] std::size_t count() const {
        std::size_t n = 0;
        for (const auto& t : tensors) n += t.data.size();
        return n;
    }
    [[nodiscard]] bool all_finite() const {
        for (const auto& t : tensors)
            for (double v : t.data)
                if (!std::isfinite(v)) return false;
        return true;
    }
};

/// Same layout as GeneratorParams::tensors.
using ParamGrads = std::vector<std::vector<double>>;

inline ParamGrads zero_grads(const GeneratorParams& p) {
    ParamGrads g;
    g.reserve(p.tensors.size());
    for (const auto& t : p.tensors) g.emplace_back(t.data.size(), 0.0);
    return g;
}

/// Fixed random inputs, one per output scale, finest first.
struct RandomInputs {
    std::vector<Tensor> z;
};

namespace detail {

struct ConvSlot {
    int weight = -1;  // index into GeneratorParams::tensors; bias is weight + 1
    int cin = 0;
    int cout = 0;
    int stride = 1;
};

/// Index map from blocks to parameter tensors, derived from the config only.
struct GeneratorLayout {
    std::vector<std::vector<ConvSlot>> input_conv;   // [scale]
    std::vector<ConvSlot> level0;                    // trailing convs of the level-0 FE
    std::vector<std::vector<ConvSlot>> fe;           // [level], level 0 unused
    std::vector<ConvSlot> sff;                       // [level], unused where no coarse input
    std::vector<ConvSlot> up;                        // [level], conv after upsampling level+1
    std::vector<std::vector<ConvSlot>> lff;          // [level]
    std::vector<std::vector<ConvSlot>> out_extra;    // [scale]
    std::vector<std::vector<ConvSlot>> cfn;          // [scale], last entry maps to output channels
};

class LayoutBuilder {
public:
    explicit LayoutBuilder(std::vector<ParamTensor>* sink) : sink_(sink) {}

    ConvSlot conv(const std::string& name, int cin, int cout, int stride = 1) {
        ConvSlot s{static_cast<int>(sink_->size()), cin, cout, stride};
        sink_->push_back({name + ".weight", {cout, cin, 3, 3},
                          std::vector<double>(static_cast<std::size_t>(cout) * cin * 9, 0.0)});
        sink_->push_back({name + ".bias", {cout}, std::vector<double>(cout, 0.0)});
        return s;
    }

private:
    std::vector<ParamTensor>* sink_;
};

inline GeneratorLayout build_layout(const GeneratorConfig& cfg, std::vector<ParamTensor>* tensors) {
    LayoutBuilder b(tensors);
    GeneratorLayout l;
    const int levels = cfg.levels;
    const int zc = cfg.input_channels;
    auto name = [](const std::string& block, int i, int j) {
        return block + std::to_string(i) + "." + std::to_string(j);
    };

    // Input converter: coarser scales get one extra conv per scale step.
    l.input_conv.resize(cfg.scales);
    for (int s = 0; s < cfg.scales; ++s) {
        const int w = cfg.width_at(s);
        l.input_conv[s].push_back(b.conv(name("ic", s, 0), zc, w));
        for (int e = 0; e < s; ++e) l.input_conv[s].push_back(b.conv(name("ic", s, e + 1), w, w));
    }

    for (int j = 1; j < cfg.fe_depth; ++j) {
        l.level0.push_back(b.conv(name("fe", 0, j), cfg.width_at(0), cfg.width_at(0)));
    }
    l.fe.resize(levels);
    l.sff.resize(levels);
    for (int lv = 1; lv < levels; ++lv) {
        const int wi = cfg.width_at(lv - 1);
        const int w = cfg.width_at(lv);
        l.fe[lv].push_back(b.conv(name("fe", lv, 0), wi, w, 2));
        for (int j = 1; j < cfg.fe_depth; ++j) l.fe[lv].push_back(b.conv(name("fe", lv, j), w, w));
        if (lv < cfg.scales) l.sff[lv] = b.conv(name("sff", lv, 0), w, w);
    }

    l.up.resize(levels);
    l.lff.resize(levels);
    for (int lv = levels - 2; lv >= 0; --lv) {
        const int w = cfg.width_at(lv);
        l.up[lv] = b.conv(name("up", lv, 0), cfg.width_at(lv + 1), w);
        l.lff[lv].push_back(b.conv(name("lff", lv, 0), 2 * w, w));
        for (int j = 1; j < cfg.fe_depth; ++j) l.lff[lv].push_back(b.conv(name("lff", lv, j), w, w));
    }

    l.out_extra.resize(cfg.scales);
    l.cfn.resize(cfg.scales);
    for (int s = 0; s < cfg.scales; ++s) {
        const int w = cfg.width_at(s);
        for (int e = 0; e < s; ++e) l.out_extra[s].push_back(b.conv(name("oc", s, e), w, w));
        int cin = w + zc;
        for (int j = 0; j < cfg.converter_depth; ++j) {
            l.cfn[s].push_back(b.conv(name("cfn", s, j), cin, w));
            cin = w;
        }
        l.cfn[s].push_back(b.conv(name("cfn", s, cfg.converter_depth), cin, cfg.output_channels));
    }
    return l;
}

inline void check_dims(const GeneratorConfig& cfg, int height, int width) {
    const int ch = scaled_dim(height, cfg.scales - 1);
    const int cw = scaled_dim(width, cfg.scales - 1);
    if (std::min(ch, cw) < 8) {
        throw std::invalid_argument("generator: coarsest output scale must be at least 8x8, got " +
                                    std::to_string(ch) + "x" + std::to_string(cw));
    }
    if (std::min(scaled_dim(height, cfg.levels - 1), scaled_dim(width, cfg.levels - 1)) < 2) {
        throw std::invalid_argument("generator: deepest encoder level must be at least 2x2");
    }
}

}  // namespace detail

struct GeneratorInit {
    GeneratorParams params;
    RandomInputs inputs;
};

/// He-normal weights, zero biases, and uniform(0,1) random inputs drawn at
/// the coarsest output scale; each finer input is the nearest-neighbour 2x
/// upsample of the next coarser one.
inline GeneratorInit init_generator(const GeneratorConfig& cfg, int height, int width) {
    cfg.validate();
    detail::check_dims(cfg, height, width);

    GeneratorInit out;
    out.params.config = cfg;
    out.params.height = height;
    out.params.width = width;
    detail::build_layout(cfg, &out.params.tensors);

    std::mt19937_64 rng(cfg.seed);
    for (auto& t : out.params.tensors) {
        if (t.shape.size() != 4) continue;  // biases stay zero
        const int fan_in = t.shape[1] * 9;
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        for (auto& v : t.data) v = dist(rng);
    }

    const int coarsest = cfg.scales - 1;
    auto& z = out.inputs.z;
    z.resize(cfg.scales);
    Tensor& zc = z[coarsest];
    zc = Tensor(cfg.input_channels, scaled_dim(height, coarsest), scaled_dim(width, coarsest));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (auto& v : zc.v) v = uni(rng);
    for (int s = coarsest - 1; s >= 0; --s) {
        const Tensor& src = z[s + 1];
        Tensor dst(cfg.input_channels, scaled_dim(height, s), scaled_dim(width, s));
        for (int c = 0; c < dst.c; ++c)
            for (int r = 0; r < dst.h; ++r)
                for (int col = 0; col < dst.w; ++col) dst.at(c, r, col) = src.at(c, r / 2, col / 2);
        z[s] = std::move(dst);
    }
    return out;
}

/// One forward evaluation kept on a tape so gradients can be pulled back.
class GeneratorPass {
public:
    GeneratorPass(const GeneratorParams& params, const RandomInputs& inputs, bool with_grads)
        : params_(&params), tape_(std::make_unique<Tape>()) {
        const GeneratorConfig& cfg = params.config;
        cfg.validate();
        if (static_cast<int>(inputs.z.size()) != cfg.scales) {
            throw std::invalid_argument("GeneratorPass: random inputs do not match the config");
        }
        std::vector<ParamTensor> shape_only;
        layout_ = detail::build_layout(cfg, &shape_only);
        if (shape_only.size() != params.tensors.size()) {
            throw std::invalid_argument("GeneratorPass: parameter layout mismatch");
        }
        for (std::size_t i = 0; i < shape_only.size(); ++i) {
            if (shape_only[i].shape != params.tensors[i].shape ||
                params.tensors[i].data.size() != shape_only[i].data.size()) {
                throw std::invalid_argument("GeneratorPass: parameter shape mismatch at " +
                                            params.tensors[i].name);
            }
        }
        if (with_grads) grads_ = zero_grads(params);
        build(inputs);
    }

    [[nodiscard]] int scales() const { return static_cast<int>(outputs_.size()); }

    /// Output image at scale s.
    [[nodiscard]] Image image(int s) const {
        const Tensor& t = tape_->value(outputs_.at(s));
        Image img(t.h, t.w, t.c);
        img.data = t.v;
        return img;
    }

    [[nodiscard]] std::vector<Image> images() const {
        std::vector<Image> out;
        for (int s = 0; s < scales(); ++s) out.push_back(image(s));
        return out;
    }

    /// Reverse pass given dLoss/dx^s for every scale. May be called once.
    ParamGrads backward(const std::vector<Image>& upstream) {
        if (grads_.empty()) throw std::logic_error("GeneratorPass: constructed without gradients");
        if (done_) throw std::logic_error("GeneratorPass: backward already ran");
        if (static_cast<int>(upstream.size()) != scales()) {
            throw std::invalid_argument("GeneratorPass: upstream gradient count mismatch");
        }
        for (int s = 0; s < scales(); ++s) {
            Tensor& g = tape_->grad(outputs_[s]);
            if (g.size() != upstream[s].size()) {
                throw std::invalid_argument("GeneratorPass: upstream gradient shape mismatch");
            }
            std::copy(upstream[s].data.begin(), upstream[s].data.end(), g.v.begin());
        }
        tape_->backward();
        done_ = true;
        return std::move(grads_);
    }

private:
    Tape::Id conv(Tape::Id x, const detail::ConvSlot& slot, bool activate = true) {
        ConvParams p;
        p.weight = &params_->tensors[slot.weight].data;
        p.bias = &params_->tensors[slot.weight + 1].data;
        if (!grads_.empty()) {
            p.weight_grad = &grads_[slot.weight];
            p.bias_grad = &grads_[slot.weight + 1];
        }
        p.cin = slot.cin;
        p.cout = slot.cout;
        p.stride = slot.stride;
        Tape::Id y = tape_->conv(x, p);
        return activate ? tape_->leaky_relu(y, params_->config.leaky_slope) : y;
    }

    Tape::Id chain(Tape::Id x, const std::vector<detail::ConvSlot>& slots) {
        for (const auto& s : slots) x = conv(x, s);
        return x;
    }

    void build(const RandomInputs& inputs) {
        const GeneratorConfig& cfg = params_->config;
        const int levels = cfg.levels;
        Tape& t = *tape_;

        std::vector<Tape::Id> z(cfg.scales);
        std::vector<Tape::Id> converted(cfg.scales);
        for (int s = 0; s < cfg.scales; ++s) {
            z[s] = t.input(inputs.z[s]);
            converted[s] = chain(z[s], layout_.input_conv[s]);
        }

        // Encoder
        std::vector<Tape::Id> enc(levels);
        enc[0] = chain(converted[0], layout_.level0);
        for (int lv = 1; lv < levels; ++lv) {
            Tape::Id fe = chain(enc[lv - 1], layout_.fe[lv]);
            if (lv < cfg.scales) {
                // SFF: product fusion with the converted coarse input, plus a
                // residual correction.
                Tape::Id fused = t.mul(fe, converted[lv]);
                enc[lv] = t.add(fused, conv(fused, layout_.sff[lv]));
            } else {
                enc[lv] = fe;
            }
        }

        // Decoder
        std::vector<Tape::Id> dec(levels);
        dec[levels - 1] = enc[levels - 1];
        for (int lv = levels - 2; lv >= 0; --lv) {
            const Tensor& skip = t.value(enc[lv]);
            Tape::Id up = t.upsample2(dec[lv + 1], skip.h, skip.w);
            up = conv(up, layout_.up[lv]);
            Tape::Id cat = t.concat(up, enc[lv]);
            dec[lv] = chain(cat, layout_.lff[lv]);
        }

        // Output converter with CFN
        outputs_.resize(cfg.scales);
        for (int s = 0; s < cfg.scales; ++s) {
            Tape::Id f = chain(dec[s], layout_.out_extra[s]);
            f = t.concat(f, z[s]);
            const auto& blocks = layout_.cfn[s];
            for (std::size_t j = 0; j + 1 < blocks.size(); ++j) f = conv(f, blocks[j]);
            f = conv(f, blocks.back(), false);
            outputs_[s] = t.sigmoid(f);
        }
    }

    const GeneratorParams* params_;
    std::unique_ptr<Tape> tape_;
    detail::GeneratorLayout layout_;
    ParamGrads grads_;
    std::vector<Tape::Id> outputs_;
    bool done_ = false;
};

/// Latent images {x^s}, finest first.
inline std::vector<Image> forward(const GeneratorParams& params, const RandomInputs& inputs) {
    return GeneratorPass(params, inputs, false).images();
}

/// Exact gradients of a scalar loss with respect to every parameter tensor,
/// given dLoss/dx^s for each output scale.
inline ParamGrads param_gradients(const GeneratorParams& params, const RandomInputs& inputs,
                                  const std::vector<Image>& upstream) {
    GeneratorPass pass(params, inputs, true);
    return pass.backward(upstream);
}

}  // namespace selfdeblur
