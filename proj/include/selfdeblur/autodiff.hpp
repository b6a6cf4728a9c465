#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace selfdeblur {

/// Dense C x H x W feature map.
struct Tensor {
    int c = 0;
    int h = 0;
    int w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int channels, int height, int width, double fill = 0.0)
        : c(channels), h(height), w(width),
          v(static_cast<std::size_t>(channels) * height * width, fill) {}

    [[nodiscard]] std::size_t size() const { return v.size(); }
    [[nodiscard]] std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    double& at(int ch, int r, int col) { return v[ch * plane() + static_cast<std::size_t>(r) * w + col]; }
    [[nodiscard]] double at(int ch, int r, int col) const {
        return v[ch * plane() + static_cast<std::size_t>(r) * w + col];
    }
    [[nodiscard]] bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }
};

/// Learnable 3x3 convolution: weight is [cout][cin][3][3], bias is [cout].
struct ConvParams {
    const std::vector<double>* weight = nullptr;
    const std::vector<double>* bias = nullptr;
    std::vector<double>* weight_grad = nullptr;  // may be null when gradients are not needed
    std::vector<double>* bias_grad = nullptr;
    int cin = 0;
    int cout = 0;
    int stride = 1;
};

/// Minimal reverse-mode tape over feature maps. Nodes are appended in
/// evaluation order; backward() walks them in reverse and accumulates into
/// node gradients and into the parameter gradient buffers passed to conv().
class Tape {
public:
    using Id = int;

    Tape() = default;
    // Backward closures capture `this`.
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Id input(Tensor value) { return push(std::move(value), false); }

    [[nodiscard]] const Tensor& value(Id id) const { return nodes_.at(id).value; }
    Tensor& grad(Id id) {
        Node& n = nodes_.at(id);
        if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.c, n.value.h, n.value.w);
        return n.grad;
    }
    [[nodiscard]] bool requires_grad(Id id) const { return nodes_.at(id).requires_grad; }
    [[nodiscard]] std::size_t size() const { return nodes_.size(); }

    /// 3x3 convolution, zero padding 1. Output size is ceil(in / stride).
    Id conv(Id x, const ConvParams& p) {
        const Tensor& in = value(x);
        if (in.c != p.cin) throw std::invalid_argument("Tape::conv: channel mismatch");
        const int ho = (in.h - 1) / p.stride + 1;
        const int wo = (in.w - 1) / p.stride + 1;
        const int k = p.cin * 9;
        const int pix = ho * wo;

        std::vector<double> col(static_cast<std::size_t>(k) * pix, 0.0);
        im2col(in, p.stride, ho, wo, col);

        Tensor out(p.cout, ho, wo);
        using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        Eigen::Map<const RowMat> wm(p.weight->data(), p.cout, k);
        Eigen::Map<const RowMat> cm(col.data(), k, pix);
        Eigen::Map<RowMat> om(out.v.data(), p.cout, pix);
        om.noalias() = wm * cm;
        for (int o = 0; o < p.cout; ++o) om.row(o).array() += (*p.bias)[o];

        const bool need = requires_grad(x) || p.weight_grad != nullptr;
        Id id = push(std::move(out), need);
        nodes_[id].aux = std::move(col);
        nodes_[id].back = [this, x, p, ho, wo, k, pix](Id self) {
            const Tensor& g = nodes_[self].grad;
            Eigen::Map<const RowMat> gm(g.v.data(), p.cout, pix);
            Eigen::Map<const RowMat> cm(nodes_[self].aux.data(), k, pix);
            if (p.weight_grad) {
                Eigen::Map<RowMat> dw(p.weight_grad->data(), p.cout, k);
                dw.noalias() += gm * cm.transpose();
                for (int o = 0; o < p.cout; ++o) (*p.bias_grad)[o] += gm.row(o).sum();
            }
            if (requires_grad(x)) {
                Eigen::Map<const RowMat> wm(p.weight->data(), p.cout, k);
                std::vector<double> dcol(static_cast<std::size_t>(k) * pix);
                Eigen::Map<RowMat> dcm(dcol.data(), k, pix);
                dcm.noalias() = wm.transpose() * gm;
                col2im(dcol, p.stride, ho, wo, grad(x));
            }
        };
        return id;
    }

    Id leaky_relu(Id x, double slope) {
        Tensor out = value(x);
        for (auto& v : out.v) v = v > 0.0 ? v : slope * v;
        Id id = push(std::move(out), requires_grad(x));
        nodes_[id].back = [this, x, slope](Id self) {
            const Tensor& in = value(x);
            const Tensor& g = nodes_[self].grad;
            Tensor& gx = grad(x);
            for (std::size_t i = 0; i < g.size(); ++i) gx.v[i] += in.v[i] > 0.0 ? g.v[i] : slope * g.v[i];
        };
        return id;
    }

    Id sigmoid(Id x) {
        Tensor out = value(x);
        for (auto& v : out.v) v = 1.0 / (1.0 + std::exp(-v));
        Id id = push(std::move(out), requires_grad(x));
        nodes_[id].back = [this, x](Id self) {
            const Tensor& y = nodes_[self].value;
            const Tensor& g = nodes_[self].grad;
            Tensor& gx = grad(x);
            for (std::size_t i = 0; i < g.size(); ++i) gx.v[i] += g.v[i] * y.v[i] * (1.0 - y.v[i]);
        };
        return id;
    }

    Id add(Id a, Id b) {
        check_same(a, b, "add");
        Tensor out = value(a);
        const Tensor& vb = value(b);
        for (std::size_t i = 0; i < out.size(); ++i) out.v[i] += vb.v[i];
        Id id = push(std::move(out), requires_grad(a) || requires_grad(b));
        nodes_[id].back = [this, a, b](Id self) {
            const Tensor& g = nodes_[self].grad;
            for (Id t : {a, b}) {
                if (!requires_grad(t)) continue;
                Tensor& gt = grad(t);
                for (std::size_t i = 0; i < g.size(); ++i) gt.v[i] += g.v[i];
            }
        };
        return id;
    }

    Id mul(Id a, Id b) {
        check_same(a, b, "mul");
        Tensor out = value(a);
        const Tensor& vb = value(b);
        for (std::size_t i = 0; i < out.size(); ++i) out.v[i] *= vb.v[i];
        Id id = push(std::move(out), requires_grad(a) || requires_grad(b));
        nodes_[id].back = [this, a, b](Id self) {
            const Tensor& g = nodes_[self].grad;
            if (requires_grad(a)) {
                const Tensor& vb = value(b);
                Tensor& ga = grad(a);
                for (std::size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] * vb.v[i];
            }
            if (requires_grad(b)) {
                const Tensor& va = value(a);
                Tensor& gb = grad(b);
                for (std::size_t i = 0; i < g.size(); ++i) gb.v[i] += g.v[i] * va.v[i];
            }
        };
        return id;
    }

    /// Channel concatenation [a; b].
    Id concat(Id a, Id b) {
        const Tensor& va = value(a);
        const Tensor& vb = value(b);
        if (va.h != vb.h || va.w != vb.w) throw std::invalid_argument("Tape::concat: spatial mismatch");
        Tensor out(va.c + vb.c, va.h, va.w);
        std::copy(va.v.begin(), va.v.end(), out.v.begin());
        std::copy(vb.v.begin(), vb.v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(va.size()));
        const std::size_t split = va.size();
        Id id = push(std::move(out), requires_grad(a) || requires_grad(b));
        nodes_[id].back = [this, a, b, split](Id self) {
            const Tensor& g = nodes_[self].grad;
            if (requires_grad(a)) {
                Tensor& ga = grad(a);
                for (std::size_t i = 0; i < split; ++i) ga.v[i] += g.v[i];
            }
            if (requires_grad(b)) {
                Tensor& gb = grad(b);
                for (std::size_t i = 0; i < gb.size(); ++i) gb.v[i] += g.v[split + i];
            }
        };
        return id;
    }

    /// Nearest-neighbour 2x upsampling cropped to (oh, ow).
    Id upsample2(Id x, int oh, int ow) {
        const Tensor& in = value(x);
        if (oh > 2 * in.h || ow > 2 * in.w) throw std::invalid_argument("Tape::upsample2: target too large");
        Tensor out(in.c, oh, ow);
        for (int ch = 0; ch < in.c; ++ch)
            for (int r = 0; r < oh; ++r)
                for (int col = 0; col < ow; ++col) out.at(ch, r, col) = in.at(ch, r / 2, col / 2);
        Id id = push(std::move(out), requires_grad(x));
        nodes_[id].back = [this, x](Id self) {
            const Tensor& g = nodes_[self].grad;
            Tensor& gx = grad(x);
            for (int ch = 0; ch < g.c; ++ch)
                for (int r = 0; r < g.h; ++r)
                    for (int col = 0; col < g.w; ++col) gx.at(ch, r / 2, col / 2) += g.at(ch, r, col);
        };
        return id;
    }

    void backward() {
        for (Id id = static_cast<Id>(nodes_.size()) - 1; id >= 0; --id) {
            Node& n = nodes_[id];
            if (!n.back || !n.requires_grad || n.grad.size() == 0) continue;
            n.back(id);
        }
    }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<double> aux;
        std::function<void(Id)> back;
        bool requires_grad = false;
    };

    Id push(Tensor value, bool requires_grad) {
        nodes_.push_back(Node{std::move(value), {}, {}, {}, requires_grad});
        return static_cast<Id>(nodes_.size()) - 1;
    }

    void check_same(Id a, Id b, const char* op) const {
        if (!value(a).same_shape(value(b))) {
            throw std::invalid_argument(std::string("Tape::") + op + ": shape mismatch");
        }
    }

    static void im2col(const Tensor& in, int stride, int ho, int wo, std::vector<double>& col) {
        const std::size_t pix = static_cast<std::size_t>(ho) * wo;
        for (int ci = 0; ci < in.c; ++ci) {
            for (int kr = 0; kr < 3; ++kr) {
                for (int kc = 0; kc < 3; ++kc) {
                    double* row = col.data() + (static_cast<std::size_t>(ci) * 9 + kr * 3 + kc) * pix;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride + kr - 1;
                        if (iy < 0 || iy >= in.h) continue;
                        for (int ox = 0; ox < wo; ++ox) {
                            const int ix = ox * stride + kc - 1;
                            if (ix < 0 || ix >= in.w) continue;
                            row[static_cast<std::size_t>(oy) * wo + ox] = in.at(ci, iy, ix);
                        }
                    }
                }
            }
        }
    }

    static void col2im(const std::vector<double>& col, int stride, int ho, int wo, Tensor& gin) {
        const std::size_t pix = static_cast<std::size_t>(ho) * wo;
        for (int ci = 0; ci < gin.c; ++ci) {
            for (int kr = 0; kr < 3; ++kr) {
                for (int kc = 0; kc < 3; ++kc) {
                    const double* row =
                        col.data() + (static_cast<std::size_t>(ci) * 9 + kr * 3 + kc) * pix;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride + kr - 1;
                        if (iy < 0 || iy >= gin.h) continue;
                        for (int ox = 0; ox < wo; ++ox) {
                            const int ix = ox * stride + kc - 1;
                            if (ix < 0 || ix >= gin.w) continue;
                            gin.at(ci, iy, ix) += row[static_cast<std::size_t>(oy) * wo + ox];
                        }
                    }
                }
            }
        }
    }

    std::vector<Node> nodes_;
};

}  // namespace selfdeblur
