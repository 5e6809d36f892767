#pragma once

// Minimal dense-network engine with exact analytic gradients: the
// desk-scale stand-in for the paper-sized backbones. Two subnet shapes
// share one parameter type: the plain classifier (backbone + head) and
// the label-conditioned discriminator (backbone + label embedding +
// LayerNorm merge + head, exposing the enhanced representation z).

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "colafier/numkit.hpp"

namespace colafier {

struct Linear {
    Matrix w;  // in x out
    Vec b;     // out
};

// Gradient (or Adam moment) storage shaped like the trainable parameters.
struct SubnetGrads {
    std::vector<Linear> backbone;
    Matrix label_embedding;
    Vec ln_scale, ln_shift;
    Linear head;
};

struct AdamState {
    SubnetGrads m, v;
    std::int64_t step = 0;
};

struct SubnetParams {
    std::vector<Linear> backbone;  // affine + ReLU each; last output width is d
    Matrix label_embedding;        // N_c x d; empty when the net has no label path
    Vec ln_scale, ln_shift;        // d; empty when the net has no label path
    Linear head;                   // d x N_c
    AdamState opt;

    bool has_label_path() const { return !label_embedding.data.empty(); }
    std::size_t input_dim() const { return backbone.front().w.rows; }
    std::size_t feature_dim() const { return head.w.rows; }
    std::size_t n_classes() const { return head.w.cols; }

    std::uint64_t arch_signature() const {
        std::uint64_t h = has_label_path() ? 0x9e3779b97f4a7c15ull : 0x2545f4914f6cdd1dull;
        for (const Linear& l : backbone) h = h * 1099511628211ull + l.w.rows * 65537 + l.w.cols;
        h = h * 1099511628211ull + head.w.rows * 65537 + head.w.cols;
        return h;
    }
};

struct ForwardTrace {
    std::uint64_t arch = 0;
    Vec input;
    std::vector<Vec> pre;   // backbone pre-activations
    std::vector<Vec> act;   // backbone post-ReLU activations
    Vec label_in;           // label-path nets only
    Vec merged;             // backbone output + embedding, pre-LayerNorm
    Vec normalized;         // LayerNorm output before the affine
    double inv_std = 0.0;
    Vec z;                  // representation the head consumes
    Vec probs;
};

namespace detail {

inline Vec affine(const Linear& l, const Vec& x) {
    if (x.size() != l.w.rows) throw std::invalid_argument("nn: dimension mismatch");
    Vec y = l.b;
    for (std::size_t i = 0; i < l.w.rows; ++i) {
        const double xi = x[i];
        const double* row = l.w.data.data() + i * l.w.cols;
        for (std::size_t j = 0; j < l.w.cols; ++j) y[j] += xi * row[j];
    }
    return y;
}

inline Vec softmax(const Vec& logits) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    Vec p(logits.size());
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        p[j] = std::exp(logits[j] - mx);
        sum += p[j];
    }
    for (double& v : p) v /= sum;
    return p;
}

inline void backbone_forward(const SubnetParams& params, const Vec& x, ForwardTrace& tr) {
    tr.arch = params.arch_signature();
    tr.input = x;
    const Vec* cur = &x;
    for (const Linear& l : params.backbone) {
        tr.pre.push_back(affine(l, *cur));
        Vec a = tr.pre.back();
        for (double& v : a) v = v > 0.0 ? v : 0.0;
        tr.act.push_back(std::move(a));
        cur = &tr.act.back();
    }
}

}  // namespace detail

inline SubnetParams make_gen_subnet(std::size_t in_dim, const std::vector<std::size_t>& hidden,
                                    std::size_t n_c, Rng& rng) {
    if (hidden.empty()) throw std::invalid_argument("make_gen_subnet: need at least one layer");
    SubnetParams p;
    std::size_t prev = in_dim;
    for (std::size_t h : hidden) {
        Linear l;
        l.w = Matrix(prev, h);
        const double a = std::sqrt(6.0 / static_cast<double>(prev + h));
        for (double& x : l.w.data) x = rng.uniform(-a, a);
        l.b.assign(h, 0.0);
        p.backbone.push_back(std::move(l));
        prev = h;
    }
    p.head.w = Matrix(prev, n_c);
    const double a = std::sqrt(6.0 / static_cast<double>(prev + n_c));
    for (double& x : p.head.w.data) x = rng.uniform(-a, a);
    p.head.b.assign(n_c, 0.0);

    auto zero_like = [&p](SubnetGrads& g) {
        for (const Linear& l : p.backbone)
            g.backbone.push_back(Linear{Matrix(l.w.rows, l.w.cols), Vec(l.b.size(), 0.0)});
        g.label_embedding = Matrix(p.label_embedding.rows, p.label_embedding.cols);
        g.ln_scale.assign(p.ln_scale.size(), 0.0);
        g.ln_shift.assign(p.ln_shift.size(), 0.0);
        g.head = Linear{Matrix(p.head.w.rows, p.head.w.cols), Vec(p.head.b.size(), 0.0)};
    };
    zero_like(p.opt.m);
    zero_like(p.opt.v);
    return p;
}

inline SubnetParams make_dis_subnet(std::size_t in_dim, const std::vector<std::size_t>& hidden,
                                    std::size_t n_c, Rng& rng) {
    SubnetParams p = make_gen_subnet(in_dim, hidden, n_c, rng);
    const std::size_t d = p.feature_dim();
    p.label_embedding = Matrix(n_c, d);
    for (double& x : p.label_embedding.data) x = rng.normal(0.0, 0.02);
    p.ln_scale.assign(d, 1.0);
    p.ln_shift.assign(d, 0.0);
    p.opt.m.label_embedding = Matrix(n_c, d);
    p.opt.v.label_embedding = Matrix(n_c, d);
    p.opt.m.ln_scale.assign(d, 0.0);
    p.opt.v.ln_scale.assign(d, 0.0);
    p.opt.m.ln_shift.assign(d, 0.0);
    p.opt.v.ln_shift.assign(d, 0.0);
    return p;
}

// probs = softmax(head(backbone(x)))
inline Vec gen_forward(const SubnetParams& params, const Vec& x, ForwardTrace& trace) {
    if (params.has_label_path())
        throw std::invalid_argument("gen_forward: subnet has a label path");
    trace = ForwardTrace();
    detail::backbone_forward(params, x, trace);
    trace.z = trace.act.back();
    Vec logits = detail::affine(params.head, trace.z);
    trace.probs = detail::softmax(logits);
    return trace.probs;
}

// embed = y^T E; z = LayerNorm(backbone(x) + embed) with the learned
// scale/shift applied; probs = softmax(head(z)). z is the enhanced
// representation used for LID scoring.
inline Vec dis_forward(const SubnetParams& params, const Vec& x, const Vec& y,
                       ForwardTrace& trace) {
    if (!params.has_label_path())
        throw std::invalid_argument("dis_forward: subnet has no label path");
    if (y.size() != params.n_classes())
        throw std::invalid_argument("dis_forward: label width mismatch");
    double sum = 0.0;
    for (double v : y) {
        if (v < 0.0) throw std::invalid_argument("dis_forward: label not a distribution");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw std::invalid_argument("dis_forward: label not a distribution");

    trace = ForwardTrace();
    detail::backbone_forward(params, x, trace);
    trace.label_in = y;

    const std::size_t d = params.feature_dim();
    Vec embed(d, 0.0);
    for (std::size_t r = 0; r < y.size(); ++r) {
        if (y[r] == 0.0) continue;
        const double* row = params.label_embedding.data.data() + r * d;
        for (std::size_t c = 0; c < d; ++c) embed[c] += y[r] * row[c];
    }
    trace.merged = trace.act.back();
    for (std::size_t c = 0; c < d; ++c) trace.merged[c] += embed[c];

    // LayerNorm with retained statistics for the backward pass
    double mean = 0.0;
    for (double v : trace.merged) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : trace.merged) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    trace.inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
    trace.normalized.resize(d);
    trace.z.resize(d);
    for (std::size_t c = 0; c < d; ++c) {
        trace.normalized[c] = (trace.merged[c] - mean) * trace.inv_std;
        trace.z[c] = trace.normalized[c] * params.ln_scale[c] + params.ln_shift[c];
    }

    Vec logits = detail::affine(params.head, trace.z);
    trace.probs = detail::softmax(logits);
    return trace.probs;
}

inline SubnetGrads make_zero_grads(const SubnetParams& params) {
    SubnetGrads g;
    for (const Linear& l : params.backbone)
        g.backbone.push_back(Linear{Matrix(l.w.rows, l.w.cols), Vec(l.b.size(), 0.0)});
    g.label_embedding = Matrix(params.label_embedding.rows, params.label_embedding.cols);
    g.ln_scale.assign(params.ln_scale.size(), 0.0);
    g.ln_shift.assign(params.ln_shift.size(), 0.0);
    g.head = Linear{Matrix(params.head.w.rows, params.head.w.cols), Vec(params.head.b.size(), 0.0)};
    return g;
}

// Backpropagates d(loss)/d(probs) through the trace, adding into `grads`.
// scale multiplies every contribution (used for 1/batch averaging).
inline void accumulate_backward(const SubnetParams& params, const ForwardTrace& trace,
                                const Vec& loss_grad_at_probs, SubnetGrads& grads,
                                double scale = 1.0) {
    if (trace.arch != params.arch_signature() || trace.act.size() != params.backbone.size())
        throw std::invalid_argument("backward: stale trace");
    if (loss_grad_at_probs.size() != params.n_classes())
        throw std::invalid_argument("backward: loss gradient width mismatch");

    const std::size_t n_c = params.n_classes();
    const std::size_t d = params.feature_dim();

    // softmax
    double pg = 0.0;
    for (std::size_t j = 0; j < n_c; ++j) pg += trace.probs[j] * loss_grad_at_probs[j];
    Vec glogits(n_c);
    for (std::size_t j = 0; j < n_c; ++j)
        glogits[j] = scale * trace.probs[j] * (loss_grad_at_probs[j] - pg);

    // head
    Vec gz(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        const double zi = trace.z[i];
        double acc = 0.0;
        double* wrow = grads.head.w.data.data() + i * n_c;
        const double* prow = params.head.w.data.data() + i * n_c;
        for (std::size_t j = 0; j < n_c; ++j) {
            wrow[j] += zi * glogits[j];
            acc += prow[j] * glogits[j];
        }
        gz[i] = acc;
    }
    for (std::size_t j = 0; j < n_c; ++j) grads.head.b[j] += glogits[j];

    Vec gact;
    if (params.has_label_path()) {
        // affine part of LayerNorm
        Vec gnorm(d);
        for (std::size_t c = 0; c < d; ++c) {
            grads.ln_scale[c] += gz[c] * trace.normalized[c];
            grads.ln_shift[c] += gz[c];
            gnorm[c] = gz[c] * params.ln_scale[c];
        }
        // normalization part
        double mean_g = 0.0, mean_gz = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            mean_g += gnorm[c];
            mean_gz += gnorm[c] * trace.normalized[c];
        }
        mean_g /= static_cast<double>(d);
        mean_gz /= static_cast<double>(d);
        Vec gmerged(d);
        for (std::size_t c = 0; c < d; ++c)
            gmerged[c] = trace.inv_std * (gnorm[c] - mean_g - trace.normalized[c] * mean_gz);
        // embedding rows touched by the label input
        for (std::size_t r = 0; r < trace.label_in.size(); ++r) {
            if (trace.label_in[r] == 0.0) continue;
            double* erow = grads.label_embedding.data.data() + r * d;
            for (std::size_t c = 0; c < d; ++c) erow[c] += trace.label_in[r] * gmerged[c];
        }
        gact = std::move(gmerged);
    } else {
        gact = std::move(gz);
    }

    // backbone, last layer first
    for (std::size_t li = params.backbone.size(); li-- > 0;) {
        const Linear& l = params.backbone[li];
        Linear& gl = grads.backbone[li];
        const Vec& pre = trace.pre[li];
        const Vec& in = li == 0 ? trace.input : trace.act[li - 1];
        Vec gpre(pre.size());
        for (std::size_t j = 0; j < pre.size(); ++j)
            gpre[j] = pre[j] > 0.0 ? gact[j] : 0.0;
        Vec gin(l.w.rows, 0.0);
        for (std::size_t i = 0; i < l.w.rows; ++i) {
            const double xi = in[i];
            double acc = 0.0;
            double* wrow = gl.w.data.data() + i * l.w.cols;
            const double* prow = l.w.data.data() + i * l.w.cols;
            for (std::size_t j = 0; j < l.w.cols; ++j) {
                wrow[j] += xi * gpre[j];
                acc += prow[j] * gpre[j];
            }
            gin[i] = acc;
        }
        for (std::size_t j = 0; j < gpre.size(); ++j) gl.b[j] += gpre[j];
        gact = std::move(gin);
    }
}

inline SubnetGrads backward(const SubnetParams& params, const ForwardTrace& trace,
                            const Vec& loss_grad_at_probs) {
    SubnetGrads g = make_zero_grads(params);
    accumulate_backward(params, trace, loss_grad_at_probs, g);
    return g;
}

// Flat views over the trainable tensors, parameter/gradient order aligned.
inline std::vector<Vec*> parameter_tensors(SubnetParams& p) {
    std::vector<Vec*> out;
    for (Linear& l : p.backbone) {
        out.push_back(&l.w.data);
        out.push_back(&l.b);
    }
    if (p.has_label_path()) {
        out.push_back(&p.label_embedding.data);
        out.push_back(&p.ln_scale);
        out.push_back(&p.ln_shift);
    }
    out.push_back(&p.head.w.data);
    out.push_back(&p.head.b);
    return out;
}

inline std::vector<Vec*> gradient_tensors(SubnetGrads& g, bool has_label_path) {
    std::vector<Vec*> out;
    for (Linear& l : g.backbone) {
        out.push_back(&l.w.data);
        out.push_back(&l.b);
    }
    if (has_label_path) {
        out.push_back(&g.label_embedding.data);
        out.push_back(&g.ln_scale);
        out.push_back(&g.ln_shift);
    }
    out.push_back(&g.head.w.data);
    out.push_back(&g.head.b);
    return out;
}

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

namespace detail {

inline void adamw_tensor(Vec& theta, const Vec& g, Vec& m, Vec& v, double lr, double wd,
                         double bc1, double bc2) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
        if (!std::isfinite(g[i])) throw std::runtime_error("adamw_step: gradient explosion");
        m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
        v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        theta[i] -= lr * (mhat / (std::sqrt(vhat) + kAdamEps) + wd * theta[i]);
        if (!std::isfinite(theta[i])) throw std::runtime_error("adamw_step: non-finite parameter");
    }
}

}  // namespace detail

// Decoupled-weight-decay Adam with the common beta/eps defaults.
inline void adamw_step(SubnetParams& params, const SubnetGrads& grads, double lr,
                       double weight_decay) {
    params.opt.step += 1;
    const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(params.opt.step));
    const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(params.opt.step));
    for (std::size_t li = 0; li < params.backbone.size(); ++li) {
        detail::adamw_tensor(params.backbone[li].w.data, grads.backbone[li].w.data,
                             params.opt.m.backbone[li].w.data, params.opt.v.backbone[li].w.data,
                             lr, weight_decay, bc1, bc2);
        detail::adamw_tensor(params.backbone[li].b, grads.backbone[li].b,
                             params.opt.m.backbone[li].b, params.opt.v.backbone[li].b, lr,
                             weight_decay, bc1, bc2);
    }
    if (params.has_label_path()) {
        detail::adamw_tensor(params.label_embedding.data, grads.label_embedding.data,
                             params.opt.m.label_embedding.data,
                             params.opt.v.label_embedding.data, lr, weight_decay, bc1, bc2);
        detail::adamw_tensor(params.ln_scale, grads.ln_scale, params.opt.m.ln_scale,
                             params.opt.v.ln_scale, lr, weight_decay, bc1, bc2);
        detail::adamw_tensor(params.ln_shift, grads.ln_shift, params.opt.m.ln_shift,
                             params.opt.v.ln_shift, lr, weight_decay, bc1, bc2);
    }
    detail::adamw_tensor(params.head.w.data, grads.head.w.data, params.opt.m.head.w.data,
                         params.opt.v.head.w.data, lr, weight_decay, bc1, bc2);
    detail::adamw_tensor(params.head.b, grads.head.b, params.opt.m.head.b,
                         params.opt.v.head.b, lr, weight_decay, bc1, bc2);
}

// ---- checkpoint io ----------------------------------------------------
// Plain-text header (one "name rows cols" line per array) followed by the
// raw row-major little-endian float64 payload, arrays in header order.

namespace detail {

inline void collect_arrays(const std::string& prefix, const SubnetParams& p,
                           std::vector<std::pair<std::string, const Vec*>>& out,
                           std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>>& shapes) {
    for (std::size_t li = 0; li < p.backbone.size(); ++li) {
        const std::string base = prefix + ".backbone." + std::to_string(li);
        out.push_back({base + ".w", &p.backbone[li].w.data});
        shapes.push_back({base + ".w", {p.backbone[li].w.rows, p.backbone[li].w.cols}});
        out.push_back({base + ".b", &p.backbone[li].b});
        shapes.push_back({base + ".b", {1, p.backbone[li].b.size()}});
    }
    if (p.has_label_path()) {
        out.push_back({prefix + ".label_embedding", &p.label_embedding.data});
        shapes.push_back({prefix + ".label_embedding",
                          {p.label_embedding.rows, p.label_embedding.cols}});
        out.push_back({prefix + ".ln_scale", &p.ln_scale});
        shapes.push_back({prefix + ".ln_scale", {1, p.ln_scale.size()}});
        out.push_back({prefix + ".ln_shift", &p.ln_shift});
        shapes.push_back({prefix + ".ln_shift", {1, p.ln_shift.size()}});
    }
    out.push_back({prefix + ".head.w", &p.head.w.data});
    shapes.push_back({prefix + ".head.w", {p.head.w.rows, p.head.w.cols}});
    out.push_back({prefix + ".head.b", &p.head.b});
    shapes.push_back({prefix + ".head.b", {1, p.head.b.size()}});
}

inline void collect_mutable(const std::string& prefix, SubnetParams& p,
                            std::map<std::string, std::pair<Vec*, std::size_t>>& out) {
    for (std::size_t li = 0; li < p.backbone.size(); ++li) {
        const std::string base = prefix + ".backbone." + std::to_string(li);
        out[base + ".w"] = {&p.backbone[li].w.data, p.backbone[li].w.data.size()};
        out[base + ".b"] = {&p.backbone[li].b, p.backbone[li].b.size()};
    }
    if (p.has_label_path()) {
        out[prefix + ".label_embedding"] = {&p.label_embedding.data,
                                            p.label_embedding.data.size()};
        out[prefix + ".ln_scale"] = {&p.ln_scale, p.ln_scale.size()};
        out[prefix + ".ln_shift"] = {&p.ln_shift, p.ln_shift.size()};
    }
    out[prefix + ".head.w"] = {&p.head.w.data, p.head.w.data.size()};
    out[prefix + ".head.b"] = {&p.head.b, p.head.b.size()};
}

inline void require_little_endian() {
    if (std::endian::native != std::endian::little)
        throw std::runtime_error("checkpoint: only little-endian hosts are supported");
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const SubnetParams& ge,
                            const SubnetParams& ld) {
    detail::require_little_endian();
    std::vector<std::pair<std::string, const Vec*>> arrays;
    std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> shapes;
    detail::collect_arrays("ge", ge, arrays, shapes);
    detail::collect_arrays("ld", ld, arrays, shapes);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    f << "COLAFIER-CKPT 1\n" << "arrays " << arrays.size() << "\n";
    for (const auto& [name, shape] : shapes)
        f << name << " " << shape.first << " " << shape.second << "\n";
    f << "data\n";
    for (const auto& [name, vec] : arrays)
        f.write(reinterpret_cast<const char*>(vec->data()),
                static_cast<std::streamsize>(vec->size() * sizeof(double)));
    if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

// Loads into already-constructed subnets; every array must match the
// existing shape exactly.
inline void load_checkpoint(const std::string& path, SubnetParams& ge, SubnetParams& ld) {
    detail::require_little_endian();
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    std::string magic;
    int version = 0;
    f >> magic >> version;
    if (magic != "COLAFIER-CKPT" || version != 1)
        throw std::runtime_error("checkpoint: bad header in " + path);
    std::string tag;
    std::size_t count = 0;
    f >> tag >> count;
    if (tag != "arrays") throw std::runtime_error("checkpoint: bad header in " + path);

    std::map<std::string, std::pair<Vec*, std::size_t>> slots;
    detail::collect_mutable("ge", ge, slots);
    detail::collect_mutable("ld", ld, slots);

    std::vector<std::pair<std::string, std::size_t>> order;
    for (std::size_t i = 0; i < count; ++i) {
        std::string name;
        std::size_t rows = 0, cols = 0;
        f >> name >> rows >> cols;
        order.push_back({name, rows * cols});
    }
    f >> tag;
    if (tag != "data") throw std::runtime_error("checkpoint: bad header in " + path);
    f.get();  // newline before payload

    for (const auto& [name, len] : order) {
        auto it = slots.find(name);
        if (it == slots.end())
            throw std::runtime_error("checkpoint: unknown array " + name);
        if (it->second.second != len)
            throw std::runtime_error("checkpoint: shape mismatch for " + name);
        f.read(reinterpret_cast<char*>(it->second.first->data()),
               static_cast<std::streamsize>(len * sizeof(double)));
        if (!f) throw std::runtime_error("checkpoint: truncated payload in " + path);
    }
}

}  // namespace colafier
