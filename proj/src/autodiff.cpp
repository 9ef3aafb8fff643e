#include "fsncsr/autodiff.hpp"

#include <cmath>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "fsncsr/kernels.hpp"
#include "fsncsr/linalg.hpp"
#include "fsncsr/resample.hpp"

namespace fsncsr::ad {

namespace {

void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

Graph* same_graph(Value a, Value b) {
    require(a.valid() && b.valid(), "op on empty Value");
    require(a.graph() == b.graph(), "op mixes Values from different graphs");
    return a.graph();
}

bool track(Graph* g, std::initializer_list<Value> inputs) {
    if (!g->grad_enabled()) return false;
    for (Value v : inputs) {
        if (v.node()->requires_grad) return true;
    }
    return false;
}

}  // namespace

void Node::accumulate(const Tensor& g) {
    Tensor& dst = ensure_grad();
    kern::active().add(dst.data(), g.data(), dst.data(), static_cast<std::size_t>(g.numel()));
}

Tensor& Node::ensure_grad() {
    if (!grad_live) {
        grad = Tensor(value.shape());
        grad_live = true;
    }
    return grad;
}

double Value::scalar() const {
    if (numel() != 1) throw std::invalid_argument("Value::scalar on tensor of shape " + t().shape_str());
    return t()[0];
}

Value Graph::constant(Tensor t) {
    Node* n = make(std::move(t), {}, nullptr);
    return Value(this, n);
}

Value Graph::param(const std::string& name, const Tensor& t) {
    require(!name.empty(), "parameter leaf needs a name");
    // repeated registration (e.g. one parameter shared by every batch
    // element) returns the existing leaf so gradients accumulate on it
    auto it = params_.find(name);
    if (it != params_.end()) {
        require(it->second->value.same_shape(t), "parameter re-registered with a different shape");
        return Value(this, it->second);
    }
    Node* n = make(t, {}, nullptr);
    n->requires_grad = grad_enabled_;
    n->param_name = name;
    params_[name] = n;
    return Value(this, n);
}

Value Graph::param(const std::string& name, const optim::ParamStore& store) {
    return param(name, store.value(name));
}

Node* Graph::make(Tensor value, std::vector<Node*> parents, std::function<void(Node&)> bw) {
    nodes_.emplace_back();
    Node& n = nodes_.back();
    n.value = std::move(value);
    if (bw) {
        n.requires_grad = true;
        n.parents = std::move(parents);
        n.backward = std::move(bw);
    }
    return &n;
}

void Graph::backward(const Value& root) {
    require(root.valid() && root.graph() == this, "backward: root from another graph");
    if (root.numel() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, got shape " + root.t().shape_str());
    }
    root.node()->ensure_grad()[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& n = *it;
        if (n.grad_live && n.backward) n.backward(n);
    }
}

const Tensor* Graph::grad_of(const std::string& param_name) const {
    auto it = params_.find(param_name);
    if (it == params_.end()) return nullptr;
    return it->second->grad_live ? &it->second->grad : nullptr;
}

std::map<std::string, Tensor> Graph::grads() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, node] : params_) {
        out.emplace(name, node->grad_live ? node->grad : Tensor(node->value.shape()));
    }
    return out;
}

// ---- elementwise ------------------------------------------------------------

Value add(Value a, Value b) {
    Graph* g = same_graph(a, b);
    require(a.t().same_shape(b.t()), "add: shape mismatch");
    Tensor out(a.shape());
    kern::active().add(a.t().data(), b.t().data(), out.data(), static_cast<std::size_t>(out.numel()));
    std::function<void(Node&)> bw;
    if (track(g, {a, b})) {
        Node* pa = a.node();
        Node* pb = b.node();
        bw = [pa, pb](Node& n) {
            if (pa->requires_grad) pa->accumulate(n.grad);
            if (pb->requires_grad) pb->accumulate(n.grad);
        };
    }
    return Value(g, g->make(std::move(out), {a.node(), b.node()}, std::move(bw)));
}

Value sub(Value a, Value b) {
    Graph* g = same_graph(a, b);
    require(a.t().same_shape(b.t()), "sub: shape mismatch");
    Tensor out(a.shape());
    kern::active().sub(a.t().data(), b.t().data(), out.data(), static_cast<std::size_t>(out.numel()));
    std::function<void(Node&)> bw;
    if (track(g, {a, b})) {
        Node* pa = a.node();
        Node* pb = b.node();
        bw = [pa, pb](Node& n) {
            if (pa->requires_grad) pa->accumulate(n.grad);
            if (pb->requires_grad) {
                Tensor& dst = pb->ensure_grad();
                kern::active().sub(dst.data(), n.grad.data(), dst.data(),
                                   static_cast<std::size_t>(n.grad.numel()));
            }
        };
    }
    return Value(g, g->make(std::move(out), {a.node(), b.node()}, std::move(bw)));
}

Value mul(Value a, Value b) {
    Graph* g = same_graph(a, b);
    require(a.t().same_shape(b.t()), "mul: shape mismatch");
    Tensor out(a.shape());
    kern::active().mul(a.t().data(), b.t().data(), out.data(), static_cast<std::size_t>(out.numel()));
    std::function<void(Node&)> bw;
    if (track(g, {a, b})) {
        Node* pa = a.node();
        Node* pb = b.node();
        bw = [pa, pb](Node& n) {
            const auto sz = static_cast<std::size_t>(n.grad.numel());
            Tensor tmp(n.grad.shape());
            if (pa->requires_grad) {
                kern::active().mul(n.grad.data(), pb->value.data(), tmp.data(), sz);
                pa->accumulate(tmp);
            }
            if (pb->requires_grad) {
                kern::active().mul(n.grad.data(), pa->value.data(), tmp.data(), sz);
                pb->accumulate(tmp);
            }
        };
    }
    return Value(g, g->make(std::move(out), {a.node(), b.node()}, std::move(bw)));
}

Value divide(Value a, Value b) {
    Graph* g = same_graph(a, b);
    require(a.t().same_shape(b.t()), "divide: shape mismatch");
    Tensor out(a.shape());
    kern::active().div(a.t().data(), b.t().data(), out.data(), static_cast<std::size_t>(out.numel()));
    std::function<void(Node&)> bw;
    if (track(g, {a, b})) {
        Node* pa = a.node();
        Node* pb = b.node();
        bw = [pa, pb](Node& n) {
            const std::int64_t sz = n.grad.numel();
            if (pa->requires_grad) {
                Tensor tmp(n.grad.shape());
                kern::active().div(n.grad.data(), pb->value.data(), tmp.data(),
                                   static_cast<std::size_t>(sz));
                pa->accumulate(tmp);
            }
            if (pb->requires_grad) {
                Tensor tmp(n.grad.shape());
                for (std::int64_t i = 0; i < sz; ++i) {
                    const double bi = pb->value[i];
                    tmp[i] = -n.grad[i] * pa->value[i] / (bi * bi);
                }
                pb->accumulate(tmp);
            }
        };
    }
    return Value(g, g->make(std::move(out), {a.node(), b.node()}, std::move(bw)));
}

Value add_scalar(Value a, double c) {
    Graph* g = a.graph();
    Tensor out(a.shape());
    const std::int64_t sz = a.numel();
    for (std::int64_t i = 0; i < sz; ++i) out[i] = a.t()[i] + c;
    std::function<void(Node&)> bw;
    if (track(g, {a})) {
        Node* pa = a.node();
        bw = [pa](Node& n) { pa->accumulate(n.grad); };
    }
    return Value(g, g->make(std::move(out), {a.node()}, std::move(bw)));
}

Value mul_scalar(Value a, double c) {
    Graph* g = a.graph();
    Tensor out(a.shape());
    kern::active().scale(c, a.t().data(), out.data(), static_cast<std::size_t>(a.numel()));
    std::function<void(Node&)> bw;
    if (track(g, {a})) {
        Node* pa = a.node();
        bw = [pa, c](Node& n) {
            Tensor& dst = pa->ensure_grad();
            kern::active().axpy(c, n.grad.data(), dst.data(),
                                static_cast<std::size_t>(n.grad.numel()));
        };
    }
    return Value(g, g->make(std::move(out), {a.node()}, std::move(bw)));
}

Value neg(Value a) { return mul_scalar(a, -1.0); }

Value unary(Value a, double (*f)(double), double (*df)(double), const char* /*name*/) {
    Graph* g = a.graph();
    const std::int64_t sz = a.numel();
    Tensor out(a.shape());
    for (std::int64_t i = 0; i < sz; ++i) out[i] = f(a.t()[i]);
    std::function<void(Node&)> bw;
    if (track(g, {a})) {
        Node* pa = a.node();
        bw = [pa, df](Node& n) {
            Tensor tmp(n.grad.shape());
            const std::int64_t m = n.grad.numel();
            for (std::int64_t i = 0; i < m; ++i) tmp[i] = n.grad[i] * df(pa->value[i]);
            pa->accumulate(tmp);
        };
    }
    return Value(g, g->make(std::move(out), {a.node()}, std::move(bw)));
}

Value exp_(Value a) {
    return unary(
        a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); }, "exp");
}

Value log_(Value a) {
    return unary(
        a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; }, "log");
}

Value log_abs(Value a) {
    return unary(
        a, [](double x) { return std::log(std::fabs(x)); }, [](double x) { return 1.0 / x; },
        "log_abs");
}

Value tanh_(Value a) {
    return unary(
        a, [](double x) { return std::tanh(x); },
        [](double x) {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        },
        "tanh");
}

Value sigmoid_(Value a) {
    return unary(
        a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double x) {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 - s);
        },
        "sigmoid");
}

Value clamp_(Value a, double lo, double hi) {
    require(lo < hi, "clamp_: lo must be < hi");
    Graph* g = a.graph();
    Tensor out(a.shape());
    kern::active().clamp(a.t().data(), lo, hi, out.data(), static_cast<std::size_t>(a.numel()));
    std::function<void(Node&)> bw;
    if (track(g, {a})) {
        Node* pa = a.node();
        bw = [pa, lo, hi](Node& n) {
            Tensor tmp(n.grad.shape());
            const std::int64_t m = n.grad.numel();
            for (std::int64_t i = 0; i < m; ++i) {
                const double x = pa->value[i];
                tmp[i] = (x > lo && x < hi) ? n.grad[i] : 0.0;
            }
            pa->accumulate(tmp);
        };
    }
    return Value(g, g->make(std::move(out), {a.node()}, std::move(bw)));
}

// ---- matmul / affine ----------------------------------------------------------

Value matmul(Value a, Value b) {
    Graph* g = same_graph(a, b);
    require(a.t().rank() == 2 && b.t().rank() == 2, "matmul: rank-2 operands required");
    require(a.t().dim(1) == b.t().dim(0), "matmul: inner dimensions differ");
    const std::int64_t m = a.t().dim(0);
    const std::int64_t k = a.t().dim(1);
    const std::int64_t n_cols = b.t().dim(1);
    Tensor out({m, n_cols});
    const auto& kn = kern::active();
    for (std::int64_t r = 0; r < m; ++r) {
        kn.matvec_acc(a.t().data() + r * k, b.t().data(), out.data() + r * n_cols,
                      static_cast<std::size_t>(k), static_cast<std::size_t>(n_cols));
    }
    std::function<void(Node&)> bw;
    if (track(g, {a, b})) {
        Node* pa = a.node();
        Node* pb = b.node();
        bw = [pa, pb, m, k, n_cols](Node& n) {
            const auto& kk = kern::active();
            if (pa->requires_grad) {
                // dA = dOut * B^T : dA[r,i] += dot(B[i,:], dOut[r,:])
                Tensor& da = pa->ensure_grad();
                for (std::int64_t r = 0; r < m; ++r) {
                    kk.matvec_t_acc(n.grad.data() + r * n_cols, pb->value.data(),
                                    da.data() + r * k, static_cast<std::size_t>(k),
                                    static_cast<std::size_t>(n_cols));
                }
            }
            if (pb->requires_grad) {
                // dB = A^T * dOut : dB[i,:] += A[r,i] * dOut[r,:]
                Tensor& db = pb->ensure_grad();
                for (std::int64_t r = 0; r < m; ++r) {
                    kk.outer_acc(pa->value.data() + r * k, n.grad.data() + r * n_cols, db.data(),
                                 static_cast<std::size_t>(k), static_cast<std::size_t>(n_cols));
                }
            }
        };
    }
    return Value(g, g->make(std::move(out), {a.node(), b.node()}, std::move(bw)));
}

Value add_rowvec(Value a, Value v) {
    Graph* g = same_graph(a, v);
    require(a.t().rank() == 2 && v.t().rank() == 1, "add_rowvec: (M,N) and (N) expected");
    require(a.t().dim(1) == v.t().dim(0), "add_rowvec: width mismatch");
    const std::int64_t m = a.t().dim(0);
    const std::int64_t n_cols = a.t().dim(1);
    Tensor out(a.shape());
    for (std::int64_t r = 0; r < m; ++r) {
        kern::active().add(a.t().data() + r * n_cols, v.t().data(), out.data() + r * n_cols,
                           static_cast<std::size_t>(n_cols));
    }
    std::function<void(Node&)> bw;
    if (track(g, {a, v})) {
        Node* pa = a.node();
        Node* pv = v.node();
        bw = [pa, pv, m, n_cols](Node& n) {
            if (pa->requires_grad) pa->accumulate(n.grad);
            if (pv->requires_grad) {
                Tensor& dv = pv->ensure_grad();
                for (std::int64_t r = 0; r < m; ++r) {
                    kern::active().add(dv.data(), n.grad.data() + r * n_cols, dv.data(),
                                       static_cast<std::size_t>(n_cols));
                }
            }
        };
    }
    return Value(g, g->make(std::move(out), {a.node(), v.node()}, std::move(bw)));
}

// ---- 2-D convolution ----------------------------------------------------------

namespace {

struct ConvDims {
    std::int64_t h, w, ci, kh, kw, co, oh, ow, ph, pw;
};

ConvDims conv_dims(const Tensor& x, const Tensor& k, Padding pad) {
    require(x.rank() == 3, "conv2d: input must be (H,W,C)");
    require(k.rank() == 4, "conv2d: kernel must be (kh,kw,Cin,Cout)");
    ConvDims d{};
    d.h = x.dim(0);
    d.w = x.dim(1);
    d.ci = x.dim(2);
    d.kh = k.dim(0);
    d.kw = k.dim(1);
    require(k.dim(2) == d.ci, "conv2d: channel mismatch between input and kernel");
    d.co = k.dim(3);
    if (pad == Padding::same) {
        require(d.kh % 2 == 1 && d.kw % 2 == 1, "conv2d: same padding needs odd kernel extents");
        d.oh = d.h;
        d.ow = d.w;
        d.ph = d.kh / 2;
        d.pw = d.kw / 2;
    } else {
        require(d.h >= d.kh && d.w >= d.kw, "conv2d: kernel larger than input");
        d.oh = d.h - d.kh + 1;
        d.ow = d.w - d.kw + 1;
        d.ph = 0;
        d.pw = 0;
    }
    return d;
}

void conv_forward(const Tensor& x, const Tensor& k, const double* bias, const ConvDims& d,
                  Tensor& out) {
    const auto& kn = kern::active();
    const auto co = static_cast<std::size_t>(d.co);
    for (std::int64_t i = 0; i < d.oh; ++i) {
        for (std::int64_t j = 0; j < d.ow; ++j) {
            double* acc = out.data() + (i * d.ow + j) * d.co;
            if (bias) {
                for (std::int64_t c = 0; c < d.co; ++c) acc[c] = bias[c];
            }
            for (std::int64_t ky = 0; ky < d.kh; ++ky) {
                const std::int64_t ii = i + ky - d.ph;
                if (ii < 0 || ii >= d.h) continue;
                for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                    const std::int64_t jj = j + kx - d.pw;
                    if (jj < 0 || jj >= d.w) continue;
                    const double* xr = x.data() + (ii * d.w + jj) * d.ci;
                    const double* kr = k.data() + ((ky * d.kw + kx) * d.ci) * d.co;
                    kn.matvec_acc(xr, kr, acc, static_cast<std::size_t>(d.ci), co);
                }
            }
        }
    }
}

}  // namespace

Value conv2d(Value x, Value kernel, Value bias, Padding pad) {
    Graph* g = same_graph(x, kernel);
    const ConvDims d = conv_dims(x.t(), kernel.t(), pad);
    const double* bias_ptr = nullptr;
    Node* bias_node = nullptr;
    if (bias.valid()) {
        same_graph(x, bias);
        require(bias.t().rank() == 1 && bias.t().dim(0) == d.co, "conv2d: bias must be (Cout)");
        bias_ptr = bias.t().data();
        bias_node = bias.node();
    }
    Tensor out({d.oh, d.ow, d.co});
    conv_forward(x.t(), kernel.t(), bias_ptr, d, out);

    bool needs = bias_node ? track(g, {x, kernel, bias}) : track(g, {x, kernel});
    std::function<void(Node&)> bw;
    if (needs) {
        Node* px = x.node();
        Node* pk = kernel.node();
        bw = [px, pk, bias_node, d](Node& n) {
            const auto& kn = kern::active();
            const auto ci = static_cast<std::size_t>(d.ci);
            const auto co = static_cast<std::size_t>(d.co);
            Tensor* dx = px->requires_grad ? &px->ensure_grad() : nullptr;
            Tensor* dk = pk->requires_grad ? &pk->ensure_grad() : nullptr;
            Tensor* db = (bias_node && bias_node->requires_grad) ? &bias_node->ensure_grad() : nullptr;
            for (std::int64_t i = 0; i < d.oh; ++i) {
                for (std::int64_t j = 0; j < d.ow; ++j) {
                    const double* go = n.grad.data() + (i * d.ow + j) * d.co;
                    if (db) {
                        kn.add(db->data(), go, db->data(), co);
                    }
                    for (std::int64_t ky = 0; ky < d.kh; ++ky) {
                        const std::int64_t ii = i + ky - d.ph;
                        if (ii < 0 || ii >= d.h) continue;
                        for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                            const std::int64_t jj = j + kx - d.pw;
                            if (jj < 0 || jj >= d.w) continue;
                            const std::int64_t koff = ((ky * d.kw + kx) * d.ci) * d.co;
                            if (dx) {
                                kn.matvec_t_acc(go, pk->value.data() + koff,
                                                dx->data() + (ii * d.w + jj) * d.ci, ci, co);
                            }
                            if (dk) {
                                kn.outer_acc(px->value.data() + (ii * d.w + jj) * d.ci, go,
                                             dk->data() + koff, ci, co);
                            }
                        }
                    }
                }
            }
        };
    }
    std::vector<Node*> parents{x.node(), kernel.node()};
    if (bias_node) parents.push_back(bias_node);
    return Value(g, g->make(std::move(out), std::move(parents), std::move(bw)));
}

// ---- reductions -----------------------------------------------------------------

Value sum(Value a) {
    Graph* g = a.graph();
    Tensor out({1});
    out[0] = kern::active().sum(a.t().data(), static_cast<std::size_t>(a.numel()));
    std::function<void(Node&)> bw;
    if (track(g, {a})) {
        Node* pa = a.node();
        bw = [pa](Node& n) {
            const double go = n.grad[0];
            Tensor& dst = pa->ensure_grad();
            const std::int64_t m = dst.numel();
            for (std::int64_t i = 0; i < m; ++i) dst[i] += go;
        };
    }
    return Value(g, g->make(std::move(out), {a.node()}, std::move(bw)));
}

Value mean(Value a) { return mul_scalar(sum(a), 1.0 / static_cast<double>(a.numel())); }

// ---- channel ops ------------------------------------------------------------------

Value slice_c(Value a, std::int64_t c0, std::int64_t c1) {
    Graph* g = a.graph();
    require(a.t().rank() == 3, "slice_c: rank-3 input required");
    const std::int64_t h = a.t().dim(0), w = a.t().dim(1), c = a.t().dim(2);
    require(0 <= c0 && c0 < c1 && c1 <= c, "slice_c: bad channel range");
    const std::int64_t cs = c1 - c0;
    Tensor out({h, w, cs});
    for (std::int64_t p = 0; p < h * w; ++p) {
        const double* src = a.t().data() + p * c + c0;
        double* dst = out.data() + p * cs;
        for (std::int64_t k = 0; k < cs; ++k) dst[k] = src[k];
    }
    std::function<void(Node&)> bw;
    if (track(g, {a})) {
        Node* pa = a.node();
        bw = [pa, h, w, c, c0, cs](Node& n) {
            Tensor& dst = pa->ensure_grad();
            for (std::int64_t p = 0; p < h * w; ++p) {
                double* dp = dst.data() + p * c + c0;
                const double* sp = n.grad.data() + p * cs;
                for (std::int64_t k = 0; k < cs; ++k) dp[k] += sp[k];
            }
        };
    }
    return Value(g, g->make(std::move(out), {a.node()}, std::move(bw)));
}

Value concat_c(Value a, Value b) {
    Graph* g = same_graph(a, b);
    require(a.t().rank() == 3 && b.t().rank() == 3, "concat_c: rank-3 inputs required");
    require(a.t().dim(0) == b.t().dim(0) && a.t().dim(1) == b.t().dim(1),
            "concat_c: spatial dims differ");
    const std::int64_t h = a.t().dim(0), w = a.t().dim(1);
    const std::int64_t ca = a.t().dim(2), cb = b.t().dim(2);
    Tensor out({h, w, ca + cb});
    for (std::int64_t p = 0; p < h * w; ++p) {
        double* dst = out.data() + p * (ca + cb);
        const double* sa = a.t().data() + p * ca;
        const double* sb = b.t().data() + p * cb;
        for (std::int64_t k = 0; k < ca; ++k) dst[k] = sa[k];
        for (std::int64_t k = 0; k < cb; ++k) dst[ca + k] = sb[k];
    }
    std::function<void(Node&)> bw;
    if (track(g, {a, b})) {
        Node* pa = a.node();
        Node* pb = b.node();
        bw = [pa, pb, h, w, ca, cb](Node& n) {
            Tensor* da = pa->requires_grad ? &pa->ensure_grad() : nullptr;
            Tensor* db = pb->requires_grad ? &pb->ensure_grad() : nullptr;
            for (std::int64_t p = 0; p < h * w; ++p) {
                const double* sp = n.grad.data() + p * (ca + cb);
                if (da) {
                    double* dp = da->data() + p * ca;
                    for (std::int64_t k = 0; k < ca; ++k) dp[k] += sp[k];
                }
                if (db) {
                    double* dp = db->data() + p * cb;
                    for (std::int64_t k = 0; k < cb; ++k) dp[k] += sp[ca + k];
                }
            }
        };
    }
    return Value(g, g->make(std::move(out), {a.node(), b.node()}, std::move(bw)));
}

Value mul_cvec(Value x, Value s) {
    Graph* g = same_graph(x, s);
    require(x.t().rank() == 3 && s.t().rank() == 1, "mul_cvec: (H,W,C) and (C) expected");
    const std::int64_t h = x.t().dim(0), w = x.t().dim(1), c = x.t().dim(2);
    require(s.t().dim(0) == c, "mul_cvec: channel mismatch");
    Tensor out(x.shape());
    for (std::int64_t p = 0; p < h * w; ++p) {
        kern::active().mul(x.t().data() + p * c, s.t().data(), out.data() + p * c,
                           static_cast<std::size_t>(c));
    }
    std::function<void(Node&)> bw;
    if (track(g, {x, s})) {
        Node* px = x.node();
        Node* ps = s.node();
        bw = [px, ps, h, w, c](Node& n) {
            const auto cs = static_cast<std::size_t>(c);
            if (px->requires_grad) {
                Tensor& dx = px->ensure_grad();
                Tensor tmp({c});
                for (std::int64_t p = 0; p < h * w; ++p) {
                    kern::active().mul(n.grad.data() + p * c, ps->value.data(), tmp.data(), cs);
                    kern::active().add(dx.data() + p * c, tmp.data(), dx.data() + p * c, cs);
                }
            }
            if (ps->requires_grad) {
                Tensor& ds = ps->ensure_grad();
                for (std::int64_t p = 0; p < h * w; ++p) {
                    const double* gp = n.grad.data() + p * c;
                    const double* xp = px->value.data() + p * c;
                    for (std::int64_t k = 0; k < c; ++k) ds[k] = std::fma(gp[k], xp[k], ds[k]);
                }
            }
        };
    }
    return Value(g, g->make(std::move(out), {x.node(), s.node()}, std::move(bw)));
}

Value add_cvec(Value x, Value b) {
    Graph* g = same_graph(x, b);
    require(x.t().rank() == 3 && b.t().rank() == 1, "add_cvec: (H,W,C) and (C) expected");
    const std::int64_t h = x.t().dim(0), w = x.t().dim(1), c = x.t().dim(2);
    require(b.t().dim(0) == c, "add_cvec: channel mismatch");
    Tensor out(x.shape());
    for (std::int64_t p = 0; p < h * w; ++p) {
        kern::active().add(x.t().data() + p * c, b.t().data(), out.data() + p * c,
                           static_cast<std::size_t>(c));
    }
    std::function<void(Node&)> bw;
    if (track(g, {x, b})) {
        Node* px = x.node();
        Node* pb = b.node();
        bw = [px, pb, h, w, c](Node& n) {
            if (px->requires_grad) px->accumulate(n.grad);
            if (pb->requires_grad) {
                Tensor& db = pb->ensure_grad();
                for (std::int64_t p = 0; p < h * w; ++p) {
                    kern::active().add(db.data(), n.grad.data() + p * c, db.data(),
                                       static_cast<std::size_t>(c));
                }
            }
        };
    }
    return Value(g, g->make(std::move(out), {x.node(), b.node()}, std::move(bw)));
}

// ---- layout transforms ----------------------------------------------------------

Tensor squeeze2_t(const Tensor& x) {
    if (x.rank() != 3) throw std::invalid_argument("squeeze2: rank-3 input required");
    const std::int64_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    if (h % 2 != 0 || w % 2 != 0) {
        throw std::invalid_argument("squeeze2: spatial dims must be even, got " + x.shape_str());
    }
    Tensor out({h / 2, w / 2, 4 * c});
    for (std::int64_t i = 0; i < h / 2; ++i) {
        for (std::int64_t j = 0; j < w / 2; ++j) {
            for (std::int64_t di = 0; di < 2; ++di) {
                for (std::int64_t dj = 0; dj < 2; ++dj) {
                    const double* src = x.data() + ((2 * i + di) * w + (2 * j + dj)) * c;
                    double* dst = out.data() + (i * (w / 2) + j) * 4 * c + (di * 2 + dj) * c;
                    for (std::int64_t k = 0; k < c; ++k) dst[k] = src[k];
                }
            }
        }
    }
    return out;
}

Tensor unsqueeze2_t(const Tensor& x) {
    if (x.rank() != 3) throw std::invalid_argument("unsqueeze2: rank-3 input required");
    const std::int64_t h2 = x.dim(0), w2 = x.dim(1), c4 = x.dim(2);
    if (c4 % 4 != 0) throw std::invalid_argument("unsqueeze2: channels must be divisible by 4");
    const std::int64_t c = c4 / 4;
    Tensor out({h2 * 2, w2 * 2, c});
    for (std::int64_t i = 0; i < h2; ++i) {
        for (std::int64_t j = 0; j < w2; ++j) {
            for (std::int64_t di = 0; di < 2; ++di) {
                for (std::int64_t dj = 0; dj < 2; ++dj) {
                    const double* src = x.data() + (i * w2 + j) * c4 + (di * 2 + dj) * c;
                    double* dst = out.data() + ((2 * i + di) * w2 * 2 + (2 * j + dj)) * c;
                    for (std::int64_t k = 0; k < c; ++k) dst[k] = src[k];
                }
            }
        }
    }
    return out;
}

namespace {

// shared backward for bijective layout transforms: push grad through inverse
Value layout_op(Value a, Tensor out, Tensor (*inverse)(const Tensor&)) {
    Graph* g = a.graph();
    std::function<void(Node&)> bw;
    if (track(g, {a})) {
        Node* pa = a.node();
        bw = [pa, inverse](Node& n) { pa->accumulate(inverse(n.grad)); };
    }
    return Value(g, g->make(std::move(out), {a.node()}, std::move(bw)));
}

}  // namespace

Value squeeze2(Value a) { return layout_op(a, squeeze2_t(a.t()), &unsqueeze2_t); }

Value unsqueeze2(Value a) { return layout_op(a, unsqueeze2_t(a.t()), &squeeze2_t); }

Value reshape(Value a, std::vector<std::int64_t> shape) {
    Graph* g = a.graph();
    Tensor out = a.t().reshaped(std::move(shape));
    std::function<void(Node&)> bw;
    if (track(g, {a})) {
        Node* pa = a.node();
        bw = [pa](Node& n) { pa->accumulate(n.grad.reshaped(pa->value.shape())); };
    }
    return Value(g, g->make(std::move(out), {a.node()}, std::move(bw)));
}

// ---- channel mixing (invertible 1x1) ----------------------------------------------

Value mix_channels(Value x, Value w) {
    Graph* g = same_graph(x, w);
    require(x.t().rank() == 3 && w.t().rank() == 2, "mix_channels: (H,W,C) and (C,C) expected");
    const std::int64_t h = x.t().dim(0), ww = x.t().dim(1), c = x.t().dim(2);
    require(w.t().dim(0) == c && w.t().dim(1) == c, "mix_channels: weight must be CxC");
    Tensor out(x.shape());
    const auto& kn = kern::active();
    for (std::int64_t p = 0; p < h * ww; ++p) {
        // y[r] = dot(W row r, x)
        kn.matvec_t_acc(x.t().data() + p * c, w.t().data(), out.data() + p * c,
                        static_cast<std::size_t>(c), static_cast<std::size_t>(c));
    }
    std::function<void(Node&)> bw;
    if (track(g, {x, w})) {
        Node* px = x.node();
        Node* pw = w.node();
        bw = [px, pw, h, ww, c](Node& n) {
            const auto& kk = kern::active();
            const auto cs = static_cast<std::size_t>(c);
            Tensor* dx = px->requires_grad ? &px->ensure_grad() : nullptr;
            Tensor* dw = pw->requires_grad ? &pw->ensure_grad() : nullptr;
            for (std::int64_t p = 0; p < h * ww; ++p) {
                const double* gy = n.grad.data() + p * c;
                if (dx) {
                    // dx = W^T gy
                    kk.matvec_acc(gy, pw->value.data(), dx->data() + p * c, cs, cs);
                }
                if (dw) {
                    // dW[r, :] += gy[r] * x
                    kk.outer_acc(gy, px->value.data() + p * c, dw->data(), cs, cs);
                }
            }
        };
    }
    return Value(g, g->make(std::move(out), {x.node(), w.node()}, std::move(bw)));
}

Value logabsdet(Value w) {
    Graph* g = w.graph();
    require(w.t().rank() == 2 && w.t().dim(0) == w.t().dim(1), "logabsdet: square matrix expected");
    Tensor out({1});
    out[0] = log_abs_det(w.t());
    std::function<void(Node&)> bw;
    if (track(g, {w})) {
        Node* pw = w.node();
        bw = [pw](Node& n) {
            const double go = n.grad[0];
            const Tensor inv = invert(pw->value);
            Tensor& dw = pw->ensure_grad();
            const std::int64_t c = pw->value.dim(0);
            for (std::int64_t r = 0; r < c; ++r) {
                for (std::int64_t k = 0; k < c; ++k) dw[r * c + k] += go * inv[k * c + r];
            }
        };
    }
    return Value(g, g->make(std::move(out), {w.node()}, std::move(bw)));
}

// ---- bicubic resize --------------------------------------------------------------

Value resize_bicubic(Value x, std::int64_t out_h, std::int64_t out_w) {
    Graph* g = x.graph();
    require(x.t().rank() == 3, "resize_bicubic: rank-3 input required");
    const std::int64_t in_h = x.t().dim(0), in_w = x.t().dim(1);
    Tensor out = fsncsr::resize_bicubic(x.t(), out_h, out_w);
    std::function<void(Node&)> bw;
    if (track(g, {x})) {
        Node* px = x.node();
        bw = [px, in_h, in_w](Node& n) {
            px->accumulate(resize_bicubic_adjoint(n.grad, in_h, in_w));
        };
    }
    return Value(g, g->make(std::move(out), {x.node()}, std::move(bw)));
}

// ---- gradient programs -------------------------------------------------------------

std::map<std::string, Tensor> grad(const Program& program) {
    Graph g;
    Value loss = program(g);
    if (loss.numel() != 1) {
        throw std::invalid_argument("grad: program must produce a scalar loss");
    }
    g.backward(loss);
    return g.grads();
}

double eval_scalar(const Program& program) {
    Graph g(false);
    Value loss = program(g);
    if (loss.numel() != 1) {
        throw std::invalid_argument("eval_scalar: program must produce a scalar loss");
    }
    return loss.scalar();
}

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    os << "gradient check (eps=" << eps << ", tol=" << tol << "): "
       << (pass ? "PASS" : "FAIL") << '\n';
    for (const auto& e : entries) {
        os << "  " << (e.pass ? "ok  " : "FAIL") << ' ' << e.name
           << "  max_rel_err=" << e.max_rel_err;
        if (e.worst_index >= 0) {
            os << "  (elt " << e.worst_index << ": analytic=" << e.analytic
               << " numeric=" << e.numeric << ')';
        }
        os << '\n';
    }
    return os.str();
}

GradCheckReport check_gradients(const Program& program, optim::ParamStore& params, double eps,
                                double tol) {
    if (eps < 1e-7 || eps > 1e-3) {
        throw std::invalid_argument("check_gradients: eps outside [1e-7, 1e-3]");
    }
    GradCheckReport report;
    report.eps = eps;
    report.tol = tol;
    const auto analytic = grad(program);
    for (const std::string& name : params.names()) {
        GradCheckEntry entry;
        entry.name = name;
        auto it = analytic.find(name);
        const Tensor* ag = it != analytic.end() ? &it->second : nullptr;
        Tensor& value = params.value(name);
        const std::int64_t m = value.numel();
        for (std::int64_t i = 0; i < m; ++i) {
            const double saved = value[i];
            value[i] = saved + eps;
            const double lp = eval_scalar(program);
            value[i] = saved - eps;
            const double lm = eval_scalar(program);
            value[i] = saved;
            if (!std::isfinite(lp) || !std::isfinite(lm)) {
                throw std::runtime_error("check_gradients: non-finite loss while probing " + name);
            }
            const double numeric = (lp - lm) / (2.0 * eps);
            const double a = ag ? (*ag)[i] : 0.0;
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-12});
            const double rel = std::fabs(a - numeric) / denom;
            if (rel > entry.max_rel_err) {
                entry.max_rel_err = rel;
                entry.worst_index = i;
                entry.analytic = a;
                entry.numeric = numeric;
            }
        }
        entry.pass = entry.max_rel_err <= tol;
        report.pass = report.pass && entry.pass;
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace fsncsr::ad
