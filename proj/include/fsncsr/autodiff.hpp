#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fsncsr/optim.hpp"
#include "fsncsr/tensor.hpp"

// Reverse-mode differentiation over a fixed op set: elementwise arithmetic,
// exp/log/tanh/sigmoid/clamp, matmul, 2-D convolution, sum/mean, channel
// broadcast, slice/concat, squeeze and bicubic resize. Each op carries a
// hand-written backward rule; nodes are recorded in creation order, which is
// already a topological order, so the backward pass is a single reverse walk.

namespace fsncsr::ad {

class Graph;

struct Node {
    Tensor value;
    Tensor grad;
    bool grad_live = false;
    bool requires_grad = false;
    std::string param_name;  // empty unless a parameter leaf
    std::vector<Node*> parents;
    std::function<void(Node&)> backward;

    void accumulate(const Tensor& g);
    Tensor& ensure_grad();
};

class Value {
public:
    Value() = default;
    Value(Graph* g, Node* n) : g_(g), n_(n) {}

    bool valid() const { return n_ != nullptr; }
    const Tensor& t() const { return n_->value; }
    const std::vector<std::int64_t>& shape() const { return n_->value.shape(); }
    std::int64_t numel() const { return n_->value.numel(); }
    double scalar() const;

    Graph* graph() const { return g_; }
    Node* node() const { return n_; }

private:
    Graph* g_ = nullptr;
    Node* n_ = nullptr;
};

class Graph {
public:
    Graph() = default;
    explicit Graph(bool grad_enabled) : grad_enabled_(grad_enabled) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Value constant(Tensor t);
    // differentiable leaf; the graph remembers it by name for grads()
    Value param(const std::string& name, const Tensor& t);
    // convenience: leaf backed by a ParamStore entry
    Value param(const std::string& name, const optim::ParamStore& store);

    bool grad_enabled() const { return grad_enabled_; }

    // Backpropagate from a scalar root. Throws on a non-scalar loss.
    void backward(const Value& root);

    const Tensor* grad_of(const std::string& param_name) const;
    std::map<std::string, Tensor> grads() const;

    Node* make(Tensor value, std::vector<Node*> parents, std::function<void(Node&)> bw);
    std::size_t node_count() const { return nodes_.size(); }

private:
    std::deque<Node> nodes_;
    std::map<std::string, Node*> params_;
    bool grad_enabled_ = true;
};

// ---- op set ---------------------------------------------------------------

Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);
Value divide(Value a, Value b);
Value add_scalar(Value a, double c);
Value mul_scalar(Value a, double c);
Value neg(Value a);

// generic elementwise op with user-supplied value/derivative functions
Value unary(Value a, double (*f)(double), double (*df)(double), const char* name);
Value exp_(Value a);
Value log_(Value a);
Value log_abs(Value a);
Value tanh_(Value a);
Value sigmoid_(Value a);
Value clamp_(Value a, double lo, double hi);

Value matmul(Value a, Value b);          // (M,K)x(K,N)
Value add_rowvec(Value a, Value v);      // (M,N) + broadcast (N)

enum class Padding { same, valid };
// x (H,W,Ci), kernel (kh,kw,Ci,Co), optional bias (Co); cross-correlation
Value conv2d(Value x, Value kernel, Value bias, Padding pad);

Value sum(Value a);   // -> shape {1}
Value mean(Value a);  // -> shape {1}

Value slice_c(Value a, std::int64_t c0, std::int64_t c1);  // channels [c0, c1)
Value concat_c(Value a, Value b);
Value mul_cvec(Value x, Value s);  // x(h,w,c) * s(c)
Value add_cvec(Value x, Value b);  // x(h,w,c) + b(c)

Value squeeze2(Value a);    // (H,W,C) -> (H/2,W/2,4C)
Value unsqueeze2(Value a);  // inverse layout transform
Value reshape(Value a, std::vector<std::int64_t> shape);

Value mix_channels(Value x, Value w);  // per pixel: y = w * x(channel vector)
Value logabsdet(Value w);              // scalar; backward is inverse-transpose

Value resize_bicubic(Value x, std::int64_t out_h, std::int64_t out_w);

// plain-tensor layout transforms shared with the non-differentiating paths
Tensor squeeze2_t(const Tensor& x);
Tensor unsqueeze2_t(const Tensor& x);

// ---- gradient programs -----------------------------------------------------

// A differentiable scalar-valued program; typically a closure over a
// ParamStore that registers leaves via Graph::param.
using Program = std::function<Value(Graph&)>;

// Named gradients of the program's scalar output.
std::map<std::string, Tensor> grad(const Program& program);

// Evaluate without recording (used by the finite-difference probes).
double eval_scalar(const Program& program);

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    std::int64_t worst_index = -1;
    double analytic = 0.0;
    double numeric = 0.0;
    bool pass = true;
};

struct GradCheckReport {
    double eps = 0.0;
    double tol = 0.0;
    std::vector<GradCheckEntry> entries;
    bool pass = true;

    std::string summary() const;
};

// Central finite differences over every element of every parameter.
// rel err = |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
GradCheckReport check_gradients(const Program& program, optim::ParamStore& params, double eps,
                                double tol);

}  // namespace fsncsr::ad
