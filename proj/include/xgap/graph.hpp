#pragma once

#include <functional>
#include <vector>

#include "xgap/tensor.hpp"

namespace xgap {

class Graph;

// Handle to a node on a Graph's tape.
struct Var {
    Graph* graph = nullptr;
    int id = -1;

    const Tensor& value() const;
    // Gradient accumulated by backward(); zero tensor if the node was never
    // reached.
    Tensor grad_or_zero() const;
};

// Dynamic tape for reverse-mode differentiation. Every op records its output
// value and a pullback closure; backward() replays the tape in reverse
// creation order (which is a reverse topological order by construction) and
// accumulates gradients. Forward values are never mutated by backward.
//
// A graph and its tensors belong to one thread; independent graphs may run
// concurrently.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var input(Tensor value, bool requires_grad = false);

    // Propagates from a scalar loss. d(loss)/d(loss) = 1.
    void backward(Var loss);

    const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

    // Lazily allocated gradient accumulator, zero-initialized.
    Tensor& grad_buf(int id);
    const Tensor* grad(int id) const;  // nullptr if never touched

    std::size_t node_count() const { return nodes_.size(); }

    // Used by op implementations. The pullback may read values and grads via
    // the graph but must only write into grad buffers.
    Var record(Tensor value, bool requires_grad, std::function<void(Graph&)> pullback,
               const char* opname);

private:
    struct Node {
        Tensor value;
        Tensor grad;  // empty until touched
        bool requires_grad = false;
        std::function<void(Graph&)> pullback;
    };
    std::vector<Node> nodes_;
    bool ran_backward_ = false;
};

// ---- differentiable ops ----------------------------------------------------

Var matmul(Var a, Var b);     // (m,k)x(k,n) -> (m,n)
Var matmul_nt(Var a, Var b);  // (m,k)x(n,k)^T -> (m,n)
Var transpose(Var a);
Var add(Var a, Var b);  // elementwise, same shape
Var mul(Var a, Var b);  // elementwise, same shape
Var axpb(Var a, double alpha, double beta);  // elementwise alpha*x + beta
inline Var scale(Var a, double s) { return axpb(a, s, 0.0); }
Var add_rowvec(Var a, Var v);                // (m,n) + broadcast rank-1 (n)
Var rows(Var table, std::vector<int> ids);   // embedding-row lookup, scatter-add backward
Var slice_rows(Var a, int start, int len);
Var slice_cols(Var a, int start, int len);
Var concat_rows(const std::vector<Var>& parts);  // along the sequence axis
Var concat_cols(const std::vector<Var>& parts);
Var softmax(Var a);                          // over the last axis, rowwise
Var layer_norm(Var a, Var gain, Var bias);   // over the last axis, eps 1e-5
Var gelu(Var a);                             // exact erf form
Var mean_rows(Var a);                        // (m,n) -> (1,n)
Var mean_all(Var a);                         // -> scalar
Var l2_normalize(Var v);                     // rank-1 -> unit rank-1
Var l2_normalize_rows(Var a);
Var cosine_similarity(Var a, Var b);         // rank-1 pair -> scalar in [-1,1]
Var log_sigmoid(Var a);
Var cross_entropy_logits(Var logits, std::vector<int> targets);  // mean NLL -> scalar
Var reshape(Var a, std::vector<int> shape);

// ---- plain-tensor counterparts --------------------------------------------

// Same math and error behavior as the graph ops, without recording.
Tensor l2_normalize(const Tensor& v);
double cosine_similarity(const Tensor& a, const Tensor& b);

// ---- gradient verification -------------------------------------------------

// Builds a scalar from leaf vars; used to express the function under test.
using GraphFn = std::function<Var(Graph&, const std::vector<Var>&)>;

// Compares the autodiff gradient of fn at `inputs` against central finite
// differences with step eps, coordinate by coordinate. Returns the maximum
// relative error with denominator max(|analytic|, |numeric|, 1e-8).
double grad_check(const GraphFn& fn, const std::vector<Tensor>& inputs, double eps);

}  // namespace xgap
