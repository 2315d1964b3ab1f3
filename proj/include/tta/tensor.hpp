#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Reverse-mode automatic differentiation over dense double arrays.
//
// A Tape records every primitive application in topological order
// (define-by-run); backward() walks the record once in reverse. Tensors are
// plain values: shape + row-major buffer + an optional handle into the tape
// that produced them. A fresh tape is built for every training/adaptation
// step; tapes are never reused across steps.

namespace tta {

using Shape = std::vector<int>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

struct Tensor {
    Shape shape;
    std::vector<double> values;
    Tape* tape = nullptr;
    int node = -1;
    bool requires_grad = false;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> v);

    static Tensor zeros(Shape s);
    static Tensor scalar(double v);  // shape {}, off-tape constant

    std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }
    bool is_scalar() const { return values.size() == 1 && shape.empty(); }
    int rank() const { return static_cast<int>(shape.size()); }
    int rows() const;  // rank-2 only
    int cols() const;  // rank-2 only
    double item() const;

    double& at(int r, int c);
    double at(int r, int c) const;
};

enum class Op : std::uint8_t {
    leaf,
    stop_gradient,
    matmul,
    add,
    sub,
    mul,
    scalar_mul,
    add_scalar,
    relu,
    exp,
    log,
    square,
    softmax,
    log_softmax,
    sum,
    mean,
    rowsum,
    colmean,
    row,
    transpose,
    l2norm,
    cosine_sim,
};

const char* op_name(Op op);

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf tensors. Variables participate in differentiation, constants never
    // receive gradients.
    Tensor variable(Shape s, std::vector<double> v);
    Tensor constant(Shape s, std::vector<double> v);
    Tensor constant(const Tensor& t) { return constant(t.shape, t.values); }

    // Reverse pass from a scalar loss. Resets all gradient slots first, so
    // calling it twice on the same tape gives identical results. Throws if
    // the loss is not a scalar recorded on this tape.
    void backward(const Tensor& loss);

    // Gradient of the last backward() w.r.t. a tensor recorded here. Zero for
    // tensors the loss does not reach. Throws for requires_grad == false.
    Tensor grad(const Tensor& t) const;

    std::size_t num_nodes() const { return nodes_.size(); }

private:
    struct Node {
        Op op = Op::leaf;
        Shape shape;
        std::vector<double> values;
        int in0 = -1;
        int in1 = -1;
        double attr = 0.0;  // scalar_mul factor / add_scalar addend / row index
        bool requires_grad = false;
    };

    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;  // parallel to nodes_, lazily filled

    friend struct TapeOps;
};

// --- primitive applications (each records one node on the inputs' tape) ---

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);  // same shape, or {m,n} + {n}
Tensor sub(const Tensor& a, const Tensor& b);  // same shape, or {m,n} - {n}
Tensor mul(const Tensor& a, const Tensor& b);  // same shape, or {m,n} * {n}
Tensor scalar_mul(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);  // rejects non-positive entries
Tensor square(const Tensor& a);
Tensor softmax(const Tensor& a);      // rowwise; rank-1 treated as one row
Tensor log_softmax(const Tensor& a);  // rowwise, max-subtraction stable form
Tensor sum(const Tensor& a);          // all elements -> scalar
Tensor mean(const Tensor& a);
Tensor rowsum(const Tensor& a);     // {m,n} -> {m}; rank-1 -> scalar
Tensor colmean(const Tensor& a);    // {m,n} -> {n}
Tensor row(const Tensor& a, int i);  // {m,n} -> {n}
Tensor transpose(const Tensor& a);   // {m,n} -> {n,m}
Tensor l2norm_rows(const Tensor& a);  // {m,n} -> {m}; rank-1 -> scalar
Tensor cosine_sim_rows(const Tensor& a, const Tensor& b);  // rowwise pairs

// Same values, but downstream gradients stop here.
Tensor stop_gradient(const Tensor& a);

}  // namespace tta
