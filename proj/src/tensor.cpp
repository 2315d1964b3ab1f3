#include "tta/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace tta {

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << ")";
    return os.str();
}

const char* op_name(Op op) {
    switch (op) {
        case Op::leaf: return "leaf";
        case Op::stop_gradient: return "stop_gradient";
        case Op::matmul: return "matmul";
        case Op::add: return "add";
        case Op::sub: return "sub";
        case Op::mul: return "mul";
        case Op::scalar_mul: return "scalar_mul";
        case Op::add_scalar: return "add_scalar";
        case Op::relu: return "relu";
        case Op::exp: return "exp";
        case Op::log: return "log";
        case Op::square: return "square";
        case Op::softmax: return "softmax";
        case Op::log_softmax: return "log_softmax";
        case Op::sum: return "sum";
        case Op::mean: return "mean";
        case Op::rowsum: return "rowsum";
        case Op::colmean: return "colmean";
        case Op::row: return "row";
        case Op::transpose: return "transpose";
        case Op::l2norm: return "l2norm";
        case Op::cosine_sim: return "cosine_sim";
    }
    return "?";
}

Tensor::Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
        throw std::invalid_argument("tensor: value count " + std::to_string(values.size()) +
                                    " does not match shape " + shape_str(shape));
    }
}

Tensor Tensor::zeros(Shape s) {
    std::vector<double> v(static_cast<std::size_t>(shape_numel(s)), 0.0);
    return Tensor(std::move(s), std::move(v));
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

int Tensor::rows() const {
    if (rank() != 2) throw std::logic_error("rows(): tensor is not rank-2");
    return shape[0];
}

int Tensor::cols() const {
    if (rank() != 2) throw std::logic_error("cols(): tensor is not rank-2");
    return shape[1];
}

double Tensor::item() const {
    if (values.size() != 1) throw std::logic_error("item(): tensor is not a scalar");
    return values[0];
}

double& Tensor::at(int r, int c) { return values[static_cast<std::size_t>(r) * cols() + c]; }
double Tensor::at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols() + c]; }

// ---------------------------------------------------------------------------
// Recording
// ---------------------------------------------------------------------------

struct TapeOps {
    static int record(Tape& t, Op op, Shape shape, std::vector<double> values, int in0, int in1,
                      double attr, bool rg) {
        Tape::Node n;
        n.op = op;
        n.shape = std::move(shape);
        n.values = std::move(values);
        n.in0 = in0;
        n.in1 = in1;
        n.attr = attr;
        n.requires_grad = rg;
        t.nodes_.push_back(std::move(n));
        t.grads_.emplace_back();
        return static_cast<int>(t.nodes_.size()) - 1;
    }

    // Returns the node id of `x` on `tape`, adopting off-tape tensors as
    // constant leaves. Mixing tensors from two live tapes is an error.
    static int adopt(Tape& tape, const Tensor& x) {
        if (x.tape == &tape) return x.node;
        if (x.tape == nullptr) {
            return record(tape, Op::leaf, x.shape, x.values, -1, -1, 0.0, false);
        }
        throw std::logic_error("op inputs belong to different tapes");
    }

    static const Tape::Node& node(const Tape& t, int id) { return t.nodes_[static_cast<std::size_t>(id)]; }
};

Tensor Tape::variable(Shape s, std::vector<double> v) {
    Tensor t(std::move(s), std::move(v));
    t.tape = this;
    t.node = TapeOps::record(*this, Op::leaf, t.shape, t.values, -1, -1, 0.0, true);
    t.requires_grad = true;
    return t;
}

Tensor Tape::constant(Shape s, std::vector<double> v) {
    Tensor t(std::move(s), std::move(v));
    t.tape = this;
    t.node = TapeOps::record(*this, Op::leaf, t.shape, t.values, -1, -1, 0.0, false);
    t.requires_grad = false;
    return t;
}

namespace {

Tensor make_result(Tape& tape, Op op, Shape shape, std::vector<double> values, int in0, int in1,
                   double attr, bool rg) {
    Tensor out(std::move(shape), std::move(values));
    out.tape = &tape;
    out.requires_grad = rg;
    out.node = TapeOps::record(tape, op, out.shape, out.values, in0, in1, attr, rg);
    return out;
}

Tape& tape_of(const Tensor& a, const char* op) {
    if (a.tape == nullptr) {
        throw std::logic_error(std::string(op) + ": input is not attached to a tape");
    }
    return *a.tape;
}

Tape& tape_of(const Tensor& a, const Tensor& b, const char* op) {
    if (a.tape != nullptr) return *a.tape;
    if (b.tape != nullptr) return *b.tape;
    throw std::logic_error(std::string(op) + ": neither input is attached to a tape");
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

// Shape pattern for binary elementwise ops: identical shapes, or rank-2 (m,n)
// combined rowwise with a rank-1 (n) vector on the right.
bool rowwise_broadcast(const Tensor& a, const Tensor& b) {
    return a.rank() == 2 && b.rank() == 1 && a.shape[1] == b.shape[0];
}

// Interpret rank-1 as a single row, rank-2 as (rows, cols).
void as_rows(const Tensor& a, int& r, int& c, const char* op) {
    if (a.rank() == 1) {
        r = 1;
        c = a.shape[0];
    } else if (a.rank() == 2) {
        r = a.shape[0];
        c = a.shape[1];
    } else {
        throw std::invalid_argument(std::string(op) + ": expected rank-1 or rank-2, got shape " +
                                    shape_str(a.shape));
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Forward primitives
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.rank() == 2 && b.rank() == 2 && a.shape[1] == b.shape[0],
            "matmul: incompatible shapes " + shape_str(a.shape) + " x " + shape_str(b.shape));
    Tape& tape = tape_of(a, b, "matmul");
    const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
    std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        for (int l = 0; l < k; ++l) {
            const double av = a.values[static_cast<std::size_t>(i) * k + l];
            if (av == 0.0) continue;
            const double* brow = &b.values[static_cast<std::size_t>(l) * n];
            double* orow = &out[static_cast<std::size_t>(i) * n];
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    const int ia = TapeOps::adopt(tape, a), ib = TapeOps::adopt(tape, b);
    return make_result(tape, Op::matmul, {m, n}, std::move(out), ia, ib, 0.0,
                       a.requires_grad || b.requires_grad);
}

namespace {

Tensor binary_elementwise(Op op, const Tensor& a, const Tensor& b, const char* name) {
    Tape& tape = tape_of(a, b, name);
    std::vector<double> out;
    if (a.shape == b.shape) {
        out.resize(a.values.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double x = a.values[i], y = b.values[i];
            out[i] = (op == Op::add) ? x + y : (op == Op::sub) ? x - y : x * y;
        }
    } else if (rowwise_broadcast(a, b)) {
        const int m = a.shape[0], n = a.shape[1];
        out.resize(a.values.size());
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
                const double x = a.values[static_cast<std::size_t>(i) * n + j];
                const double y = b.values[static_cast<std::size_t>(j)];
                out[static_cast<std::size_t>(i) * n + j] =
                    (op == Op::add) ? x + y : (op == Op::sub) ? x - y : x * y;
            }
        }
    } else {
        throw std::invalid_argument(std::string(name) + ": incompatible shapes " +
                                    shape_str(a.shape) + " and " + shape_str(b.shape));
    }
    const int ia = TapeOps::adopt(tape, a), ib = TapeOps::adopt(tape, b);
    return make_result(tape, op, a.shape, std::move(out), ia, ib, 0.0,
                       a.requires_grad || b.requires_grad);
}

Tensor unary_map(Op op, const Tensor& a, const char* name, double attr = 0.0) {
    Tape& tape = tape_of(a, name);
    std::vector<double> out(a.values.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = a.values[i];
        switch (op) {
            case Op::scalar_mul: out[i] = x * attr; break;
            case Op::add_scalar: out[i] = x + attr; break;
            case Op::relu: out[i] = x > 0.0 ? x : 0.0; break;
            case Op::exp: out[i] = std::exp(x); break;
            case Op::log:
                if (x <= 0.0) {
                    throw std::domain_error("log: non-positive input " + std::to_string(x));
                }
                out[i] = std::log(x);
                break;
            case Op::square: out[i] = x * x; break;
            default: throw std::logic_error("unary_map: bad op");
        }
    }
    const int ia = TapeOps::adopt(tape, a);
    return make_result(tape, op, a.shape, std::move(out), ia, -1, attr, a.requires_grad);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_elementwise(Op::add, a, b, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_elementwise(Op::sub, a, b, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_elementwise(Op::mul, a, b, "mul"); }

Tensor scalar_mul(const Tensor& a, double c) { return unary_map(Op::scalar_mul, a, "scalar_mul", c); }
Tensor add_scalar(const Tensor& a, double c) { return unary_map(Op::add_scalar, a, "add_scalar", c); }
Tensor relu(const Tensor& a) { return unary_map(Op::relu, a, "relu"); }
Tensor exp(const Tensor& a) { return unary_map(Op::exp, a, "exp"); }
Tensor log(const Tensor& a) { return unary_map(Op::log, a, "log"); }
Tensor square(const Tensor& a) { return unary_map(Op::square, a, "square"); }

Tensor softmax(const Tensor& a) {
    int m = 0, n = 0;
    as_rows(a, m, n, "softmax");
    require(n >= 1, "softmax: empty rows");
    Tape& tape = tape_of(a, "softmax");
    std::vector<double> out(a.values.size());
    for (int i = 0; i < m; ++i) {
        const double* x = &a.values[static_cast<std::size_t>(i) * n];
        double* y = &out[static_cast<std::size_t>(i) * n];
        const double mx = *std::max_element(x, x + n);
        double s = 0.0;
        for (int j = 0; j < n; ++j) {
            y[j] = std::exp(x[j] - mx);
            s += y[j];
        }
        for (int j = 0; j < n; ++j) y[j] /= s;
    }
    const int ia = TapeOps::adopt(tape, a);
    return make_result(tape, Op::softmax, a.shape, std::move(out), ia, -1, 0.0, a.requires_grad);
}

Tensor log_softmax(const Tensor& a) {
    int m = 0, n = 0;
    as_rows(a, m, n, "log_softmax");
    require(n >= 1, "log_softmax: empty rows");
    Tape& tape = tape_of(a, "log_softmax");
    std::vector<double> out(a.values.size());
    for (int i = 0; i < m; ++i) {
        const double* x = &a.values[static_cast<std::size_t>(i) * n];
        double* y = &out[static_cast<std::size_t>(i) * n];
        const double mx = *std::max_element(x, x + n);
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += std::exp(x[j] - mx);
        const double lse = mx + std::log(s);
        for (int j = 0; j < n; ++j) y[j] = x[j] - lse;
    }
    const int ia = TapeOps::adopt(tape, a);
    return make_result(tape, Op::log_softmax, a.shape, std::move(out), ia, -1, 0.0, a.requires_grad);
}

Tensor sum(const Tensor& a) {
    Tape& tape = tape_of(a, "sum");
    double s = 0.0;
    for (double x : a.values) s += x;
    const int ia = TapeOps::adopt(tape, a);
    return make_result(tape, Op::sum, {}, {s}, ia, -1, 0.0, a.requires_grad);
}

Tensor mean(const Tensor& a) {
    require(!a.values.empty(), "mean: empty tensor");
    Tape& tape = tape_of(a, "mean");
    double s = 0.0;
    for (double x : a.values) s += x;
    const int ia = TapeOps::adopt(tape, a);
    return make_result(tape, Op::mean, {}, {s / static_cast<double>(a.values.size())}, ia, -1, 0.0,
                       a.requires_grad);
}

Tensor rowsum(const Tensor& a) {
    int m = 0, n = 0;
    as_rows(a, m, n, "rowsum");
    Tape& tape = tape_of(a, "rowsum");
    std::vector<double> out(static_cast<std::size_t>(m), 0.0);
    for (int i = 0; i < m; ++i) {
        const double* x = &a.values[static_cast<std::size_t>(i) * n];
        for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i)] += x[j];
    }
    const Shape os = a.rank() == 1 ? Shape{} : Shape{m};
    const int ia = TapeOps::adopt(tape, a);
    return make_result(tape, Op::rowsum, os, std::move(out), ia, -1, 0.0, a.requires_grad);
}

Tensor colmean(const Tensor& a) {
    require(a.rank() == 2, "colmean: expected rank-2, got " + shape_str(a.shape));
    Tape& tape = tape_of(a, "colmean");
    const int m = a.shape[0], n = a.shape[1];
    require(m >= 1, "colmean: empty matrix");
    std::vector<double> out(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j)] += a.at(i, j);
    }
    for (double& x : out) x /= static_cast<double>(m);
    const int ia = TapeOps::adopt(tape, a);
    return make_result(tape, Op::colmean, {n}, std::move(out), ia, -1, 0.0, a.requires_grad);
}

Tensor row(const Tensor& a, int i) {
    require(a.rank() == 2, "row: expected rank-2, got " + shape_str(a.shape));
    require(i >= 0 && i < a.shape[0], "row: index " + std::to_string(i) + " out of range");
    Tape& tape = tape_of(a, "row");
    const int n = a.shape[1];
    std::vector<double> out(a.values.begin() + static_cast<std::ptrdiff_t>(i) * n,
                            a.values.begin() + static_cast<std::ptrdiff_t>(i + 1) * n);
    const int ia = TapeOps::adopt(tape, a);
    return make_result(tape, Op::row, {n}, std::move(out), ia, -1, static_cast<double>(i),
                       a.requires_grad);
}

Tensor transpose(const Tensor& a) {
    require(a.rank() == 2, "transpose: expected rank-2, got " + shape_str(a.shape));
    Tape& tape = tape_of(a, "transpose");
    const int m = a.shape[0], n = a.shape[1];
    std::vector<double> out(a.values.size());
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            out[static_cast<std::size_t>(j) * m + i] = a.values[static_cast<std::size_t>(i) * n + j];
        }
    }
    const int ia = TapeOps::adopt(tape, a);
    return make_result(tape, Op::transpose, {n, m}, std::move(out), ia, -1, 0.0, a.requires_grad);
}

Tensor l2norm_rows(const Tensor& a) {
    int m = 0, n = 0;
    as_rows(a, m, n, "l2norm");
    Tape& tape = tape_of(a, "l2norm");
    std::vector<double> out(static_cast<std::size_t>(m), 0.0);
    for (int i = 0; i < m; ++i) {
        const double* x = &a.values[static_cast<std::size_t>(i) * n];
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += x[j] * x[j];
        out[static_cast<std::size_t>(i)] = std::sqrt(s);
    }
    const Shape os = a.rank() == 1 ? Shape{} : Shape{m};
    const int ia = TapeOps::adopt(tape, a);
    return make_result(tape, Op::l2norm, os, std::move(out), ia, -1, 0.0, a.requires_grad);
}

Tensor cosine_sim_rows(const Tensor& a, const Tensor& b) {
    require(a.shape == b.shape, "cosine_sim: shape mismatch " + shape_str(a.shape) + " vs " +
                                    shape_str(b.shape));
    int m = 0, n = 0;
    as_rows(a, m, n, "cosine_sim");
    Tape& tape = tape_of(a, b, "cosine_sim");
    constexpr double guard = 1e-12;
    std::vector<double> out(static_cast<std::size_t>(m), 0.0);
    for (int i = 0; i < m; ++i) {
        const double* x = &a.values[static_cast<std::size_t>(i) * n];
        const double* y = &b.values[static_cast<std::size_t>(i) * n];
        double dxy = 0.0, dxx = 0.0, dyy = 0.0;
        for (int j = 0; j < n; ++j) {
            dxy += x[j] * y[j];
            dxx += x[j] * x[j];
            dyy += y[j] * y[j];
        }
        out[static_cast<std::size_t>(i)] = dxy / ((std::sqrt(dxx) + guard) * (std::sqrt(dyy) + guard));
    }
    const Shape os = a.rank() == 1 ? Shape{} : Shape{m};
    const int ia = TapeOps::adopt(tape, a), ib = TapeOps::adopt(tape, b);
    return make_result(tape, Op::cosine_sim, os, std::move(out), ia, ib, 0.0,
                       a.requires_grad || b.requires_grad);
}

Tensor stop_gradient(const Tensor& a) {
    Tape& tape = tape_of(a, "stop_gradient");
    const int ia = TapeOps::adopt(tape, a);
    return make_result(tape, Op::stop_gradient, a.shape, a.values, ia, -1, 0.0, false);
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

namespace {

void accumulate(std::vector<double>& slot, std::size_t n, const double* g, double scale = 1.0) {
    if (slot.empty()) slot.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) slot[i] += scale * g[i];
}

}  // namespace

void Tape::backward(const Tensor& loss) {
    if (loss.tape != this || loss.node < 0) {
        throw std::logic_error("backward: loss is not recorded on this tape");
    }
    if (!loss.is_scalar()) {
        throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                    shape_str(loss.shape));
    }
    for (auto& g : grads_) g.clear();
    std::vector<char> touched(nodes_.size(), 0);

    if (!nodes_[static_cast<std::size_t>(loss.node)].requires_grad) {
        return;  // constant loss: every gradient stays zero
    }
    grads_[static_cast<std::size_t>(loss.node)] = {1.0};
    touched[static_cast<std::size_t>(loss.node)] = 1;

    for (int id = loss.node; id >= 0; --id) {
        const auto uid = static_cast<std::size_t>(id);
        if (!touched[uid] || !nodes_[uid].requires_grad) continue;
        const Node& nd = nodes_[uid];
        if (nd.op == Op::leaf || nd.op == Op::stop_gradient) continue;
        const std::vector<double>& g = grads_[uid];

        const Node* a = nd.in0 >= 0 ? &nodes_[static_cast<std::size_t>(nd.in0)] : nullptr;
        const Node* b = nd.in1 >= 0 ? &nodes_[static_cast<std::size_t>(nd.in1)] : nullptr;
        const bool ga = a != nullptr && a->requires_grad;
        const bool gb = b != nullptr && b->requires_grad;
        auto slot_a = [&]() -> std::vector<double>& { return grads_[static_cast<std::size_t>(nd.in0)]; };
        auto slot_b = [&]() -> std::vector<double>& { return grads_[static_cast<std::size_t>(nd.in1)]; };
        if (ga) touched[static_cast<std::size_t>(nd.in0)] = 1;
        if (gb) touched[static_cast<std::size_t>(nd.in1)] = 1;
        if (!ga && !gb) continue;

        switch (nd.op) {
            case Op::matmul: {
                const int m = a->shape[0], k = a->shape[1], n = b->shape[1];
                if (ga) {  // dA = g * B^T
                    auto& da = slot_a();
                    if (da.empty()) da.assign(a->values.size(), 0.0);
                    for (int i = 0; i < m; ++i) {
                        for (int l = 0; l < k; ++l) {
                            double s = 0.0;
                            for (int j = 0; j < n; ++j) {
                                s += g[static_cast<std::size_t>(i) * n + j] *
                                     b->values[static_cast<std::size_t>(l) * n + j];
                            }
                            da[static_cast<std::size_t>(i) * k + l] += s;
                        }
                    }
                }
                if (gb) {  // dB = A^T * g
                    auto& db = slot_b();
                    if (db.empty()) db.assign(b->values.size(), 0.0);
                    for (int l = 0; l < k; ++l) {
                        for (int j = 0; j < n; ++j) {
                            double s = 0.0;
                            for (int i = 0; i < m; ++i) {
                                s += a->values[static_cast<std::size_t>(i) * k + l] *
                                     g[static_cast<std::size_t>(i) * n + j];
                            }
                            db[static_cast<std::size_t>(l) * n + j] += s;
                        }
                    }
                }
                break;
            }
            case Op::add:
            case Op::sub: {
                const double sign_b = nd.op == Op::add ? 1.0 : -1.0;
                if (a->shape == b->shape) {
                    if (ga) accumulate(slot_a(), g.size(), g.data());
                    if (gb) accumulate(slot_b(), g.size(), g.data(), sign_b);
                } else {  // {m,n} (op) {n}
                    const int m = a->shape[0], n = a->shape[1];
                    if (ga) accumulate(slot_a(), g.size(), g.data());
                    if (gb) {
                        auto& db = slot_b();
                        if (db.empty()) db.assign(b->values.size(), 0.0);
                        for (int i = 0; i < m; ++i) {
                            for (int j = 0; j < n; ++j) {
                                db[static_cast<std::size_t>(j)] +=
                                    sign_b * g[static_cast<std::size_t>(i) * n + j];
                            }
                        }
                    }
                }
                break;
            }
            case Op::mul: {
                if (a->shape == b->shape) {
                    if (ga) {
                        auto& da = slot_a();
                        if (da.empty()) da.assign(a->values.size(), 0.0);
                        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * b->values[i];
                    }
                    if (gb) {
                        auto& db = slot_b();
                        if (db.empty()) db.assign(b->values.size(), 0.0);
                        for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * a->values[i];
                    }
                } else {  // {m,n} * {n}
                    const int m = a->shape[0], n = a->shape[1];
                    if (ga) {
                        auto& da = slot_a();
                        if (da.empty()) da.assign(a->values.size(), 0.0);
                        for (int i = 0; i < m; ++i) {
                            for (int j = 0; j < n; ++j) {
                                da[static_cast<std::size_t>(i) * n + j] +=
                                    g[static_cast<std::size_t>(i) * n + j] *
                                    b->values[static_cast<std::size_t>(j)];
                            }
                        }
                    }
                    if (gb) {
                        auto& db = slot_b();
                        if (db.empty()) db.assign(b->values.size(), 0.0);
                        for (int i = 0; i < m; ++i) {
                            for (int j = 0; j < n; ++j) {
                                db[static_cast<std::size_t>(j)] +=
                                    g[static_cast<std::size_t>(i) * n + j] *
                                    a->values[static_cast<std::size_t>(i) * n + j];
                            }
                        }
                    }
                }
                break;
            }
            case Op::scalar_mul:
                if (ga) accumulate(slot_a(), g.size(), g.data(), nd.attr);
                break;
            case Op::add_scalar:
                if (ga) accumulate(slot_a(), g.size(), g.data());
                break;
            case Op::relu: {
                if (ga) {
                    auto& da = slot_a();
                    if (da.empty()) da.assign(a->values.size(), 0.0);
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        if (a->values[i] > 0.0) da[i] += g[i];
                    }
                }
                break;
            }
            case Op::exp: {
                if (ga) {
                    auto& da = slot_a();
                    if (da.empty()) da.assign(a->values.size(), 0.0);
                    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * nd.values[i];
                }
                break;
            }
            case Op::log: {
                if (ga) {
                    auto& da = slot_a();
                    if (da.empty()) da.assign(a->values.size(), 0.0);
                    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] / a->values[i];
                }
                break;
            }
            case Op::square: {
                if (ga) {
                    auto& da = slot_a();
                    if (da.empty()) da.assign(a->values.size(), 0.0);
                    for (std::size_t i = 0; i < g.size(); ++i) da[i] += 2.0 * a->values[i] * g[i];
                }
                break;
            }
            case Op::softmax: {
                if (ga) {
                    int m = 0, n = 0;
                    m = a->shape.size() == 1 ? 1 : a->shape[0];
                    n = a->shape.size() == 1 ? a->shape[0] : a->shape[1];
                    auto& da = slot_a();
                    if (da.empty()) da.assign(a->values.size(), 0.0);
                    for (int i = 0; i < m; ++i) {
                        const double* s = &nd.values[static_cast<std::size_t>(i) * n];
                        const double* gr = &g[static_cast<std::size_t>(i) * n];
                        double gs = 0.0;
                        for (int j = 0; j < n; ++j) gs += gr[j] * s[j];
                        for (int j = 0; j < n; ++j) {
                            da[static_cast<std::size_t>(i) * n + j] += s[j] * (gr[j] - gs);
                        }
                    }
                }
                break;
            }
            case Op::log_softmax: {
                if (ga) {
                    int m = a->shape.size() == 1 ? 1 : a->shape[0];
                    int n = a->shape.size() == 1 ? a->shape[0] : a->shape[1];
                    auto& da = slot_a();
                    if (da.empty()) da.assign(a->values.size(), 0.0);
                    for (int i = 0; i < m; ++i) {
                        const double* ls = &nd.values[static_cast<std::size_t>(i) * n];
                        const double* gr = &g[static_cast<std::size_t>(i) * n];
                        double gsum = 0.0;
                        for (int j = 0; j < n; ++j) gsum += gr[j];
                        for (int j = 0; j < n; ++j) {
                            da[static_cast<std::size_t>(i) * n + j] += gr[j] - std::exp(ls[j]) * gsum;
                        }
                    }
                }
                break;
            }
            case Op::sum: {
                if (ga) {
                    auto& da = slot_a();
                    if (da.empty()) da.assign(a->values.size(), 0.0);
                    for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[0];
                }
                break;
            }
            case Op::mean: {
                if (ga) {
                    auto& da = slot_a();
                    if (da.empty()) da.assign(a->values.size(), 0.0);
                    const double w = g[0] / static_cast<double>(a->values.size());
                    for (std::size_t i = 0; i < da.size(); ++i) da[i] += w;
                }
                break;
            }
            case Op::rowsum: {
                if (ga) {
                    int m = a->shape.size() == 1 ? 1 : a->shape[0];
                    int n = a->shape.size() == 1 ? a->shape[0] : a->shape[1];
                    auto& da = slot_a();
                    if (da.empty()) da.assign(a->values.size(), 0.0);
                    for (int i = 0; i < m; ++i) {
                        for (int j = 0; j < n; ++j) {
                            da[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(i)];
                        }
                    }
                }
                break;
            }
            case Op::colmean: {
                if (ga) {
                    const int m = a->shape[0], n = a->shape[1];
                    auto& da = slot_a();
                    if (da.empty()) da.assign(a->values.size(), 0.0);
                    const double inv = 1.0 / static_cast<double>(m);
                    for (int i = 0; i < m; ++i) {
                        for (int j = 0; j < n; ++j) {
                            da[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(j)] * inv;
                        }
                    }
                }
                break;
            }
            case Op::row: {
                if (ga) {
                    const int n = a->shape[1];
                    const int ridx = static_cast<int>(nd.attr);
                    auto& da = slot_a();
                    if (da.empty()) da.assign(a->values.size(), 0.0);
                    for (int j = 0; j < n; ++j) {
                        da[static_cast<std::size_t>(ridx) * n + j] += g[static_cast<std::size_t>(j)];
                    }
                }
                break;
            }
            case Op::transpose: {
                if (ga) {
                    const int m = a->shape[0], n = a->shape[1];
                    auto& da = slot_a();
                    if (da.empty()) da.assign(a->values.size(), 0.0);
                    for (int i = 0; i < m; ++i) {
                        for (int j = 0; j < n; ++j) {
                            da[static_cast<std::size_t>(i) * n + j] +=
                                g[static_cast<std::size_t>(j) * m + i];
                        }
                    }
                }
                break;
            }
            case Op::l2norm: {
                if (ga) {
                    int m = a->shape.size() == 1 ? 1 : a->shape[0];
                    int n = a->shape.size() == 1 ? a->shape[0] : a->shape[1];
                    auto& da = slot_a();
                    if (da.empty()) da.assign(a->values.size(), 0.0);
                    for (int i = 0; i < m; ++i) {
                        const double norm = nd.values[static_cast<std::size_t>(i)];
                        if (norm == 0.0) continue;  // subgradient 0 at the origin
                        const double w = g[static_cast<std::size_t>(i)] / norm;
                        const double* x = &a->values[static_cast<std::size_t>(i) * n];
                        for (int j = 0; j < n; ++j) {
                            da[static_cast<std::size_t>(i) * n + j] += w * x[j];
                        }
                    }
                }
                break;
            }
            case Op::cosine_sim: {
                constexpr double guard = 1e-12;
                int m = a->shape.size() == 1 ? 1 : a->shape[0];
                int n = a->shape.size() == 1 ? a->shape[0] : a->shape[1];
                std::vector<double>* da = nullptr;
                std::vector<double>* db = nullptr;
                if (ga) {
                    da = &slot_a();
                    if (da->empty()) da->assign(a->values.size(), 0.0);
                }
                if (gb) {
                    db = &slot_b();
                    if (db->empty()) db->assign(b->values.size(), 0.0);
                }
                for (int i = 0; i < m; ++i) {
                    const double* x = &a->values[static_cast<std::size_t>(i) * n];
                    const double* y = &b->values[static_cast<std::size_t>(i) * n];
                    double dxx = 0.0, dyy = 0.0;
                    for (int j = 0; j < n; ++j) {
                        dxx += x[j] * x[j];
                        dyy += y[j] * y[j];
                    }
                    const double na = std::sqrt(dxx), nb = std::sqrt(dyy);
                    const double Na = na + guard, Nb = nb + guard;
                    const double s = nd.values[static_cast<std::size_t>(i)];
                    const double gr = g[static_cast<std::size_t>(i)];
                    for (int j = 0; j < n; ++j) {
                        if (da != nullptr) {
                            const double self = na > 0.0 ? s * x[j] / (na * Na) : 0.0;
                            (*da)[static_cast<std::size_t>(i) * n + j] +=
                                gr * (y[j] / (Na * Nb) - self);
                        }
                        if (db != nullptr) {
                            const double self = nb > 0.0 ? s * y[j] / (nb * Nb) : 0.0;
                            (*db)[static_cast<std::size_t>(i) * n + j] +=
                                gr * (x[j] / (Na * Nb) - self);
                        }
                    }
                }
                break;
            }
            case Op::leaf:
            case Op::stop_gradient:
                break;
        }
    }
}

Tensor Tape::grad(const Tensor& t) const {
    if (t.tape != this || t.node < 0) {
        throw std::logic_error("grad: tensor is not recorded on this tape");
    }
    const auto id = static_cast<std::size_t>(t.node);
    if (!nodes_[id].requires_grad) {
        throw std::logic_error("grad: tensor does not require gradients");
    }
    Tensor g = Tensor::zeros(t.shape);
    if (!grads_[id].empty()) g.values = grads_[id];
    return g;
}

}  // namespace tta
