#include "tta/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

#include "tta/rng.hpp"

namespace tta {

namespace {

Linear init_linear(Rng& rng, int in, int out) {
    Linear l;
    l.in = in;
    l.out = out;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    l.W.resize(static_cast<std::size_t>(out) * in);
    for (double& w : l.W) w = rng.uniform(-bound, bound);
    l.b.resize(static_cast<std::size_t>(out));
    for (double& b : l.b) b = rng.uniform(-bound, bound);
    return l;
}

FeatureNorm init_norm(int dim) {
    FeatureNorm n;
    n.dim = dim;
    n.gamma.assign(static_cast<std::size_t>(dim), 1.0);
    n.beta.assign(static_cast<std::size_t>(dim), 0.0);
    n.running_mean.assign(static_cast<std::size_t>(dim), 0.0);
    n.running_var.assign(static_cast<std::size_t>(dim), 1.0);
    return n;
}

}  // namespace

Model init_model(std::uint64_t seed, const std::vector<int>& layer_dims, int num_classes) {
    if (layer_dims.size() < 2) {
        throw std::invalid_argument("init_model: layer_dims needs at least input and feature sizes");
    }
    for (int d : layer_dims) {
        if (d < 1) throw std::invalid_argument("init_model: non-positive layer dimension");
    }
    if (num_classes < 2) throw std::invalid_argument("init_model: num_classes must be >= 2");

    Model m;
    m.layer_dims = layer_dims;
    m.num_classes = num_classes;
    Rng rng(seed);
    for (std::size_t i = 0; i + 1 < layer_dims.size(); ++i) {
        m.linears.push_back(init_linear(rng, layer_dims[i], layer_dims[i + 1]));
        m.norms.push_back(init_norm(layer_dims[i + 1]));
    }
    m.head = init_linear(rng, m.feature_dim(), num_classes);
    return m;
}

std::vector<ParamRef> parameters(Model& m) {
    std::vector<ParamRef> out;
    for (std::size_t i = 0; i < m.linears.size(); ++i) {
        const std::string tag = std::to_string(i);
        Linear& l = m.linears[i];
        FeatureNorm& n = m.norms[i];
        out.push_back({"linear" + tag + ".W", {l.out, l.in}, &l.W, false});
        out.push_back({"linear" + tag + ".b", {l.out}, &l.b, false});
        out.push_back({"norm" + tag + ".gamma", {n.dim}, &n.gamma, true});
        out.push_back({"norm" + tag + ".beta", {n.dim}, &n.beta, true});
    }
    out.push_back({"head.W", {m.head.out, m.head.in}, &m.head.W, false});
    out.push_back({"head.b", {m.head.out}, &m.head.b, false});
    return out;
}

ForwardResult forward(Tape& tape, Model& m, const Tensor& x, StatsMode mode, bool bind_params) {
    if (x.rank() != 2 || x.shape[1] != m.input_dim()) {
        throw std::invalid_argument("forward: expected input of shape {batch," +
                                    std::to_string(m.input_dim()) + "}, got " + shape_str(x.shape));
    }
    const int batch = x.shape[0];
    if (batch < 1) throw std::invalid_argument("forward: empty batch");

    ForwardResult out;
    auto bind = [&](const Shape& s, std::vector<double>& v) {
        Tensor t = bind_params ? tape.variable(s, v) : tape.constant(s, v);
        out.params.push_back(t);
        return t;
    };

    Tensor h = tape.constant(x.shape, x.values);
    for (std::size_t i = 0; i < m.linears.size(); ++i) {
        Linear& lin = m.linears[i];
        FeatureNorm& fn = m.norms[i];
        Tensor W = bind({lin.out, lin.in}, lin.W);
        Tensor b = bind({lin.out}, lin.b);
        Tensor gamma = bind({fn.dim}, fn.gamma);
        Tensor beta = bind({fn.dim}, fn.beta);

        Tensor a = add(matmul(h, transpose(W)), b);  // {batch, out}

        Tensor normed;
        if (mode == StatsMode::frozen) {
            std::vector<double> invstd(static_cast<std::size_t>(fn.dim));
            for (int j = 0; j < fn.dim; ++j) {
                invstd[static_cast<std::size_t>(j)] =
                    1.0 / std::sqrt(fn.running_var[static_cast<std::size_t>(j)] + m.norm_eps);
            }
            Tensor mu = tape.constant({fn.dim}, fn.running_mean);
            Tensor is = tape.constant({fn.dim}, std::move(invstd));
            normed = mul(sub(a, mu), is);
        } else {
            Tensor mu = colmean(a);                         // {out}
            Tensor centered = sub(a, mu);                   // {batch, out}
            Tensor var = colmean(square(centered));         // biased
            Tensor invstd = exp(scalar_mul(log(add_scalar(var, m.norm_eps)), -0.5));
            normed = mul(centered, invstd);
            const double mom = m.norm_momentum;
            for (int j = 0; j < fn.dim; ++j) {
                auto& rm = fn.running_mean[static_cast<std::size_t>(j)];
                auto& rv = fn.running_var[static_cast<std::size_t>(j)];
                rm = (1.0 - mom) * rm + mom * mu.values[static_cast<std::size_t>(j)];
                rv = (1.0 - mom) * rv + mom * var.values[static_cast<std::size_t>(j)];
            }
        }
        h = relu(add(mul(normed, gamma), beta));
    }

    Tensor hw = bind({m.head.out, m.head.in}, m.head.W);
    Tensor hb = bind({m.head.out}, m.head.b);
    out.z = h;
    out.p = add(matmul(h, transpose(hw)), hb);
    return out;
}

EvalResult eval_forward(const Model& m, const std::vector<double>& x, int batch) {
    Tape tape;
    // frozen mode mutates nothing, so the const_cast is safe
    ForwardResult r = forward(tape, const_cast<Model&>(m),
                              Tensor({batch, m.input_dim()}, x), StatsMode::frozen,
                              /*bind_params=*/false);
    return {std::move(r.z.values), std::move(r.p.values), batch};
}

void update_norm_stats(Model& m, const Tensor& x) {
    if (x.rank() != 2 || x.shape[1] != m.input_dim()) {
        throw std::invalid_argument("update_norm_stats: bad input shape " + shape_str(x.shape));
    }
    const int batch = x.shape[0];
    if (batch < 2) {
        throw std::invalid_argument("update_norm_stats: batch size must be >= 2");
    }
    // Sequential replacement: each layer's stats come from its own pre-norm
    // activations, computed with the earlier layers already replaced. Running
    // this twice on the same batch is a fixed point.
    std::vector<double> h = x.values;
    int rows = batch;
    for (std::size_t li = 0; li < m.linears.size(); ++li) {
        const Linear& lin = m.linears[li];
        FeatureNorm& fn = m.norms[li];
        std::vector<double> a(static_cast<std::size_t>(rows) * lin.out);
        for (int i = 0; i < rows; ++i) {
            for (int o = 0; o < lin.out; ++o) {
                double s = lin.b[static_cast<std::size_t>(o)];
                for (int j = 0; j < lin.in; ++j) {
                    s += lin.W[static_cast<std::size_t>(o) * lin.in + j] *
                         h[static_cast<std::size_t>(i) * lin.in + j];
                }
                a[static_cast<std::size_t>(i) * lin.out + o] = s;
            }
        }
        for (int o = 0; o < lin.out; ++o) {
            double mean = 0.0;
            for (int i = 0; i < rows; ++i) mean += a[static_cast<std::size_t>(i) * lin.out + o];
            mean /= rows;
            double var = 0.0;
            for (int i = 0; i < rows; ++i) {
                const double d = a[static_cast<std::size_t>(i) * lin.out + o] - mean;
                var += d * d;
            }
            var /= rows;
            fn.running_mean[static_cast<std::size_t>(o)] = mean;
            fn.running_var[static_cast<std::size_t>(o)] = var;
        }
        std::vector<double> nh(a.size());
        for (int i = 0; i < rows; ++i) {
            for (int o = 0; o < lin.out; ++o) {
                const std::size_t oi = static_cast<std::size_t>(o);
                const double normed =
                    (a[static_cast<std::size_t>(i) * lin.out + o] - fn.running_mean[oi]) /
                    std::sqrt(fn.running_var[oi] + m.norm_eps);
                const double y = fn.gamma[oi] * normed + fn.beta[oi];
                nh[static_cast<std::size_t>(i) * lin.out + o] = y > 0.0 ? y : 0.0;
            }
        }
        h = std::move(nh);
    }
}

// ---------------------------------------------------------------------------
// Checkpoint I/O
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'T', 'T', 'A', 'M'};
constexpr std::uint32_t kVersion = 1;

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f != nullptr) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_bytes(std::FILE* f, const void* p, std::size_t n) {
    if (std::fwrite(p, 1, n, f) != n) throw std::runtime_error("checkpoint: write failed");
}

void read_bytes(std::FILE* f, void* p, std::size_t n) {
    if (std::fread(p, 1, n, f) != n) throw std::runtime_error("checkpoint: truncated file");
}

void write_u32(std::FILE* f, std::uint32_t v) { write_bytes(f, &v, sizeof v); }
void write_f64(std::FILE* f, double v) { write_bytes(f, &v, sizeof v); }

std::uint32_t read_u32(std::FILE* f) {
    std::uint32_t v = 0;
    read_bytes(f, &v, sizeof v);
    return v;
}

double read_f64(std::FILE* f) {
    double v = 0.0;
    read_bytes(f, &v, sizeof v);
    return v;
}

void write_array(std::FILE* f, const std::string& name, const std::vector<double>& v) {
    write_u32(f, static_cast<std::uint32_t>(name.size()));
    write_bytes(f, name.data(), name.size());
    write_u32(f, static_cast<std::uint32_t>(v.size()));
    write_bytes(f, v.data(), v.size() * sizeof(double));
}

void read_array(std::FILE* f, const std::string& expect, std::vector<double>& out) {
    const std::uint32_t nl = read_u32(f);
    std::string name(nl, '\0');
    read_bytes(f, name.data(), nl);
    if (name != expect) {
        throw std::runtime_error("checkpoint: expected array '" + expect + "', found '" + name + "'");
    }
    const std::uint32_t n = read_u32(f);
    out.resize(n);
    read_bytes(f, out.data(), static_cast<std::size_t>(n) * sizeof(double));
}

// All arrays, trainable and buffers, in serialization order.
std::vector<std::pair<std::string, std::vector<double>*>> all_arrays(Model& m) {
    std::vector<std::pair<std::string, std::vector<double>*>> out;
    for (std::size_t i = 0; i < m.linears.size(); ++i) {
        const std::string tag = std::to_string(i);
        out.emplace_back("linear" + tag + ".W", &m.linears[i].W);
        out.emplace_back("linear" + tag + ".b", &m.linears[i].b);
        out.emplace_back("norm" + tag + ".gamma", &m.norms[i].gamma);
        out.emplace_back("norm" + tag + ".beta", &m.norms[i].beta);
        out.emplace_back("norm" + tag + ".running_mean", &m.norms[i].running_mean);
        out.emplace_back("norm" + tag + ".running_var", &m.norms[i].running_var);
    }
    out.emplace_back("head.W", &m.head.W);
    out.emplace_back("head.b", &m.head.b);
    return out;
}

}  // namespace

void save_checkpoint(const Model& m, const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    write_bytes(f.get(), kMagic, sizeof kMagic);
    write_u32(f.get(), kVersion);
    write_u32(f.get(), static_cast<std::uint32_t>(m.layer_dims.size()));
    for (int d : m.layer_dims) write_u32(f.get(), static_cast<std::uint32_t>(d));
    write_u32(f.get(), static_cast<std::uint32_t>(m.num_classes));
    write_f64(f.get(), m.norm_eps);
    write_f64(f.get(), m.norm_momentum);
    for (auto& [name, values] : all_arrays(const_cast<Model&>(m))) {
        write_array(f.get(), name, *values);
    }
}

Model load_checkpoint(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    char magic[4];
    read_bytes(f.get(), magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
    }
    const std::uint32_t version = read_u32(f.get());
    if (version != kVersion) {
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    }
    const std::uint32_t nd = read_u32(f.get());
    std::vector<int> dims(nd);
    for (auto& d : dims) d = static_cast<int>(read_u32(f.get()));
    const int num_classes = static_cast<int>(read_u32(f.get()));
    Model m = init_model(0, dims, num_classes);
    m.norm_eps = read_f64(f.get());
    m.norm_momentum = read_f64(f.get());
    for (auto& [name, values] : all_arrays(m)) {
        read_array(f.get(), name, *values);
    }
    return m;
}

}  // namespace tta
