#include "umr/encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "umr/common.hpp"

namespace umr {

namespace {

constexpr char kMagic[4] = {'U', 'M', 'R', '1'};
constexpr uint32_t kVersion = 1;

void fill_uniform(std::vector<float>& w, Rng& rng, double a) {
    for (auto& x : w) x = float(rng.uniform(-a, a));
}

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
void read_pod(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
}

void write_floats(std::ofstream& out, const std::vector<float>& v) {
    out.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(float)));
}

void read_floats(std::ifstream& in, std::vector<float>& v, size_t n) {
    v.resize(n);
    in.read(reinterpret_cast<char*>(v.data()), std::streamsize(n * sizeof(float)));
}

void check_finite(const std::vector<double>& g, const char* block) {
    for (double x : g)
        if (!std::isfinite(x))
            throw FatalError(std::string("non-finite gradient in parameter block ") + block);
}

// Shared AdamW inner loop for one parameter block.
void adamw_block(std::vector<float>& w, std::vector<float>& m, std::vector<float>& v,
                 const std::vector<double>& g, const OptimizerState& opt, double bc1, double bc2) {
    for (size_t i = 0; i < w.size(); ++i) {
        double mi = opt.beta1 * double(m[i]) + (1.0 - opt.beta1) * g[i];
        double vi = opt.beta2 * double(v[i]) + (1.0 - opt.beta2) * g[i] * g[i];
        m[i] = float(mi);
        v[i] = float(vi);
        double mhat = mi / bc1;
        double vhat = vi / bc2;
        double p = double(w[i]);
        p -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
        p -= opt.lr * opt.weight_decay * double(w[i]);
        w[i] = float(p);
    }
}

}  // namespace

EncoderParams init_params(int dim, int64_t feature_dim, uint64_t seed) {
    if (dim < 1 || feature_dim < 1) throw FatalError("init_params: dim and feature_dim must be >= 1");
    EncoderParams p;
    p.dim = dim;
    p.feature_dim = feature_dim;
    p.init_seed = seed;
    p.w_query.resize(size_t(dim) * size_t(feature_dim));
    p.w_doc.resize(size_t(dim) * size_t(feature_dim));
    double a = std::sqrt(6.0 / (double(dim) + 1.0));
    Rng rng(seed ^ 0x656e63ULL);
    fill_uniform(p.w_query, rng, a);
    fill_uniform(p.w_doc, rng, a);
    return p;
}

OptimizerState init_optimizer(const EncoderParams& params, const Config& cfg) {
    OptimizerState opt;
    opt.lr = cfg.encoder.lr;
    opt.beta1 = cfg.encoder.beta1;
    opt.beta2 = cfg.encoder.beta2;
    opt.eps = cfg.encoder.eps;
    opt.weight_decay = cfg.encoder.weight_decay;
    opt.resize_like(params);
    return opt;
}

Embedding encode(const EncoderParams& params, Side side, const FeatureVector& fv) {
    const auto& w = params.weights(side);
    const size_t F = size_t(params.feature_dim);
    Embedding emb(size_t(params.dim), 0.f);
    for (const auto& [idx, count] : fv.entries) {
        if (int64_t(idx) >= params.feature_dim)
            throw FatalError("encode: feature index " + std::to_string(idx) +
                             " >= feature_dim " + std::to_string(params.feature_dim) +
                             " (corpus/encoder config mismatch)");
        float c = float(count);
        for (int r = 0; r < params.dim; ++r) emb[size_t(r)] += c * w[size_t(r) * F + idx];
    }
    return emb;
}

double dot(const Embedding& a, const Embedding& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
    return s;
}

double score(const EncoderParams& params, const FeatureVector& q_fv, const FeatureVector& d_fv) {
    return dot(encode(params, Side::kQuery, q_fv), encode(params, Side::kDocument, d_fv));
}

void apply_gradients(EncoderParams& params, OptimizerState& opt, const EncoderGrads& grads) {
    if (grads.w_query.size() != params.w_query.size() ||
        grads.w_doc.size() != params.w_doc.size())
        throw FatalError("apply_gradients: gradient shape mismatch");
    check_finite(grads.w_query, "W_q");
    check_finite(grads.w_doc, "W_d");
    opt.step += 1;
    double bc1 = 1.0 - std::pow(opt.beta1, double(opt.step));
    double bc2 = 1.0 - std::pow(opt.beta2, double(opt.step));
    adamw_block(params.w_query, opt.m_query, opt.v_query, grads.w_query, opt, bc1, bc2);
    adamw_block(params.w_doc, opt.m_doc, opt.v_doc, grads.w_doc, opt, bc1, bc2);
}

uint64_t params_fingerprint(const EncoderParams& params) {
    Fingerprint fp;
    fp.update_pod(params.dim);
    fp.update_pod(params.feature_dim);
    fp.update_pod(params.init_seed);
    fp.update(params.w_query.data(), params.w_query.size() * sizeof(float));
    fp.update(params.w_doc.data(), params.w_doc.size() * sizeof(float));
    return fp.digest();
}

void save_checkpoint(const EncoderParams& params, const OptimizerState& opt,
                     const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FatalError("cannot write checkpoint: " + path);
    out.write(kMagic, 4);
    write_pod(out, kVersion);
    write_pod(out, uint32_t(params.dim));
    write_pod(out, uint64_t(params.feature_dim));
    write_pod(out, params.init_seed);
    write_floats(out, params.w_query);
    write_floats(out, params.w_doc);
    write_pod(out, opt.step);
    write_pod(out, opt.lr);
    write_pod(out, opt.beta1);
    write_pod(out, opt.beta2);
    write_pod(out, opt.eps);
    write_pod(out, opt.weight_decay);
    write_floats(out, opt.m_query);
    write_floats(out, opt.v_query);
    write_floats(out, opt.m_doc);
    write_floats(out, opt.v_doc);
    if (!out) throw FatalError("short write on checkpoint: " + path);
}

void load_checkpoint(const std::string& path, EncoderParams& params, OptimizerState& opt) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FatalError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw FatalError("bad checkpoint magic in " + path);
    uint32_t version = 0, dim = 0;
    uint64_t feature_dim = 0;
    read_pod(in, version);
    if (version != kVersion)
        throw FatalError("unsupported checkpoint version " + std::to_string(version));
    read_pod(in, dim);
    read_pod(in, feature_dim);
    read_pod(in, params.init_seed);
    if (dim == 0 || feature_dim == 0) throw FatalError("bad checkpoint shape in " + path);
    params.dim = int(dim);
    params.feature_dim = int64_t(feature_dim);
    size_t n = size_t(dim) * size_t(feature_dim);
    read_floats(in, params.w_query, n);
    read_floats(in, params.w_doc, n);
    read_pod(in, opt.step);
    read_pod(in, opt.lr);
    read_pod(in, opt.beta1);
    read_pod(in, opt.beta2);
    read_pod(in, opt.eps);
    read_pod(in, opt.weight_decay);
    read_floats(in, opt.m_query, n);
    read_floats(in, opt.v_query, n);
    read_floats(in, opt.m_doc, n);
    read_floats(in, opt.v_doc, n);
    if (!in) throw FatalError("truncated checkpoint: " + path);
}

}  // namespace umr
