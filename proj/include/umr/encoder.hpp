#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "umr/corpus.hpp"

namespace umr {

enum class Side { kQuery, kDocument };

using Embedding = std::vector<float>;

// Two trainable linear projections, row-major dim x feature_dim.
struct EncoderParams {
    int dim = 0;
    int64_t feature_dim = 0;
    uint64_t init_seed = 0;
    std::vector<float> w_query;
    std::vector<float> w_doc;

    const std::vector<float>& weights(Side s) const {
        return s == Side::kQuery ? w_query : w_doc;
    }
    std::vector<float>& weights(Side s) { return s == Side::kQuery ? w_query : w_doc; }
};

// Gradient buffers matching EncoderParams, accumulated in double.
struct EncoderGrads {
    std::vector<double> w_query;
    std::vector<double> w_doc;

    void resize_like(const EncoderParams& p) {
        w_query.assign(p.w_query.size(), 0.0);
        w_doc.assign(p.w_doc.size(), 0.0);
    }
    void scale(double s) {
        for (auto& g : w_query) g *= s;
        for (auto& g : w_doc) g *= s;
    }
};

struct OptimizerState {
    uint64_t step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    std::vector<float> m_query, v_query, m_doc, v_doc;

    void resize_like(const EncoderParams& p) {
        m_query.assign(p.w_query.size(), 0.f);
        v_query.assign(p.w_query.size(), 0.f);
        m_doc.assign(p.w_doc.size(), 0.f);
        v_doc.assign(p.w_doc.size(), 0.f);
    }
};

// Entries i.i.d. uniform in [-a, a], a = sqrt(6 / (dim + 1)).
EncoderParams init_params(int dim, int64_t feature_dim, uint64_t seed);

OptimizerState init_optimizer(const EncoderParams& params, const Config& cfg);

// W_side * phi for the sparse count vector phi. No normalization.
Embedding encode(const EncoderParams& params, Side side, const FeatureVector& fv);

// Inner product of the two embeddings.
double score(const EncoderParams& params, const FeatureVector& q_fv, const FeatureVector& d_fv);

double dot(const Embedding& a, const Embedding& b);

// One AdamW step with decoupled weight decay, in place.
void apply_gradients(EncoderParams& params, OptimizerState& opt, const EncoderGrads& grads);

uint64_t params_fingerprint(const EncoderParams& params);

// Checkpoint file: "UMR1", version, dims, weights as little-endian f32
// row-major, then optimizer state.
void save_checkpoint(const EncoderParams& params, const OptimizerState& opt,
                     const std::string& path);
void load_checkpoint(const std::string& path, EncoderParams& params, OptimizerState& opt);

}  // namespace umr
