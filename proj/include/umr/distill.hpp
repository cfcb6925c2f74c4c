#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "umr/config.hpp"
#include "umr/corpus.hpp"
#include "umr/encoder.hpp"
#include "umr/index.hpp"

namespace umr {

// Row-major matrix of doubles; softmax/KL/loss reductions run in double
// even though parameters are float.
struct Mat {
    size_t rows = 0, cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    double& at(size_t r, size_t c) { return data[r * cols + c]; }
    double at(size_t r, size_t c) const { return data[r * cols + c]; }
};

// One training batch: b queries, each contributing n teacher-scored
// documents. The softmax domain per query is all b*n batch documents; the
// n*(b-1) documents belonging to other queries are in-batch negatives.
struct TrainBatch {
    int b = 0;  // queries
    int n = 0;  // docs per query
    std::vector<std::string> query_ids;           // b
    std::vector<FeatureVector> query_fvs;         // b
    std::vector<std::string> doc_ids;             // b*n, query-major
    std::vector<FeatureVector> doc_fvs;           // b*n
    std::vector<double> teacher_logits;           // b*n, mean log-likelihoods

    // True when doc column j belongs to query row i.
    bool owns(int i, int j) const { return j / n == i; }
};

struct TrainingReport {
    struct Line {
        int epoch = 0;
        int step = 0;
        double loss = 0.0;
        double grad_norm = 0.0;
        int64_t wall_ms = 0;
    };
    std::vector<Line> lines;
    std::vector<double> epoch_mean_loss;

    void write(const std::string& path) const;
};

// Row-wise softmax with max-subtraction.
Mat student_dist(const Mat& scores);

// Teacher softmax at temperature tau. Masked entries must already hold the
// neg_logit sentinel; their probability underflows to < 1e-30 at defaults.
Mat teacher_dist(const Mat& masked_logits, double tau);

// Mean over rows of KL(teacher row || student row), 0*log0 := 0.
double kl_loss(const Mat& teacher, const Mat& student);

// Teacher logit rows for a batch: own documents carry their logits, cross-
// query documents carry neg_logit. With in_batch_negatives disabled the
// cross entries are masked out of the student domain as well.
Mat teacher_logit_rows(const TrainBatch& batch, const Config& cfg);

// Loss and exact analytic gradients of kl_loss(student_dist(score(..)))
// with the teacher distribution held constant.
std::pair<double, EncoderGrads> loss_and_grads(const EncoderParams& params,
                                               const TrainBatch& batch, const Config& cfg);

// Score matrix b x (b*n) of the current student, double precision.
Mat student_scores(const EncoderParams& params, const TrainBatch& batch, const Config& cfg);

// Shuffle queries by seed, group into batches of b (partial final batch
// dropped), each query contributing its top-n teacher-scored documents.
// Queries missing from the teacher output are skipped with a warning entry.
std::vector<TrainBatch> assemble_batches(const QuerySet& queries,
                                         const std::vector<RankedList>& teacher_lists,
                                         const DocumentCollection& docs, const Config& cfg,
                                         uint64_t seed,
                                         std::vector<std::string>* warnings = nullptr);

// epochs x batches steps of AdamW with gradient accumulation.
TrainingReport train(EncoderParams& params, OptimizerState& opt,
                     const std::vector<TrainBatch>& batches, const Config& cfg);

}  // namespace umr
