#include "umr/distill.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "umr/common.hpp"

namespace umr {

namespace {

constexpr double kDeadLogit = -1e300;  // entries outside the softmax domain

Mat softmax_rows(const Mat& logits) {
    Mat out(logits.rows, logits.cols);
    for (size_t i = 0; i < logits.rows; ++i) {
        double mx = kDeadLogit;
        for (size_t j = 0; j < logits.cols; ++j) mx = std::max(mx, logits.at(i, j));
        double z = 0.0;
        for (size_t j = 0; j < logits.cols; ++j) {
            double e = std::exp(logits.at(i, j) - mx);
            out.at(i, j) = e;
            z += e;
        }
        for (size_t j = 0; j < logits.cols; ++j) out.at(i, j) /= z;
    }
    return out;
}

}  // namespace

Mat student_dist(const Mat& scores) { return softmax_rows(scores); }

Mat teacher_dist(const Mat& masked_logits, double tau) {
    if (tau <= 0) throw FatalError("teacher_dist: tau must be > 0");
    Mat scaled(masked_logits.rows, masked_logits.cols);
    for (size_t i = 0; i < scaled.data.size(); ++i)
        scaled.data[i] = masked_logits.data[i] / tau;
    return softmax_rows(scaled);
}

double kl_loss(const Mat& teacher, const Mat& student) {
    if (teacher.rows != student.rows || teacher.cols != student.cols)
        throw FatalError("kl_loss: shape mismatch");
    double total = 0.0;
    for (size_t i = 0; i < teacher.rows; ++i) {
        for (size_t j = 0; j < teacher.cols; ++j) {
            double p = teacher.at(i, j);
            if (p <= 0.0) continue;  // 0 * log 0 := 0
            total += p * (std::log(p) - std::log(student.at(i, j)));
        }
    }
    return total / double(teacher.rows);
}

Mat teacher_logit_rows(const TrainBatch& batch, const Config& cfg) {
    size_t b = size_t(batch.b), m = size_t(batch.b) * size_t(batch.n);
    Mat out(b, m);
    for (size_t i = 0; i < b; ++i) {
        for (size_t j = 0; j < m; ++j) {
            if (batch.owns(int(i), int(j)))
                out.at(i, j) = batch.teacher_logits[j];
            else if (cfg.distill.in_batch_negatives)
                out.at(i, j) = cfg.distill.neg_logit;
            else
                out.at(i, j) = kDeadLogit;
        }
    }
    return out;
}

Mat student_scores(const EncoderParams& params, const TrainBatch& batch, const Config& cfg) {
    size_t b = size_t(batch.b), m = size_t(batch.b) * size_t(batch.n);
    size_t dim = size_t(params.dim);
    size_t F = size_t(params.feature_dim);
    // Same double-precision path as the training forward pass, so planted
    // teacher logits can reproduce the student distribution exactly.
    auto embed = [&](const std::vector<float>& w, const FeatureVector& fv) {
        std::vector<double> e(dim, 0.0);
        for (const auto& [idx, count] : fv.entries) {
            if (int64_t(idx) >= params.feature_dim)
                throw FatalError("student_scores: feature index out of range");
            for (size_t r = 0; r < dim; ++r) e[r] += double(count) * double(w[r * F + idx]);
        }
        return e;
    };
    std::vector<std::vector<double>> q_emb(b), d_emb(m);
    parallel_for(b, cfg.run.threads,
                 [&](size_t i) { q_emb[i] = embed(params.w_query, batch.query_fvs[i]); });
    parallel_for(m, cfg.run.threads,
                 [&](size_t j) { d_emb[j] = embed(params.w_doc, batch.doc_fvs[j]); });
    Mat s(b, m);
    for (size_t i = 0; i < b; ++i)
        for (size_t j = 0; j < m; ++j) {
            double dp = 0.0;
            for (size_t r = 0; r < dim; ++r) dp += q_emb[i][r] * d_emb[j][r];
            s.at(i, j) = (cfg.distill.in_batch_negatives || batch.owns(int(i), int(j)))
                             ? dp
                             : kDeadLogit;
        }
    return s;
}

std::pair<double, EncoderGrads> loss_and_grads(const EncoderParams& params,
                                               const TrainBatch& batch, const Config& cfg) {
    const size_t b = size_t(batch.b);
    const size_t m = size_t(batch.b) * size_t(batch.n);
    const size_t dim = size_t(params.dim);
    const size_t F = size_t(params.feature_dim);
    const bool ibn = cfg.distill.in_batch_negatives;

    // Forward: embeddings in double for gradient precision.
    std::vector<std::vector<double>> q_emb(b), d_emb(m);
    auto embed = [&](const std::vector<float>& w, const FeatureVector& fv) {
        std::vector<double> e(dim, 0.0);
        for (const auto& [idx, count] : fv.entries) {
            if (int64_t(idx) >= params.feature_dim)
                throw FatalError("loss_and_grads: feature index out of range");
            double c = count;
            for (size_t r = 0; r < dim; ++r) e[r] += c * double(w[r * F + idx]);
        }
        return e;
    };
    parallel_for(b, cfg.run.threads,
                 [&](size_t i) { q_emb[i] = embed(params.w_query, batch.query_fvs[i]); });
    parallel_for(m, cfg.run.threads,
                 [&](size_t j) { d_emb[j] = embed(params.w_doc, batch.doc_fvs[j]); });

    Mat scores(b, m);
    for (size_t i = 0; i < b; ++i) {
        for (size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (size_t r = 0; r < dim; ++r) s += q_emb[i][r] * d_emb[j][r];
            if (!std::isfinite(s))
                throw FatalError("loss_and_grads: non-finite score for query " +
                                 batch.query_ids[i]);
            // Without in-batch negatives the cross-query documents leave the
            // softmax domain entirely.
            scores.at(i, j) = (ibn || batch.owns(int(i), int(j))) ? s : kDeadLogit;
        }
    }

    Mat student = student_dist(scores);
    Mat teacher = teacher_dist(teacher_logit_rows(batch, cfg), cfg.distill.temperature);
    // Loss in log space: distant entries may underflow to probability 0 in
    // `student`, but the log-probability s - max - log z stays finite.
    double loss = 0.0;
    for (size_t i = 0; i < b; ++i) {
        double mx = kDeadLogit;
        for (size_t j = 0; j < m; ++j) mx = std::max(mx, scores.at(i, j));
        double z = 0.0;
        for (size_t j = 0; j < m; ++j) z += std::exp(scores.at(i, j) - mx);
        double logz = std::log(z);
        for (size_t j = 0; j < m; ++j) {
            double p = teacher.at(i, j);
            if (p <= 0.0) continue;
            loss += p * (std::log(p) - (scores.at(i, j) - mx - logz));
        }
    }
    loss /= double(b);
    if (!std::isfinite(loss)) throw FatalError("loss_and_grads: non-finite loss");

    // dL/ds(i,j) = (P - P_hat) / b, zero outside the live domain.
    Mat gs(b, m);
    for (size_t i = 0; i < b; ++i)
        for (size_t j = 0; j < m; ++j) {
            if (!ibn && !batch.owns(int(i), int(j))) continue;
            gs.at(i, j) = (student.at(i, j) - teacher.at(i, j)) / double(b);
        }

    // Chain rule through the bilinear score.
    std::vector<std::vector<double>> g_qemb(b, std::vector<double>(dim, 0.0));
    std::vector<std::vector<double>> g_demb(m, std::vector<double>(dim, 0.0));
    for (size_t i = 0; i < b; ++i)
        for (size_t j = 0; j < m; ++j) {
            double g = gs.at(i, j);
            if (g == 0.0) continue;
            for (size_t r = 0; r < dim; ++r) {
                g_qemb[i][r] += g * d_emb[j][r];
                g_demb[j][r] += g * q_emb[i][r];
            }
        }

    EncoderGrads grads;
    grads.resize_like(params);
    for (size_t i = 0; i < b; ++i)
        for (const auto& [idx, count] : batch.query_fvs[i].entries) {
            double c = count;
            for (size_t r = 0; r < dim; ++r) grads.w_query[r * F + idx] += c * g_qemb[i][r];
        }
    for (size_t j = 0; j < m; ++j)
        for (const auto& [idx, count] : batch.doc_fvs[j].entries) {
            double c = count;
            for (size_t r = 0; r < dim; ++r) grads.w_doc[r * F + idx] += c * g_demb[j][r];
        }
    return {loss, std::move(grads)};
}

std::vector<TrainBatch> assemble_batches(const QuerySet& queries,
                                         const std::vector<RankedList>& teacher_lists,
                                         const DocumentCollection& docs, const Config& cfg,
                                         uint64_t seed, std::vector<std::string>* warnings) {
    const int b = cfg.distill.batch_size;
    const int n = cfg.distill.docs_per_query;

    std::unordered_map<std::string, const RankedList*> by_query;
    for (const auto& list : teacher_lists) by_query[list.query_id] = &list;

    std::vector<const Query*> usable;
    for (const auto& q : queries.queries()) {
        auto it = by_query.find(q.id);
        if (it == by_query.end() || it->second->entries.empty()) {
            if (warnings)
                warnings->push_back("query '" + q.id + "' missing from teacher output; skipped");
            continue;
        }
        usable.push_back(&q);
    }

    Rng rng(seed ^ 0x62617463ULL);
    rng.shuffle(usable);

    size_t dropped = usable.size() % size_t(b);
    if (dropped && warnings)
        warnings->push_back(std::to_string(dropped) + " queries dropped from partial final batch");

    std::unordered_map<std::string, FeatureVector> doc_fv_cache;
    auto doc_fv = [&](const std::string& id) -> const FeatureVector& {
        auto it = doc_fv_cache.find(id);
        if (it != doc_fv_cache.end()) return it->second;
        const Document* d = docs.find(id);
        if (!d) throw FatalError("assemble_batches: document '" + id + "' not in collection");
        return doc_fv_cache.emplace(id, featurize_text(d->text, d->lang, cfg)).first->second;
    };

    std::vector<TrainBatch> batches;
    for (size_t start = 0; start + size_t(b) <= usable.size(); start += size_t(b)) {
        TrainBatch batch;
        batch.b = b;
        batch.n = n;
        for (int qi = 0; qi < b; ++qi) {
            const Query* q = usable[start + size_t(qi)];
            batch.query_ids.push_back(q->id);
            batch.query_fvs.push_back(featurize_text(q->text, q->lang, cfg));
            const RankedList& list = *by_query.at(q->id);
            // Top-n teacher-scored docs; short lists pad by cycling.
            for (int di = 0; di < n; ++di) {
                const RankedEntry& e = list.entries[size_t(di) % list.entries.size()];
                batch.doc_ids.push_back(e.doc_id);
                batch.doc_fvs.push_back(doc_fv(e.doc_id));
                batch.teacher_logits.push_back(e.score);
            }
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

void TrainingReport::write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw FatalError("cannot write training report: " + path);
    for (const auto& l : lines)
        out << l.epoch << '\t' << l.step << '\t' << l.loss << '\t' << l.grad_norm << '\t'
            << l.wall_ms << '\n';
}

TrainingReport train(EncoderParams& params, OptimizerState& opt,
                     const std::vector<TrainBatch>& batches, const Config& cfg) {
    if (batches.empty()) throw FatalError("train: empty batch stream");
    TrainingReport report;
    const int accum = cfg.distill.grad_accum_steps;
    int step = 0;
    for (int epoch = 0; epoch < cfg.distill.epochs; ++epoch) {
        double epoch_loss = 0.0;
        EncoderGrads acc;
        acc.resize_like(params);
        int pending = 0;
        auto flush = [&] {
            if (pending == 0) return;
            acc.scale(1.0 / double(pending));
            apply_gradients(params, opt, acc);
            acc.resize_like(params);
            pending = 0;
        };
        for (const auto& batch : batches) {
            auto t0 = std::chrono::steady_clock::now();
            auto [loss, grads] = loss_and_grads(params, batch, cfg);
            epoch_loss += loss;
            double norm2 = 0.0;
            for (double g : grads.w_query) norm2 += g * g;
            for (double g : grads.w_doc) norm2 += g * g;
            for (size_t i = 0; i < acc.w_query.size(); ++i) acc.w_query[i] += grads.w_query[i];
            for (size_t i = 0; i < acc.w_doc.size(); ++i) acc.w_doc[i] += grads.w_doc[i];
            ++pending;
            if (pending == accum) flush();
            auto t1 = std::chrono::steady_clock::now();
            ++step;
            report.lines.push_back(
                {epoch, step, loss, std::sqrt(norm2),
                 std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count()});
        }
        flush();  // leftover accumulation at epoch end
        report.epoch_mean_loss.push_back(epoch_loss / double(batches.size()));
    }
    return report;
}

}  // namespace umr
