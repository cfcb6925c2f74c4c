#include "umr/index.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "umr/common.hpp"

namespace umr {

namespace {

constexpr char kMagic[7] = {'U', 'M', 'R', 'I', 'D', 'X', '1'};

// Ordering used for top-k: higher score first, then ascending doc_id.
bool ranks_before(double sa, const std::string& ida, double sb, const std::string& idb) {
    if (sa != sb) return sa > sb;
    return ida < idb;
}

}  // namespace

VectorIndex build_index(const DocumentCollection& docs, const EncoderParams& params,
                        const Config& cfg) {
    if (docs.empty()) throw FatalError("build_index: empty collection");
    if (params.feature_dim != cfg.corpus.feature_dim)
        throw FatalError("build_index: encoder feature_dim " +
                         std::to_string(params.feature_dim) + " != corpus feature_dim " +
                         std::to_string(cfg.corpus.feature_dim));
    VectorIndex idx;
    idx.dim = params.dim;
    idx.doc_ids.reserve(docs.size());
    for (const auto& d : docs.docs()) idx.doc_ids.push_back(d.id);
    idx.matrix.assign(docs.size() * size_t(params.dim), 0.f);
    parallel_for(docs.size(), cfg.run.threads, [&](size_t i) {
        const Document& d = docs.at(i);
        FeatureVector fv = featurize_text(d.title.empty() ? d.text : d.title + " " + d.text,
                                          d.lang, cfg);
        Embedding e = encode(params, Side::kDocument, fv);
        std::memcpy(idx.matrix.data() + i * size_t(params.dim), e.data(),
                    size_t(params.dim) * sizeof(float));
    });
    idx.encoder_fingerprint = params_fingerprint(params);
    return idx;
}

RankedList search(const VectorIndex& index, const Embedding& query, int k,
                  const std::string& query_id) {
    if (k < 1) throw FatalError("search: k must be >= 1");
    if (query.size() != size_t(index.dim)) throw FatalError("search: embedding dim mismatch");
    const size_t n = index.size();

    RankedList out;
    out.query_id = query_id;
    out.source = RankSource::kRetriever;
    if (size_t(k) >= n) {
        out.exhausted = size_t(k) > n;
        out.entries.resize(n);
        for (size_t i = 0; i < n; ++i) {
            double s = 0.0;
            const float* row = index.row(i);
            for (int r = 0; r < index.dim; ++r) s += double(query[size_t(r)]) * double(row[r]);
            out.entries[i] = {index.doc_ids[i], s};
        }
        std::sort(out.entries.begin(), out.entries.end(), [](const auto& a, const auto& b) {
            return ranks_before(a.score, a.doc_id, b.score, b.doc_id);
        });
        return out;
    }

    // Max-first selection over a bounded heap of size k. The heap's top is
    // the current worst candidate.
    struct Cand {
        double score;
        size_t row;
    };
    auto worse = [&](const Cand& a, const Cand& b) {
        // "a ranks before b" => a is better; heap keeps worst on top.
        return ranks_before(a.score, index.doc_ids[a.row], b.score, index.doc_ids[b.row]);
    };
    std::vector<Cand> heap;
    heap.reserve(size_t(k) + 1);
    for (size_t i = 0; i < n; ++i) {
        double s = 0.0;
        const float* row = index.row(i);
        for (int r = 0; r < index.dim; ++r) s += double(query[size_t(r)]) * double(row[r]);
        if (heap.size() < size_t(k)) {
            heap.push_back({s, i});
            std::push_heap(heap.begin(), heap.end(), worse);
        } else if (ranks_before(s, index.doc_ids[i], heap.front().score,
                                index.doc_ids[heap.front().row])) {
            std::pop_heap(heap.begin(), heap.end(), worse);
            heap.back() = {s, i};
            std::push_heap(heap.begin(), heap.end(), worse);
        }
    }
    std::sort(heap.begin(), heap.end(), [&](const Cand& a, const Cand& b) {
        return ranks_before(a.score, index.doc_ids[a.row], b.score, index.doc_ids[b.row]);
    });
    out.entries.reserve(heap.size());
    for (const Cand& c : heap) out.entries.push_back({index.doc_ids[c.row], c.score});
    return out;
}

std::vector<RankedList> batch_search(const VectorIndex& index,
                                     const std::vector<Embedding>& queries,
                                     const std::vector<std::string>& query_ids, int k,
                                     int threads) {
    if (queries.size() != query_ids.size())
        throw FatalError("batch_search: queries/ids size mismatch");
    std::vector<RankedList> out(queries.size());
    parallel_for(queries.size(), threads,
                 [&](size_t i) { out[i] = search(index, queries[i], k, query_ids[i]); });
    return out;
}

void save_index(const VectorIndex& index, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FatalError("cannot write index: " + path);
    out.write(kMagic, sizeof(kMagic));
    uint64_t n = index.size(), d = uint64_t(index.dim);
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(reinterpret_cast<const char*>(&d), sizeof(d));
    out.write(reinterpret_cast<const char*>(&index.encoder_fingerprint),
              sizeof(index.encoder_fingerprint));
    for (const auto& id : index.doc_ids) {
        uint32_t len = uint32_t(id.size());
        out.write(reinterpret_cast<const char*>(&len), sizeof(len));
        out.write(id.data(), len);
    }
    out.write(reinterpret_cast<const char*>(index.matrix.data()),
              std::streamsize(index.matrix.size() * sizeof(float)));
    if (!out) throw FatalError("short write on index: " + path);
}

VectorIndex load_index(const std::string& path, uint64_t expected_fingerprint) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FatalError("cannot open index: " + path);
    char magic[sizeof(kMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw FatalError("bad index magic in " + path);
    uint64_t n = 0, d = 0;
    VectorIndex idx;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    in.read(reinterpret_cast<char*>(&d), sizeof(d));
    in.read(reinterpret_cast<char*>(&idx.encoder_fingerprint), sizeof(idx.encoder_fingerprint));
    idx.dim = int(d);
    idx.doc_ids.resize(n);
    for (auto& id : idx.doc_ids) {
        uint32_t len = 0;
        in.read(reinterpret_cast<char*>(&len), sizeof(len));
        id.resize(len);
        in.read(id.data(), len);
    }
    idx.matrix.resize(n * d);
    in.read(reinterpret_cast<char*>(idx.matrix.data()),
            std::streamsize(idx.matrix.size() * sizeof(float)));
    if (!in) throw FatalError("truncated index: " + path);
    if (expected_fingerprint != 0 && idx.encoder_fingerprint != expected_fingerprint)
        throw FatalError("index fingerprint mismatch: index was built with different encoder weights");
    return idx;
}

}  // namespace umr
