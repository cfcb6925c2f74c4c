#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "umr/encoder.hpp"

namespace umr {

enum class RankSource { kRetriever, kTeacher };

struct RankedEntry {
    std::string doc_id;
    double score = 0.0;
};

struct RankedList {
    std::string query_id;
    std::vector<RankedEntry> entries;  // scores non-increasing, doc_ids distinct
    RankSource source = RankSource::kRetriever;
    // Set when k exceeded the collection size and all N documents were returned.
    bool exhausted = false;
};

// Flat document-embedding matrix, immutable after build. Rebuilt from scratch
// each pipeline iteration.
struct VectorIndex {
    std::vector<std::string> doc_ids;
    int dim = 0;
    std::vector<float> matrix;  // row-major, doc_ids.size() x dim
    uint64_t encoder_fingerprint = 0;

    size_t size() const { return doc_ids.size(); }
    const float* row(size_t i) const { return matrix.data() + i * size_t(dim); }
};

// Encode every document with the document-side encoder; row order follows
// collection order.
VectorIndex build_index(const DocumentCollection& docs, const EncoderParams& params,
                        const Config& cfg);

// Exact top-k by inner product. Ties broken by ascending doc_id.
RankedList search(const VectorIndex& index, const Embedding& query, int k,
                  const std::string& query_id = "");

std::vector<RankedList> batch_search(const VectorIndex& index,
                                     const std::vector<Embedding>& queries,
                                     const std::vector<std::string>& query_ids, int k,
                                     int threads = 0);

// On-disk form: "UMRIDX1" header, doc_id table, float matrix. Loading
// validates the encoder fingerprint when a checkpoint's value is supplied.
void save_index(const VectorIndex& index, const std::string& path);
VectorIndex load_index(const std::string& path, uint64_t expected_fingerprint = 0);

}  // namespace umr
