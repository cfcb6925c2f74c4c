#pragma once

#include <string>
#include <vector>

#include "umr/config.hpp"
#include "umr/corpus.hpp"

namespace umr {

struct SynthOutput {
    DocumentCollection docs;
    QuerySet queries;
    std::vector<std::pair<std::string, std::string>> gold_map;  // (query_id, doc_id)
};

// Seeded synthetic multilingual corpus with known gold relevance. Each
// language renders a shared latent vocabulary with a disjoint surface form,
// so cross-lingual relevance exists without shared tokens; code-mixed
// documents carry a second language's rendering and provide the only
// unsupervised alignment signal. Answers are language-neutral marker
// strings planted in gold documents.
SynthOutput generate_synthetic(const Config& cfg);

// Write the corpus-module file formats plus the two-column gold map.
void emit_synthetic(const SynthOutput& out, const std::string& dir);

}  // namespace umr
