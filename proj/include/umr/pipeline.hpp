#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "umr/config.hpp"
#include "umr/corpus.hpp"
#include "umr/distill.hpp"
#include "umr/encoder.hpp"
#include "umr/evalkit.hpp"
#include "umr/teacher.hpp"

namespace umr {

struct PipelineState {
    std::string dir;
    int iteration = -1;  // -1 = nothing run yet; 0 = bootstrap done
    bool complete = false;
    uint64_t config_hash = 0;
};

// Iterative training driver. One run owns its state directory exclusively
// (lock file). Layout:
//   config.snapshot, state, manifest, teacher.bin
//   iter_0/           run.retriever, checkpoint        (bootstrap)
//   iter_t/ (t >= 1)  run.teacher, train.report, checkpoint, run.retriever
//
// Iteration t reranks the iteration t-1 retrieval pool, distills into the
// student, then refreshes the index with the new checkpoint and retrieves
// the pool for iteration t+1. Every artifact is hashed into the manifest;
// a failed iteration leaves the previous state untouched.
class Pipeline {
public:
    Pipeline(std::string state_dir, const DocumentCollection& docs, const QuerySet& queries,
             const Config& cfg);
    ~Pipeline();

    Pipeline(const Pipeline&) = delete;
    Pipeline& operator=(const Pipeline&) = delete;

    // Fits (or loads) the frozen teacher and writes the iteration-0
    // candidate pool from the configured bootstrap retriever.
    PipelineState bootstrap(bool force = false);

    // Runs the next iteration. Requires bootstrap.
    PipelineState run_iteration(bool force = false);

    // bootstrap + iterations until cfg.pipeline.iterations, resuming from
    // whatever the state directory already holds.
    PipelineState run_all(bool force = false);

    PipelineState state() const { return state_; }
    const LexicalTeacher& teacher();

    // Validates the manifest of an existing state directory and returns its
    // recorded state. Throws FatalError naming the first inconsistency.
    static PipelineState resume(const std::string& state_dir);

private:
    void write_state();
    void append_manifest(const std::string& role, const std::string& rel_path);
    void load_existing();
    std::string path(const std::string& rel) const;

    std::string dir_;
    const DocumentCollection& docs_;
    const QuerySet& queries_;
    Config cfg_;
    PipelineState state_;
    LexicalTeacher teacher_;
    bool teacher_ready_ = false;
    bool locked_ = false;
    std::vector<std::pair<std::string, std::string>> manifest_;  // (role, rel path)
};

uint64_t file_hash(const std::string& path);

}  // namespace umr
