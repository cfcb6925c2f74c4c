#include "umr/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "umr/common.hpp"

namespace umr {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

// Shortest round-trip decimal form so serialization is canonical.
std::string fmt_real(double v) {
    char buf[64];
    snprintf(buf, sizeof(buf), "%.17g", v);
    double back;
    for (int prec = 1; prec <= 16; ++prec) {
        char tight[64];
        snprintf(tight, sizeof(tight), "%.*g", prec, v);
        sscanf(tight, "%lf", &back);
        if (back == v) return tight;
    }
    return buf;
}

struct Entry {
    std::string section, key;
    std::function<std::string(const Config&)> get;
    std::function<void(Config&, const std::string&)> set;
};

int64_t parse_int(const std::string& sec, const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int64_t r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ValidationError("config: " + sec + "." + key + ": not an integer: '" + v + "'");
    }
}

double parse_real(const std::string& sec, const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ValidationError("config: " + sec + "." + key + ": not a number: '" + v + "'");
    }
}

bool parse_bool(const std::string& sec, const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ValidationError("config: " + sec + "." + key + ": not a boolean: '" + v + "'");
}

const std::vector<Entry>& registry() {
    static const std::vector<Entry> entries = [] {
        std::vector<Entry> r;
        // corpus
        r.push_back({"corpus", "feature_dim",
                     [](const Config& c) { return std::to_string(c.corpus.feature_dim); },
                     [](Config& c, const std::string& v) {
                         c.corpus.feature_dim = parse_int("corpus", "feature_dim", v);
                     }});
        r.push_back({"corpus", "hash_seed",
                     [](const Config& c) { return std::to_string(c.corpus.hash_seed); },
                     [](Config& c, const std::string& v) {
                         c.corpus.hash_seed = uint64_t(parse_int("corpus", "hash_seed", v));
                     }});
        r.push_back({"corpus", "max_seq_len",
                     [](const Config& c) { return std::to_string(c.corpus.max_seq_len); },
                     [](Config& c, const std::string& v) {
                         c.corpus.max_seq_len = int(parse_int("corpus", "max_seq_len", v));
                     }});
        r.push_back({"corpus", "languages",
                     [](const Config& c) { return c.corpus.languages; },
                     [](Config& c, const std::string& v) { c.corpus.languages = v; }});
        r.push_back({"corpus", "char_level_languages",
                     [](const Config& c) { return c.corpus.char_level_languages; },
                     [](Config& c, const std::string& v) { c.corpus.char_level_languages = v; }});
        r.push_back({"corpus", "ngram_orders",
                     [](const Config& c) { return c.corpus.ngram_orders; },
                     [](Config& c, const std::string& v) { c.corpus.ngram_orders = v; }});
        // encoder
        r.push_back({"encoder", "dim",
                     [](const Config& c) { return std::to_string(c.encoder.dim); },
                     [](Config& c, const std::string& v) {
                         c.encoder.dim = int(parse_int("encoder", "dim", v));
                     }});
        r.push_back({"encoder", "lr", [](const Config& c) { return fmt_real(c.encoder.lr); },
                     [](Config& c, const std::string& v) {
                         c.encoder.lr = parse_real("encoder", "lr", v);
                     }});
        r.push_back({"encoder", "beta1", [](const Config& c) { return fmt_real(c.encoder.beta1); },
                     [](Config& c, const std::string& v) {
                         c.encoder.beta1 = parse_real("encoder", "beta1", v);
                     }});
        r.push_back({"encoder", "beta2", [](const Config& c) { return fmt_real(c.encoder.beta2); },
                     [](Config& c, const std::string& v) {
                         c.encoder.beta2 = parse_real("encoder", "beta2", v);
                     }});
        r.push_back({"encoder", "eps", [](const Config& c) { return fmt_real(c.encoder.eps); },
                     [](Config& c, const std::string& v) {
                         c.encoder.eps = parse_real("encoder", "eps", v);
                     }});
        r.push_back({"encoder", "weight_decay",
                     [](const Config& c) { return fmt_real(c.encoder.weight_decay); },
                     [](Config& c, const std::string& v) {
                         c.encoder.weight_decay = parse_real("encoder", "weight_decay", v);
                     }});
        // index
        r.push_back({"index", "top_k",
                     [](const Config& c) { return std::to_string(c.index.top_k); },
                     [](Config& c, const std::string& v) {
                         c.index.top_k = int(parse_int("index", "top_k", v));
                     }});
        // teacher
        r.push_back({"teacher", "alpha", [](const Config& c) { return fmt_real(c.teacher.alpha); },
                     [](Config& c, const std::string& v) {
                         c.teacher.alpha = parse_real("teacher", "alpha", v);
                     }});
        r.push_back({"teacher", "smoothing",
                     [](const Config& c) { return fmt_real(c.teacher.smoothing); },
                     [](Config& c, const std::string& v) {
                         c.teacher.smoothing = parse_real("teacher", "smoothing", v);
                     }});
        r.push_back({"teacher", "em_iterations",
                     [](const Config& c) { return std::to_string(c.teacher.em_iterations); },
                     [](Config& c, const std::string& v) {
                         c.teacher.em_iterations = int(parse_int("teacher", "em_iterations", v));
                     }});
        r.push_back({"teacher", "instruction",
                     [](const Config& c) { return c.teacher.instruction; },
                     [](Config& c, const std::string& v) { c.teacher.instruction = v; }});
        // distill
        r.push_back({"distill", "batch_size",
                     [](const Config& c) { return std::to_string(c.distill.batch_size); },
                     [](Config& c, const std::string& v) {
                         c.distill.batch_size = int(parse_int("distill", "batch_size", v));
                     }});
        r.push_back({"distill", "docs_per_query",
                     [](const Config& c) { return std::to_string(c.distill.docs_per_query); },
                     [](Config& c, const std::string& v) {
                         c.distill.docs_per_query = int(parse_int("distill", "docs_per_query", v));
                     }});
        r.push_back({"distill", "temperature",
                     [](const Config& c) { return fmt_real(c.distill.temperature); },
                     [](Config& c, const std::string& v) {
                         c.distill.temperature = parse_real("distill", "temperature", v);
                     }});
        r.push_back({"distill", "epochs",
                     [](const Config& c) { return std::to_string(c.distill.epochs); },
                     [](Config& c, const std::string& v) {
                         c.distill.epochs = int(parse_int("distill", "epochs", v));
                     }});
        r.push_back({"distill", "grad_accum_steps",
                     [](const Config& c) { return std::to_string(c.distill.grad_accum_steps); },
                     [](Config& c, const std::string& v) {
                         c.distill.grad_accum_steps =
                             int(parse_int("distill", "grad_accum_steps", v));
                     }});
        r.push_back({"distill", "neg_logit",
                     [](const Config& c) { return fmt_real(c.distill.neg_logit); },
                     [](Config& c, const std::string& v) {
                         c.distill.neg_logit = parse_real("distill", "neg_logit", v);
                     }});
        r.push_back({"distill", "in_batch_negatives",
                     [](const Config& c) { return c.distill.in_batch_negatives ? "true" : "false"; },
                     [](Config& c, const std::string& v) {
                         c.distill.in_batch_negatives =
                             parse_bool("distill", "in_batch_negatives", v);
                     }});
        // pipeline
        r.push_back({"pipeline", "iterations",
                     [](const Config& c) { return std::to_string(c.pipeline.iterations); },
                     [](Config& c, const std::string& v) {
                         c.pipeline.iterations = int(parse_int("pipeline", "iterations", v));
                     }});
        r.push_back({"pipeline", "bootstrap",
                     [](const Config& c) { return c.pipeline.bootstrap; },
                     [](Config& c, const std::string& v) { c.pipeline.bootstrap = v; }});
        r.push_back({"pipeline", "reinit_each_iteration",
                     [](const Config& c) {
                         return c.pipeline.reinit_each_iteration ? "true" : "false";
                     },
                     [](Config& c, const std::string& v) {
                         c.pipeline.reinit_each_iteration =
                             parse_bool("pipeline", "reinit_each_iteration", v);
                     }});
        // eval
        r.push_back({"eval", "bm25_k1", [](const Config& c) { return fmt_real(c.eval.bm25_k1); },
                     [](Config& c, const std::string& v) {
                         c.eval.bm25_k1 = parse_real("eval", "bm25_k1", v);
                     }});
        r.push_back({"eval", "bm25_b", [](const Config& c) { return fmt_real(c.eval.bm25_b); },
                     [](Config& c, const std::string& v) {
                         c.eval.bm25_b = parse_real("eval", "bm25_b", v);
                     }});
        r.push_back({"eval", "target_language_only",
                     [](const Config& c) { return c.eval.target_language_only ? "true" : "false"; },
                     [](Config& c, const std::string& v) {
                         c.eval.target_language_only =
                             parse_bool("eval", "target_language_only", v);
                     }});
        // synth
        r.push_back({"synth", "num_languages",
                     [](const Config& c) { return std::to_string(c.synth.num_languages); },
                     [](Config& c, const std::string& v) {
                         c.synth.num_languages = int(parse_int("synth", "num_languages", v));
                     }});
        r.push_back({"synth", "topics",
                     [](const Config& c) { return std::to_string(c.synth.topics); },
                     [](Config& c, const std::string& v) {
                         c.synth.topics = int(parse_int("synth", "topics", v));
                     }});
        r.push_back({"synth", "docs_per_topic",
                     [](const Config& c) { return std::to_string(c.synth.docs_per_topic); },
                     [](Config& c, const std::string& v) {
                         c.synth.docs_per_topic = int(parse_int("synth", "docs_per_topic", v));
                     }});
        r.push_back({"synth", "queries_per_topic",
                     [](const Config& c) { return std::to_string(c.synth.queries_per_topic); },
                     [](Config& c, const std::string& v) {
                         c.synth.queries_per_topic =
                             int(parse_int("synth", "queries_per_topic", v));
                     }});
        r.push_back({"synth", "vocab_size",
                     [](const Config& c) { return std::to_string(c.synth.vocab_size); },
                     [](Config& c, const std::string& v) {
                         c.synth.vocab_size = int(parse_int("synth", "vocab_size", v));
                     }});
        r.push_back({"synth", "cross_lingual_leak",
                     [](const Config& c) { return fmt_real(c.synth.cross_lingual_leak); },
                     [](Config& c, const std::string& v) {
                         c.synth.cross_lingual_leak =
                             parse_real("synth", "cross_lingual_leak", v);
                     }});
        r.push_back({"synth", "noise_rate",
                     [](const Config& c) { return fmt_real(c.synth.noise_rate); },
                     [](Config& c, const std::string& v) {
                         c.synth.noise_rate = parse_real("synth", "noise_rate", v);
                     }});
        r.push_back({"synth", "code_mixed_rate",
                     [](const Config& c) { return fmt_real(c.synth.code_mixed_rate); },
                     [](Config& c, const std::string& v) {
                         c.synth.code_mixed_rate = parse_real("synth", "code_mixed_rate", v);
                     }});
        r.push_back({"synth", "doc_tokens",
                     [](const Config& c) { return std::to_string(c.synth.doc_tokens); },
                     [](Config& c, const std::string& v) {
                         c.synth.doc_tokens = int(parse_int("synth", "doc_tokens", v));
                     }});
        r.push_back({"synth", "query_tokens",
                     [](const Config& c) { return std::to_string(c.synth.query_tokens); },
                     [](Config& c, const std::string& v) {
                         c.synth.query_tokens = int(parse_int("synth", "query_tokens", v));
                     }});
        // run
        r.push_back({"run", "seed",
                     [](const Config& c) { return std::to_string(c.run.seed); },
                     [](Config& c, const std::string& v) {
                         c.run.seed = uint64_t(parse_int("run", "seed", v));
                     }});
        r.push_back({"run", "threads",
                     [](const Config& c) { return std::to_string(c.run.threads); },
                     [](Config& c, const std::string& v) {
                         c.run.threads = int(parse_int("run", "threads", v));
                     }});
        return r;
    }();
    return entries;
}

const Entry* find_entry(const std::string& section, const std::string& key) {
    for (const auto& e : registry())
        if (e.section == section && e.key == key) return &e;
    return nullptr;
}

bool is_power_of_two(int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<std::string> Config::language_list() const { return split_list(corpus.languages); }
std::vector<std::string> Config::char_level_language_list() const {
    return split_list(corpus.char_level_languages);
}
std::vector<int> Config::ngram_order_list() const {
    std::vector<int> out;
    for (const auto& s : split_list(corpus.ngram_orders))
        out.push_back(int(parse_int("corpus", "ngram_orders", s)));
    return out;
}

void Config::validate() const {
    if (!is_power_of_two(corpus.feature_dim))
        throw ValidationError("corpus.feature_dim must be a power of two");
    if (corpus.max_seq_len < 1) throw ValidationError("corpus.max_seq_len must be >= 1");
    if (language_list().empty()) throw ValidationError("corpus.languages must be non-empty");
    for (const auto& l : language_list())
        if (l.size() != 2)
            throw ValidationError("corpus.languages: '" + l + "' is not a 2-letter code");
    for (int n : ngram_order_list())
        if (n < 1) throw ValidationError("corpus.ngram_orders entries must be >= 1");
    if (encoder.dim < 1) throw ValidationError("encoder.dim must be >= 1");
    if (encoder.lr <= 0) throw ValidationError("encoder.lr must be > 0");
    if (encoder.beta1 < 0 || encoder.beta1 >= 1 || encoder.beta2 < 0 || encoder.beta2 >= 1)
        throw ValidationError("encoder.beta1/beta2 must be in [0,1)");
    if (encoder.eps <= 0) throw ValidationError("encoder.eps must be > 0");
    if (index.top_k < 1) throw ValidationError("index.top_k must be >= 1");
    if (teacher.alpha <= 0 || teacher.alpha >= 1)
        throw ValidationError("teacher.alpha must be in (0,1)");
    if (teacher.smoothing <= 0) throw ValidationError("teacher.smoothing must be > 0");
    if (teacher.em_iterations < 0)
        throw ValidationError("teacher.em_iterations must be >= 0");
    if (teacher.instruction.find("{L}") == std::string::npos)
        throw ValidationError("teacher.instruction must contain the {L} placeholder");
    if (distill.batch_size < 1) throw ValidationError("distill.batch_size must be >= 1");
    if (distill.docs_per_query < 1) throw ValidationError("distill.docs_per_query must be >= 1");
    if (distill.temperature <= 0) throw ValidationError("distill.temperature must be > 0");
    if (distill.epochs < 1) throw ValidationError("distill.epochs must be >= 1");
    if (distill.grad_accum_steps < 1)
        throw ValidationError("distill.grad_accum_steps must be >= 1");
    if (pipeline.iterations < 1) throw ValidationError("pipeline.iterations must be >= 1");
    if (pipeline.bootstrap != "lexical" && pipeline.bootstrap != "encoder")
        throw ValidationError("pipeline.bootstrap must be 'lexical' or 'encoder'");
    if (eval.bm25_k1 < 0 || eval.bm25_b < 0 || eval.bm25_b > 1)
        throw ValidationError("eval.bm25_k1 must be >= 0 and eval.bm25_b in [0,1]");
    if (synth.num_languages < 1 || synth.topics < 1 || synth.docs_per_topic < 1 ||
        synth.queries_per_topic < 1 || synth.vocab_size < 1 || synth.doc_tokens < 1 ||
        synth.query_tokens < 1)
        throw ValidationError("synth counts must be >= 1");
    if (synth.cross_lingual_leak < 0 || synth.cross_lingual_leak > 1 ||
        synth.noise_rate < 0 || synth.noise_rate > 1 || synth.code_mixed_rate < 0 ||
        synth.code_mixed_rate > 1)
        throw ValidationError("synth probabilities must be in [0,1]");
    if (synth.num_languages > int(language_list().size()))
        throw ValidationError("synth.num_languages exceeds corpus.languages size");
}

std::string Config::serialize() const {
    std::map<std::string, std::vector<const Entry*>> by_section;
    for (const auto& e : registry()) by_section[e.section].push_back(&e);
    std::string out;
    for (const auto& [section, entries] : by_section) {
        out += "[" + section + "]\n";
        for (const Entry* e : entries) out += e->key + " = " + e->get(*this) + "\n";
        out += "\n";
    }
    return out;
}

uint64_t Config::hash() const {
    Fingerprint fp;
    fp.update(serialize());
    return fp.digest();
}

Config parse_config(const std::string& text, const Config& base) {
    Config cfg = base;
    std::stringstream ss(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ValidationError("config line " + std::to_string(lineno) +
                                      ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        const Entry* e = find_entry(section, key);
        if (!e)
            throw ValidationError("config line " + std::to_string(lineno) + ": unknown key '" +
                                  section + "." + key + "'");
        e->set(cfg, value);
    }
    return cfg;
}

Config load_config_file(const std::string& path, const Config& base) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), base);
}

void apply_override(Config& cfg, const std::string& assignment) {
    size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ValidationError("override must be section.key=value: " + assignment);
    std::string path = trim(assignment.substr(0, eq));
    std::string value = trim(assignment.substr(eq + 1));
    size_t dot = path.find('.');
    if (dot == std::string::npos)
        throw ValidationError("override must be section.key=value: " + assignment);
    const Entry* e = find_entry(path.substr(0, dot), path.substr(dot + 1));
    if (!e) throw ValidationError("unknown config key: " + path);
    e->set(cfg, value);
}

}  // namespace umr
