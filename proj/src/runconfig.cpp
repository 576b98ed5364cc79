#include "hieradapt/runconfig.hpp"

#include <cstdlib>
#include <sstream>

#include "hieradapt/errors.hpp"
#include "hieradapt/serial.hpp"

namespace hieradapt::cli {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string unquote(const std::string& raw, int line_no) {
    if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"')
        return raw.substr(1, raw.size() - 2);
    if (!raw.empty() && raw.front() == '"')
        throw ConfigError("config line " + std::to_string(line_no) + ": unterminated string");
    return raw;
}

trainer::Sampling parse_sampling(const std::string& name) {
    if (name == "balanced") return trainer::Sampling::kBalanced;
    if (name == "round_robin") return trainer::Sampling::kRoundRobin;
    if (name == "proportional") return trainer::Sampling::kProportional;
    throw ConfigError("unknown sampling mode: " + name);
}

trainer::Variant parse_variant(const std::string& name) {
    if (name == "hierarchical") return trainer::Variant::kHierarchical;
    if (name == "multi_domain") return trainer::Variant::kMultiDomain;
    if (name == "single") return trainer::Variant::kSingle;
    throw ConfigError("unknown train variant: " + name);
}

trainer::TrainConfig parse_train_section(const KeyValueDoc& doc, const std::string& prefix,
                                         std::uint64_t seed) {
    trainer::TrainConfig cfg;
    cfg.seed = seed;
    cfg.total_steps = static_cast<int>(doc.get_int(prefix + ".steps", 0));
    cfg.lr = doc.get_double(prefix + ".lr", cfg.lr);
    cfg.lr_decay = doc.get_bool(prefix + ".lr_decay", cfg.lr_decay);
    cfg.accum_steps = static_cast<int>(doc.get_int(prefix + ".accum_steps", cfg.accum_steps));
    cfg.seq_len = static_cast<int>(doc.get_int(prefix + ".seq_len", cfg.seq_len));
    cfg.batch_size = static_cast<int>(doc.get_int(prefix + ".batch_size", cfg.batch_size));
    cfg.sampling = parse_sampling(doc.get_string(prefix + ".sampling", "balanced"));
    cfg.oversample_alpha =
        doc.get_double(prefix + ".alpha", cfg.oversample_alpha);
    cfg.variant = parse_variant(doc.get_string(prefix + ".variant", "hierarchical"));
    cfg.single_domain = doc.get_string(prefix + ".single_domain", "");
    return cfg;
}

}  // namespace

KeyValueDoc KeyValueDoc::parse(const std::string& text) {
    KeyValueDoc doc;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(line_no) + ": bad section");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError("config line " + std::to_string(line_no) + ": empty section");
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string raw = trim(line.substr(eq + 1));
        if (key.empty() || raw.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key or value");
        const std::string full = section.empty() ? key : section + "." + key;
        doc.values_[full] = unquote(raw, line_no);
    }
    return doc;
}

KeyValueDoc KeyValueDoc::parse_file(const std::filesystem::path& path) {
    return parse(io::read_file(path));
}

bool KeyValueDoc::has(const std::string& key) const { return values_.count(key) > 0; }

std::string KeyValueDoc::get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

long long KeyValueDoc::get_int(const std::string& key, long long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t used = 0;
        const long long v = std::stoll(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument(key);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' is not an integer: " + it->second);
    }
}

double KeyValueDoc::get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t used = 0;
        const double v = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument(key);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' is not a number: " + it->second);
    }
}

bool KeyValueDoc::get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true") return true;
    if (it->second == "false") return false;
    throw ConfigError("config key '" + key + "' is not a boolean: " + it->second);
}

std::map<std::string, std::string> KeyValueDoc::section(const std::string& name) const {
    std::map<std::string, std::string> out;
    const std::string prefix = name + ".";
    for (const auto& [key, value] : values_)
        if (key.rfind(prefix, 0) == 0) out[key.substr(prefix.size())] = value;
    return out;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    const KeyValueDoc doc = KeyValueDoc::parse_file(path);
    const std::filesystem::path base = path.parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };

    RunConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(doc.get_int("seed", 0));
    if (const char* env = std::getenv("HIERADAPT_SEED")) {
        try {
            cfg.seed = std::stoull(env);
        } catch (const std::exception&) {
            throw ConfigError("HIERADAPT_SEED is not an integer");
        }
    }
    cfg.outdir = resolve(doc.get_string("outdir", "out"));

    for (const auto& [name, p] : doc.section("corpora")) cfg.corpora[name] = resolve(p);

    cfg.lm.n_layers = static_cast<int>(doc.get_int("lm.n_layers", cfg.lm.n_layers));
    cfg.lm.d_model = static_cast<int>(doc.get_int("lm.d_model", cfg.lm.d_model));
    cfg.lm.n_heads = static_cast<int>(doc.get_int("lm.n_heads", cfg.lm.n_heads));
    cfg.lm.context_len = static_cast<int>(doc.get_int("lm.context_len", cfg.lm.context_len));
    cfg.lm.vocab_size = static_cast<int>(doc.get_int("lm.vocab_size", cfg.lm.vocab_size));

    cfg.pretrain = parse_train_section(doc, "pretrain", cfg.seed);
    cfg.train = parse_train_section(doc, "train", cfg.seed);
    cfg.bottleneck = static_cast<int>(doc.get_int("train.bottleneck", cfg.bottleneck));
    cfg.baseline_bottleneck =
        static_cast<int>(doc.get_int("train.baseline_bottleneck", cfg.baseline_bottleneck));

    cfg.manual_tree = doc.get_string("tree.manual", "");

    cfg.clustering.pca_dims =
        static_cast<int>(doc.get_int("clustering.pca_dims", cfg.clustering.pca_dims));
    cfg.clustering.components =
        static_cast<int>(doc.get_int("clustering.components", cfg.clustering.components));
    cfg.clustering.reg = doc.get_double("clustering.reg", cfg.clustering.reg);
    cfg.clustering.n_init =
        static_cast<int>(doc.get_int("clustering.n_init", cfg.clustering.n_init));
    cfg.clustering.max_iter =
        static_cast<int>(doc.get_int("clustering.max_iter", cfg.clustering.max_iter));
    cfg.clustering.tol = doc.get_double("clustering.tol", cfg.clustering.tol);
    cfg.clustering.sequences_per_domain = static_cast<int>(
        doc.get_int("clustering.sequences_per_domain", cfg.clustering.sequences_per_domain));
    cfg.clustering.embed_seq_len = static_cast<int>(
        doc.get_int("clustering.embed_seq_len", cfg.clustering.embed_seq_len));

    cfg.routing.n_probe = static_cast<int>(doc.get_int("routing.n_probe", cfg.routing.n_probe));
    cfg.routing.n_paths = static_cast<int>(doc.get_int("routing.n_paths", cfg.routing.n_paths));

    cfg.eval_seq_len = static_cast<int>(doc.get_int("eval.seq_len", 0));
    cfg.eval_max_tokens = doc.get_int("eval.max_tokens", 0);

    cfg.validate();
    return cfg;
}

void RunConfig::validate() const {
    lm.validate();
    routing.validate();
    if (corpora.empty()) throw ConfigError("config: [corpora] section is empty");
    for (const auto& [name, path] : corpora)
        if (!std::filesystem::exists(path))
            throw ConfigError("config: corpus file for domain '" + name +
                              "' does not exist: " + path.string());
    if (bottleneck < 1) throw ConfigError("config: train.bottleneck must be >= 1");
    if (clustering.pca_dims < 1 || clustering.components < 1)
        throw ConfigError("config: clustering dimensions must be positive");
}

}  // namespace hieradapt::cli
