#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hieradapt/clustering.hpp"
#include "hieradapt/errors.hpp"
#include "hieradapt/serial.hpp"

namespace hieradapt::clustering {

namespace {
constexpr char kEmbMagic[4] = {'H', 'E', 'M', 'B'};
constexpr char kGmmMagic[4] = {'H', 'G', 'M', 'M'};
constexpr std::uint32_t kVersion = 1;

void check_magic(std::istream& in, const char* magic, const std::string& what) {
    char buf[4];
    in.read(buf, 4);
    if (!in || std::string_view(buf, 4) != std::string_view(magic, 4))
        throw IoError("bad magic in " + what);
    if (io::read_u32(in) != kVersion) throw IoError("unsupported version in " + what);
}
}  // namespace

void save_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& emb) {
    emb.validate();
    std::ostringstream out(std::ios::binary);
    out.write(kEmbMagic, 4);
    io::write_u32(out, kVersion);
    io::write_u32(out, static_cast<std::uint32_t>(emb.rows.rows));
    io::write_u32(out, static_cast<std::uint32_t>(emb.rows.cols));
    for (double v : emb.rows.a) io::write_f64(out, v);
    // Label table: unique names then one index per row.
    std::map<std::string, std::uint32_t> ids;
    std::vector<std::string> unique;
    for (const auto& name : emb.row_domain)
        if (ids.emplace(name, static_cast<std::uint32_t>(unique.size())).second)
            unique.push_back(name);
    io::write_u32(out, static_cast<std::uint32_t>(unique.size()));
    for (const auto& name : unique) io::write_string(out, name);
    for (const auto& name : emb.row_domain) io::write_u32(out, ids.at(name));
    io::atomic_write_file(path, out.str());
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open embedding file: " + path.string());
    check_magic(in, kEmbMagic, "embedding file");
    const std::uint32_t count = io::read_u32(in);
    const std::uint32_t dim = io::read_u32(in);
    EmbeddingMatrix emb;
    emb.rows = linalg::Mat(count, dim);
    for (double& v : emb.rows.a) v = io::read_f64(in);
    const std::uint32_t n_unique = io::read_u32(in);
    std::vector<std::string> unique(n_unique);
    for (auto& name : unique) name = io::read_string(in);
    emb.row_domain.resize(count);
    for (auto& name : emb.row_domain) {
        const std::uint32_t id = io::read_u32(in);
        if (id >= n_unique) throw IoError("embedding file has a bad label index");
        name = unique[id];
    }
    emb.validate();
    return emb;
}

void save_pca(const std::filesystem::path& path, const PcaModel& model) {
    std::ostringstream out(std::ios::binary);
    out.write("HPCA", 4);
    io::write_u32(out, kVersion);
    io::write_u32(out, static_cast<std::uint32_t>(model.mean.size()));
    io::write_u32(out, static_cast<std::uint32_t>(model.components.cols));
    for (double v : model.mean) io::write_f64(out, v);
    for (double v : model.components.a) io::write_f64(out, v);
    for (double v : model.explained) io::write_f64(out, v);
    io::atomic_write_file(path, out.str());
}

PcaModel load_pca(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open pca file: " + path.string());
    check_magic(in, "HPCA", "pca file");
    const std::uint32_t m = io::read_u32(in);
    const std::uint32_t p = io::read_u32(in);
    PcaModel model;
    model.mean.resize(m);
    for (double& v : model.mean) v = io::read_f64(in);
    model.components = linalg::Mat(m, p);
    for (double& v : model.components.a) v = io::read_f64(in);
    model.explained.resize(p);
    for (double& v : model.explained) v = io::read_f64(in);
    return model;
}

void save_gmm(const std::filesystem::path& path, const GmmModel& gmm) {
    gmm.validate();
    std::ostringstream out(std::ios::binary);
    out.write(kGmmMagic, 4);
    io::write_u32(out, kVersion);
    io::write_u32(out, static_cast<std::uint32_t>(gmm.k()));
    io::write_u32(out, static_cast<std::uint32_t>(gmm.dim));
    for (const auto& g : gmm.components) {
        io::write_f64(out, g.weight);
        for (double v : g.mean) io::write_f64(out, v);
        for (double v : g.cov.a) io::write_f64(out, v);
    }
    io::write_u32(out, static_cast<std::uint32_t>(gmm.log_likelihood_trace.size()));
    for (double v : gmm.log_likelihood_trace) io::write_f64(out, v);
    io::atomic_write_file(path, out.str());
}

GmmModel load_gmm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open gmm file: " + path.string());
    check_magic(in, kGmmMagic, "gmm file");
    GmmModel gmm;
    const std::uint32_t k = io::read_u32(in);
    gmm.dim = io::read_u32(in);
    gmm.components.resize(k);
    for (auto& g : gmm.components) {
        g.weight = io::read_f64(in);
        g.mean.resize(gmm.dim);
        for (double& v : g.mean) v = io::read_f64(in);
        g.cov = linalg::Mat(gmm.dim, gmm.dim);
        for (double& v : g.cov.a) v = io::read_f64(in);
    }
    const std::uint32_t trace_len = io::read_u32(in);
    gmm.log_likelihood_trace.resize(trace_len);
    for (double& v : gmm.log_likelihood_trace) v = io::read_f64(in);
    gmm.validate();
    return gmm;
}

std::string linkage_to_json(std::span<const domtree::LinkageStep> steps) {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& step : steps) {
        nlohmann::json js;
        js["left"] = step.left;
        js["right"] = step.right;
        js["new_id"] = step.new_id;
        js["height"] = step.height;
        js["size"] = step.size;
        doc.push_back(js);
    }
    return doc.dump(2) + "\n";
}

std::vector<domtree::LinkageStep> linkage_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("linkage file is not valid JSON: ") + e.what());
    }
    std::vector<domtree::LinkageStep> steps;
    for (const auto& js : doc) {
        domtree::LinkageStep step;
        step.left = js.at("left").get<int>();
        step.right = js.at("right").get<int>();
        step.new_id = js.at("new_id").get<int>();
        step.height = js.at("height").get<double>();
        step.size = js.at("size").get<int>();
        steps.push_back(step);
    }
    return steps;
}

std::string confusion_to_csv(const AssignResult& assign) {
    std::ostringstream out;
    const std::size_t k = assign.confusion.empty() ? 0 : assign.confusion.front().size();
    out << "domain";
    for (std::size_t j = 0; j < k; ++j) out << ",c" << j;
    out << "\n";
    for (std::size_t r = 0; r < assign.domains.size(); ++r) {
        out << assign.domains[r];
        for (int count : assign.confusion[r]) out << ',' << count;
        out << "\n";
    }
    return out.str();
}

}  // namespace hieradapt::clustering
