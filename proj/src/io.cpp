#include "kefs/io.hpp"

#include "json.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace kefs {

namespace {

using nlohmann::json;

json parse_document(const std::string& path, const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) {
        throw InputError(path + ": malformed JSON");
    }
    return j;
}

const json& require_field(const json& j, const char* key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) {
        throw InputError(where + ": missing field '" + key + "'");
    }
    return *it;
}

double as_number(const json& j, const std::string& where) {
    if (!j.is_number()) {
        throw InputError(where + ": expected a number");
    }
    double v = j.get<double>();
    if (!std::isfinite(v)) {
        throw InputError(where + ": non-finite number");
    }
    return v;
}

int as_int(const json& j, const std::string& where) {
    if (!j.is_number_integer()) {
        throw InputError(where + ": expected an integer");
    }
    return j.get<int>();
}

Vector parse_vector(const json& j, const std::string& where) {
    if (!j.is_array()) {
        throw InputError(where + ": expected an array");
    }
    Vector v(static_cast<Eigen::Index>(j.size()));
    Eigen::Index i = 0;
    for (const auto& x : j) {
        v(i++) = as_number(x, where);
    }
    return v;
}

Matrix parse_matrix(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) {
        throw InputError(where + ": expected a non-empty array of rows");
    }
    const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
    Eigen::Index cols = -1;
    Matrix m;
    Eigen::Index r = 0;
    for (const auto& row : j) {
        Vector v = parse_vector(row, where);
        if (cols < 0) {
            cols = v.size();
            m.resize(rows, cols);
        } else if (v.size() != cols) {
            throw InputError(where + ": ragged rows");
        }
        m.row(r++) = v.transpose();
    }
    return m;
}

json vector_to_json(const Vector& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        a.push_back(v(i));
    }
    return a;
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            row.push_back(m(r, c));
        }
        rows.push_back(row);
    }
    return rows;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        lines.push_back(line);
    }
    return lines;
}

// ---- config merging -------------------------------------------------------

void config_number(const json& j, const char* key, double& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_number()) {
        throw ConfigError(std::string("config field '") + key + "' must be a number");
    }
    out = it->get<double>();
}

void config_int(const json& j, const char* key, int& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_number_integer()) {
        throw ConfigError(std::string("config field '") + key + "' must be an integer");
    }
    out = it->get<int>();
}

void config_index(const json& j, const char* key, Eigen::Index& out) {
    int v = static_cast<int>(out);
    config_int(j, key, v);
    out = v;
}

void config_bool(const json& j, const char* key, bool& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_boolean()) {
        throw ConfigError(std::string("config field '") + key + "' must be a boolean");
    }
    out = it->get<bool>();
}

void config_string(const json& j, const char* key, std::string& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_string()) {
        throw ConfigError(std::string("config field '") + key + "' must be a string");
    }
    out = it->get<std::string>();
}

// ---- checkpoint binary layout ---------------------------------------------

constexpr char kBinaryMagic[8] = {'K', 'E', 'F', 'S', 'B', 'I', 'N', '1'};

void write_bytes(std::string& out, const void* p, std::size_t n) {
    out.append(static_cast<const char*>(p), n);
}

template <typename T>
void write_pod(std::string& out, T v) {
    write_bytes(out, &v, sizeof(T));
}

struct ByteReader {
    const std::string& buf;
    std::size_t pos = 0;
    std::string path;

    void read(void* p, std::size_t n, const char* what) {
        if (pos + n > buf.size()) {
            throw IoError(path + ": checkpoint truncated while reading " + what);
        }
        std::memcpy(p, buf.data() + pos, n);
        pos += n;
    }

    template <typename T>
    T pod(const char* what) {
        T v{};
        read(&v, sizeof(T), what);
        return v;
    }
};

}  // namespace

// ---- file helpers ---------------------------------------------------------

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) {
        throw IoError("read failed for " + path);
    }
    return buf.str();
}

void ensure_directory(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) {
        throw IoError("cannot create directory " + path + ": " + ec.message());
    }
}

void atomic_write(const std::string& path, const std::string& content) {
    const std::filesystem::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(target.parent_path(), ec);
        if (ec) {
            throw IoError("cannot create directory " + target.parent_path().string());
        }
    }
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open " + tmp + " for writing");
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            throw IoError("write failed for " + tmp);
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError("cannot move " + tmp + " to " + path + ": " + ec.message());
    }
}

void log_event(const std::string& name,
               const std::vector<std::pair<std::string, std::string>>& fields) {
    std::ostringstream line;
    line << "{\"event\":" << json(name).dump();
    for (const auto& [k, v] : fields) {
        line << ',' << json(k).dump() << ':' << json(v).dump();
    }
    line << '}';
    std::cerr << line.str() << '\n';
}

// ---- config ---------------------------------------------------------------

PipelineConfig default_config() {
    PipelineConfig config;
    config.train.dims.d_prime = 32;
    config.train.dims.layers = 6;
    return config;
}

void apply_desk_profile(PipelineConfig& config) {
    config.train.dims.d_prime = 16;
    config.train.dims.layers = 2;
    config.train.dims.z = 32;
    config.train.dims.e = 32;
    config.train.dims.d_know = 32;
    // a single noise column keeps the per-class conditions stable between
    // batches while still making the generator stochastic
    config.train.dims.noise_dim = 1;
    // half-width features with the class spacing rescaled so the per-axis
    // second moment still matches the unit sampling prior
    config.bench.feature_dim = 32;
    config.bench.radius = 4.0;
    config.schedule.T = 4;
    // four steps must still reach near-pure noise, so the ramp is far steeper
    // than the long-schedule one; the narrow gamma range also keeps the
    // per-step denoising targets at similar scales, which one shared denoiser
    // fits far better than a wide range
    config.schedule.gamma_1 = 0.2;
    config.schedule.gamma_T = 0.75;
    config.train.lr = 1e-3;
    config.train.epochs = 600;
    config.train.batch_size = 16;
    config.train.synth_per_class = 240;
    // single critic pass per batch and a reconstruction weight well above the
    // adversarial term; at this scale the diffusion loss does the heavy
    // lifting, and the conditioning rows it depends on come out of the same
    // decoder the adversarial term pushes on
    config.train.n_critic = 1;
    config.train.lambda1 = 6.0;
    // one denoiser for all timesteps; separate per-step tables would each see
    // only a handful of updates at this scale
    config.train.rfdm.share_timestep_params = true;
    config.train.rfdm.variance = ReverseVariance::kPosterior;
}

PipelineConfig load_config(const std::string& path, const PipelineConfig& base) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const IoError& e) {
        throw ConfigError(e.what());
    }
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) {
        throw ConfigError(path + ": malformed JSON");
    }
    if (!j.is_object()) {
        throw ConfigError(path + ": config root must be an object");
    }

    PipelineConfig config = base;
    {
        auto it = j.find("seed");
        if (it != j.end()) {
            if (!it->is_number_integer()) {
                throw ConfigError("config field 'seed' must be an integer");
            }
            config.seed = it->get<std::uint64_t>();
        }
    }
    config_number(j, "tau", config.tau);
    config_bool(j, "binary_checkpoint", config.binary_checkpoint);

    if (auto it = j.find("dims"); it != j.end()) {
        const json& d = *it;
        KefsDims& dims = config.train.dims;
        config_index(d, "word_dim", dims.d_w);
        config_index(d, "attr_dim", dims.d_a);
        config_index(d, "gcn_dim", dims.d_prime);
        config_index(d, "embed_dim", dims.z);
        config_index(d, "knowledge_dim", dims.d_know);
        config_index(d, "content_dim", dims.e);
        config_index(d, "feature_dim", dims.a);
        config_index(d, "noise_dim", dims.noise_dim);
        config_index(d, "time_dim", dims.temb_dim);
        config_int(d, "heads", dims.heads);
        config_int(d, "layers", dims.layers);
    }
    if (auto it = j.find("schedule"); it != j.end()) {
        const json& s = *it;
        config_int(s, "T", config.schedule.T);
        config_number(s, "gamma_1", config.schedule.gamma_1);
        config_number(s, "gamma_T", config.schedule.gamma_T);
    }
    if (auto it = j.find("train"); it != j.end()) {
        const json& t = *it;
        TrainConfig& tc = config.train;
        config_number(t, "lr", tc.lr);
        config_int(t, "epochs", tc.epochs);
        config_int(t, "batch_size", tc.batch_size);
        config_int(t, "n_critic", tc.n_critic);
        config_number(t, "gp_weight", tc.gp_weight);
        config_number(t, "lambda1", tc.lambda1);
        config_number(t, "lambda2", tc.lambda2);
        config_number(t, "alpha", tc.alpha);
        config_int(t, "synth_per_class", tc.synth_per_class);
        config_bool(t, "share_timestep_params", tc.rfdm.share_timestep_params);
        config_bool(t, "ablate_graph_conditioning", tc.ablate_graph_conditioning);
        bool posterior = tc.rfdm.variance == ReverseVariance::kPosterior;
        config_bool(t, "posterior_variance", posterior);
        tc.rfdm.variance = posterior ? ReverseVariance::kPosterior : ReverseVariance::kFixedGamma;
    }
    if (auto it = j.find("classifier"); it != j.end()) {
        const json& c = *it;
        config_number(c, "lr", config.classifier.lr);
        config_int(c, "max_epochs", config.classifier.max_epochs);
        config_number(c, "tol", config.classifier.tol);
    }
    if (auto it = j.find("eval"); it != j.end()) {
        const json& e = *it;
        config_number(e, "iou_thresh", config.eval.iou_thresh);
        config_int(e, "recall_k", config.eval.recall_k);
    }
    if (auto it = j.find("bench"); it != j.end()) {
        const json& b = *it;
        BenchConfig& bc = config.bench;
        config_int(b, "classes", bc.classes);
        config_int(b, "unseen", bc.unseen);
        config_index(b, "feature_dim", bc.feature_dim);
        config_index(b, "word_dim", bc.word_dim);
        config_index(b, "attr_dim", bc.attr_dim);
        config_int(b, "rank", bc.rank);
        config_int(b, "train_per_class", bc.train_per_class);
        config_int(b, "test_per_class", bc.test_per_class);
        config_number(b, "radius", bc.radius);
        config_number(b, "cluster_std", bc.cluster_std);
        config_number(b, "semantic_noise", bc.semantic_noise);
    }
    if (auto it = j.find("paths"); it != j.end()) {
        const json& p = *it;
        PathConfig& pc = config.paths;
        config_string(p, "semantics", pc.semantics);
        config_string(p, "features", pc.features);
        config_string(p, "test_features", pc.test_features);
        config_string(p, "taxonomy", pc.taxonomy);
        config_string(p, "ingredients", pc.ingredients);
        config_string(p, "counts", pc.counts);
        config_string(p, "graphs", pc.graphs);
        config_string(p, "checkpoint", pc.checkpoint);
        config_string(p, "classifier", pc.classifier);
        config_string(p, "synthesized", pc.synthesized);
        config_string(p, "detections", pc.detections);
        config_string(p, "ground_truth", pc.ground_truth);
    }
    return config;
}

// ---- semantics ------------------------------------------------------------

SemanticTable load_semantics(const std::string& path) {
    json j = parse_document(path, read_file(path));
    const json& classes = require_field(j, "classes", path);
    if (!classes.is_array()) {
        throw InputError(path + ": 'classes' must be an array");
    }
    SemanticTable table;
    for (const auto& c : classes) {
        ClassEntry entry;
        entry.id = as_int(require_field(c, "id", path), path + ": class id");
        entry.name = require_field(c, "name", path).get<std::string>();
        const std::string split = require_field(c, "split", path).get<std::string>();
        if (split == "seen") {
            entry.seen = true;
        } else if (split == "unseen") {
            entry.seen = false;
        } else {
            throw InputError(path + ": split must be 'seen' or 'unseen', got '" + split + "'");
        }
        entry.word_vec = parse_vector(require_field(c, "word_vec", path), path + ": word_vec");
        entry.attr_vec = parse_vector(require_field(c, "attr_vec", path), path + ": attr_vec");
        table.classes.push_back(std::move(entry));
    }
    table.validate_and_sort();
    return table;
}

void save_semantics(const std::string& path, const SemanticTable& table) {
    json classes = json::array();
    for (const ClassEntry& c : table.classes) {
        json e;
        e["id"] = c.id;
        e["name"] = c.name;
        e["split"] = c.seen ? "seen" : "unseen";
        e["word_vec"] = vector_to_json(c.word_vec);
        e["attr_vec"] = vector_to_json(c.attr_vec);
        classes.push_back(e);
    }
    json j;
    j["classes"] = classes;
    atomic_write(path, j.dump(2) + "\n");
}

// ---- region features (line-delimited) -------------------------------------

RegionFeatureSet load_features(const std::string& path) {
    RegionFeatureSet set;
    Eigen::Index dim = -1;
    std::size_t line_no = 0;
    for (const std::string& line : split_lines(read_file(path))) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        json j = parse_document(where, line);
        RegionRecord rec;
        rec.class_id = as_int(require_field(j, "class_id", where), where + ": class_id");
        rec.feature = parse_vector(require_field(j, "feature", where), where + ": feature");
        if (auto it = j.find("synthesized"); it != j.end()) {
            if (!it->is_boolean()) {
                throw InputError(where + ": 'synthesized' must be a boolean");
            }
            rec.synthesized = it->get<bool>();
        }
        if (dim < 0) {
            dim = rec.feature.size();
        } else if (rec.feature.size() != dim) {
            throw InputError(where + ": feature length " + std::to_string(rec.feature.size()) +
                             " does not match earlier length " + std::to_string(dim));
        }
        set.records.push_back(std::move(rec));
    }
    return set;
}

void save_features(const std::string& path, const RegionFeatureSet& set) {
    std::string out;
    for (const RegionRecord& rec : set.records) {
        json j;
        j["class_id"] = rec.class_id;
        j["feature"] = vector_to_json(rec.feature);
        if (rec.synthesized) {
            j["synthesized"] = true;
        }
        out += j.dump();
        out += '\n';
    }
    atomic_write(path, out);
}

// ---- taxonomy -------------------------------------------------------------

ClassTaxonomy load_taxonomy(const std::string& path) {
    json j = parse_document(path, read_file(path));
    ClassTaxonomy taxonomy;
    taxonomy.levels = as_int(require_field(j, "levels", path), path + ": levels");
    const json& nodes = require_field(j, "nodes", path);
    if (!nodes.is_array()) {
        throw InputError(path + ": 'nodes' must be an array");
    }
    for (const auto& n : nodes) {
        TaxonomyNode node;
        node.id = as_int(require_field(n, "id", path), path + ": node id");
        const json& parent = require_field(n, "parent", path);
        node.parent = parent.is_null() ? -1 : as_int(parent, path + ": node parent");
        node.level = as_int(require_field(n, "level", path), path + ": node level");
        taxonomy.nodes.push_back(node);
    }
    taxonomy.validate();
    return taxonomy;
}

void save_taxonomy(const std::string& path, const ClassTaxonomy& taxonomy) {
    json nodes = json::array();
    for (const TaxonomyNode& n : taxonomy.nodes) {
        json e;
        e["id"] = n.id;
        e["parent"] = n.parent;
        e["level"] = n.level;
        nodes.push_back(e);
    }
    json j;
    j["levels"] = taxonomy.levels;
    j["nodes"] = nodes;
    atomic_write(path, j.dump(2) + "\n");
}

// ---- ingredients ----------------------------------------------------------

IngredientTable load_ingredients(const std::string& path) {
    json j = parse_document(path, read_file(path));
    IngredientTable table;
    for (const auto& g : require_field(j, "groups", path)) {
        if (!g.is_string()) {
            throw InputError(path + ": group names must be strings");
        }
        table.groups.push_back(g.get<std::string>());
    }
    const json& classes = require_field(j, "classes", path);
    if (!classes.is_object()) {
        throw InputError(path + ": 'classes' must map class ids to ingredient lists");
    }
    for (const auto& [key, list] : classes.items()) {
        int class_id = 0;
        try {
            std::size_t used = 0;
            class_id = std::stoi(key, &used);
            if (used != key.size()) throw std::invalid_argument(key);
        } catch (const std::exception&) {
            throw InputError(path + ": class key '" + key + "' is not an integer");
        }
        std::vector<IngredientEntry> entries;
        if (!list.is_array()) {
            throw InputError(path + ": ingredient list for class " + key + " must be an array");
        }
        for (const auto& e : list) {
            IngredientEntry entry;
            entry.ingredient = require_field(e, "ingredient", path).get<std::string>();
            entry.group = require_field(e, "group", path).get<std::string>();
            entries.push_back(std::move(entry));
        }
        table.classes.emplace_back(class_id, std::move(entries));
    }
    std::sort(table.classes.begin(), table.classes.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return table;
}

void save_ingredients(const std::string& path, const IngredientTable& table) {
    json groups = json::array();
    for (const std::string& g : table.groups) {
        groups.push_back(g);
    }
    json classes = json::object();
    for (const auto& [class_id, entries] : table.classes) {
        json list = json::array();
        for (const IngredientEntry& e : entries) {
            json item;
            item["ingredient"] = e.ingredient;
            item["group"] = e.group;
            list.push_back(item);
        }
        classes[std::to_string(class_id)] = list;
    }
    json j;
    j["groups"] = groups;
    j["classes"] = classes;
    atomic_write(path, j.dump(2) + "\n");
}

// ---- co-occurrence counts -------------------------------------------------

CooccurrenceCounts load_counts(const std::string& path) {
    json j = parse_document(path, read_file(path));
    CooccurrenceCounts counts;
    counts.O = parse_matrix(require_field(j, "O", path), path + ": O");
    counts.T = parse_vector(require_field(j, "T", path), path + ": T");
    if (counts.O.rows() != counts.O.cols()) {
        throw InputError(path + ": O must be square");
    }
    if (counts.T.size() != counts.O.rows()) {
        throw InputError(path + ": T length must match O");
    }
    return counts;
}

void save_counts(const std::string& path, const CooccurrenceCounts& counts) {
    json j;
    j["O"] = matrix_to_json(counts.O);
    j["T"] = vector_to_json(counts.T);
    atomic_write(path, j.dump(2) + "\n");
}

// ---- graph set ------------------------------------------------------------

MultiSourceGraphSet load_graphs(const std::string& path) {
    json j = parse_document(path, read_file(path));
    MultiSourceGraphSet graphs;
    graphs.n = as_int(require_field(j, "n", path), path + ": n");
    graphs.tau = as_number(require_field(j, "tau", path), path + ": tau");
    auto grab = [&](const char* key) {
        Matrix m = parse_matrix(require_field(j, key, path), path + ": " + key);
        if (m.rows() != graphs.n || m.cols() != graphs.n) {
            throw InputError(path + ": " + key + " must be " + std::to_string(graphs.n) + "x" +
                             std::to_string(graphs.n));
        }
        return m;
    };
    graphs.A1 = grab("A1");
    graphs.A2 = grab("A2");
    graphs.A3 = grab("A3");
    graphs.A1_hat = grab("A1_hat");
    graphs.A2_hat = grab("A2_hat");
    graphs.A3_hat = grab("A3_hat");
    return graphs;
}

void save_graphs(const std::string& path, const MultiSourceGraphSet& graphs) {
    json j;
    j["n"] = graphs.n;
    j["tau"] = graphs.tau;
    j["A1"] = matrix_to_json(graphs.A1);
    j["A2"] = matrix_to_json(graphs.A2);
    j["A3"] = matrix_to_json(graphs.A3);
    j["A1_hat"] = matrix_to_json(graphs.A1_hat);
    j["A2_hat"] = matrix_to_json(graphs.A2_hat);
    j["A3_hat"] = matrix_to_json(graphs.A3_hat);
    atomic_write(path, j.dump(2) + "\n");
}

// ---- detections and ground truth ------------------------------------------

namespace {

Box parse_box(const json& j, const std::string& where) {
    Vector v = parse_vector(j, where + ": box");
    if (v.size() != 4) {
        throw InputError(where + ": box must have 4 coordinates");
    }
    Box box{v(0), v(1), v(2), v(3)};
    try {
        validate_box(box);
    } catch (const InputError& e) {
        throw InputError(where + ": " + e.what());
    }
    return box;
}

}  // namespace

std::vector<Detection> load_detections(const std::string& path) {
    std::vector<Detection> dets;
    std::size_t line_no = 0;
    for (const std::string& line : split_lines(read_file(path))) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        json j = parse_document(where, line);
        Detection d;
        d.image_id = as_int(require_field(j, "image_id", where), where + ": image_id");
        d.class_id = as_int(require_field(j, "class_id", where), where + ": class_id");
        d.score = as_number(require_field(j, "score", where), where + ": score");
        d.box = parse_box(require_field(j, "box", where), where);
        dets.push_back(d);
    }
    return dets;
}

std::vector<GroundTruth> load_ground_truth(const std::string& path) {
    std::vector<GroundTruth> gts;
    std::size_t line_no = 0;
    for (const std::string& line : split_lines(read_file(path))) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        json j = parse_document(where, line);
        GroundTruth g;
        g.image_id = as_int(require_field(j, "image_id", where), where + ": image_id");
        g.class_id = as_int(require_field(j, "class_id", where), where + ": class_id");
        g.box = parse_box(require_field(j, "box", where), where);
        gts.push_back(g);
    }
    return gts;
}

// ---- checkpoints ----------------------------------------------------------

namespace {

void save_checkpoint_json(const std::string& path, const ParameterSet& params,
                          const DiffusionSchedule& sched) {
    json p = json::object();
    for (const auto& [name, value] : params.entries()) {
        json e;
        e["shape"] = json::array({value.rows(), value.cols()});
        json data = json::array();
        for (Eigen::Index r = 0; r < value.rows(); ++r) {
            for (Eigen::Index c = 0; c < value.cols(); ++c) {
                data.push_back(value(r, c));
            }
        }
        e["data"] = data;
        p[name] = e;
    }
    json j;
    j["format"] = "kefs-checkpoint-v1";
    j["schedule"] = {{"T", sched.T},
                     {"gamma", vector_to_json(sched.gamma)},
                     {"beta_bar", vector_to_json(sched.beta_bar)}};
    j["params"] = p;
    atomic_write(path, j.dump() + "\n");
}

void save_checkpoint_binary(const std::string& path, const ParameterSet& params,
                            const DiffusionSchedule& sched) {
    std::string out;
    write_bytes(out, kBinaryMagic, sizeof(kBinaryMagic));
    write_pod<std::uint64_t>(out, params.entries().size());
    for (const auto& [name, value] : params.entries()) {
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        write_bytes(out, name.data(), name.size());
        write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(value.rows()));
        write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(value.cols()));
        for (Eigen::Index r = 0; r < value.rows(); ++r) {
            for (Eigen::Index c = 0; c < value.cols(); ++c) {
                write_pod<double>(out, value(r, c));
            }
        }
    }
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(sched.T));
    for (int t = 0; t < sched.T; ++t) {
        write_pod<double>(out, sched.gamma(t));
    }
    for (int t = 0; t < sched.T; ++t) {
        write_pod<double>(out, sched.beta_bar(t));
    }
    atomic_write(path, out);
}

DiffusionSchedule schedule_from_arrays(const std::string& path, int T, Vector gamma,
                                       Vector beta_bar) {
    if (T < 1 || gamma.size() != T || beta_bar.size() != T) {
        throw IoError(path + ": checkpoint schedule arrays do not match T");
    }
    DiffusionSchedule sched;
    sched.T = T;
    sched.gamma = std::move(gamma);
    sched.beta_bar = std::move(beta_bar);
    sched.beta = Vector::Ones(T) - sched.gamma;
    for (int t = 0; t < T; ++t) {
        if (!(sched.gamma(t) > 0.0 && sched.gamma(t) < 1.0)) {
            throw IoError(path + ": checkpoint gamma out of range at step " + std::to_string(t + 1));
        }
    }
    return sched;
}

void load_checkpoint_json(const std::string& path, const std::string& text, ParameterSet& params,
                          DiffusionSchedule& sched) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) {
        throw IoError(path + ": checkpoint is not valid JSON");
    }
    const json* sj = nullptr;
    const json* pj = nullptr;
    {
        auto sit = j.find("schedule");
        auto pit = j.find("params");
        if (sit == j.end() || pit == j.end()) {
            throw IoError(path + ": checkpoint missing 'schedule' or 'params'");
        }
        sj = &*sit;
        pj = &*pit;
    }
    if (!sj->contains("T") || !sj->contains("gamma") || !sj->contains("beta_bar")) {
        throw IoError(path + ": checkpoint schedule incomplete");
    }
    sched = schedule_from_arrays(path, (*sj)["T"].get<int>(),
                                 parse_vector((*sj)["gamma"], path + ": gamma"),
                                 parse_vector((*sj)["beta_bar"], path + ": beta_bar"));
    params = ParameterSet();
    for (const auto& [name, entry] : pj->items()) {
        if (!entry.contains("shape") || !entry.contains("data")) {
            throw IoError(path + ": parameter '" + name + "' missing shape or data");
        }
        const json& shape = entry["shape"];
        if (!shape.is_array() || shape.size() != 2) {
            throw IoError(path + ": parameter '" + name + "' shape must be [rows, cols]");
        }
        const auto rows = shape[0].get<Eigen::Index>();
        const auto cols = shape[1].get<Eigen::Index>();
        const json& data = entry["data"];
        if (rows < 0 || cols < 0 ||
            !data.is_array() || static_cast<Eigen::Index>(data.size()) != rows * cols) {
            throw IoError(path + ": parameter '" + name + "' data length does not match shape");
        }
        Matrix m(rows, cols);
        Eigen::Index i = 0;
        for (const auto& x : data) {
            if (!x.is_number()) {
                throw IoError(path + ": parameter '" + name + "' has a non-numeric entry");
            }
            m(i / cols, i % cols) = x.get<double>();
            ++i;
        }
        params.create(name, rows, cols) = m;
    }
}

void load_checkpoint_binary(const std::string& path, const std::string& text, ParameterSet& params,
                            DiffusionSchedule& sched) {
    ByteReader in{text, sizeof(kBinaryMagic), path};
    params = ParameterSet();
    const auto count = in.pod<std::uint64_t>("entry count");
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name_len = in.pod<std::uint32_t>("name length");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len, "name");
        const auto rows = static_cast<Eigen::Index>(in.pod<std::uint64_t>("rows"));
        const auto cols = static_cast<Eigen::Index>(in.pod<std::uint64_t>("cols"));
        if (rows < 0 || cols < 0 || rows * cols > (1LL << 32)) {
            throw IoError(path + ": implausible shape for parameter '" + name + "'");
        }
        Matrix& m = params.create(name, rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index c = 0; c < cols; ++c) {
                m(r, c) = in.pod<double>("matrix data");
            }
        }
    }
    const int T = static_cast<int>(in.pod<std::uint32_t>("schedule length"));
    if (T < 1 || T > (1 << 20)) {
        throw IoError(path + ": implausible schedule length");
    }
    Vector gamma(T), beta_bar(T);
    for (int t = 0; t < T; ++t) gamma(t) = in.pod<double>("gamma");
    for (int t = 0; t < T; ++t) beta_bar(t) = in.pod<double>("beta_bar");
    sched = schedule_from_arrays(path, T, std::move(gamma), std::move(beta_bar));
}

}  // namespace

void save_checkpoint(const std::string& path, const ParameterSet& params,
                     const DiffusionSchedule& sched, bool binary) {
    if (binary) {
        save_checkpoint_binary(path, params, sched);
    } else {
        save_checkpoint_json(path, params, sched);
    }
}

void load_checkpoint(const std::string& path, ParameterSet& params, DiffusionSchedule& sched) {
    const std::string text = read_file(path);
    if (text.size() >= sizeof(kBinaryMagic) &&
        std::memcmp(text.data(), kBinaryMagic, sizeof(kBinaryMagic)) == 0) {
        load_checkpoint_binary(path, text, params, sched);
    } else {
        load_checkpoint_json(path, text, params, sched);
    }
}

// ---- classifier -----------------------------------------------------------

void save_classifier(const std::string& path, const LinearClassifier& clf) {
    json ids = json::array();
    for (int id : clf.class_ids) {
        ids.push_back(id);
    }
    json j;
    j["class_ids"] = ids;
    j["W"] = matrix_to_json(clf.W);
    j["b"] = matrix_to_json(clf.b);
    atomic_write(path, j.dump() + "\n");
}

LinearClassifier load_classifier(const std::string& path) {
    json j = parse_document(path, read_file(path));
    LinearClassifier clf;
    for (const auto& id : require_field(j, "class_ids", path)) {
        clf.class_ids.push_back(as_int(id, path + ": class_ids"));
    }
    clf.W = parse_matrix(require_field(j, "W", path), path + ": W");
    clf.b = parse_matrix(require_field(j, "b", path), path + ": b");
    if (clf.class_ids.empty() || clf.b.rows() != 1 ||
        static_cast<Eigen::Index>(clf.class_ids.size()) != clf.W.cols() ||
        clf.b.cols() != clf.W.cols()) {
        throw InputError(path + ": classifier dimensions are inconsistent");
    }
    return clf;
}

// ---- report ---------------------------------------------------------------

std::string report_to_json(const EvalReport& report) {
    json j;
    j["metadata"] = {{"ap_interpolation", "all-points"}, {"format", "kefs-report-v1"}};
    if (report.accuracy) j["accuracy"] = *report.accuracy;
    if (report.seen_accuracy) j["seen_accuracy"] = *report.seen_accuracy;
    if (report.unseen_accuracy) j["unseen_accuracy"] = *report.unseen_accuracy;
    if (report.hm) j["harmonic_mean"] = *report.hm;
    if (report.silhouette_score) j["silhouette"] = *report.silhouette_score;
    if (report.synthesized_count > 0) j["synthesized_count"] = report.synthesized_count;
    if (report.detection) {
        const DetectionEvalResult& d = *report.detection;
        json per_class = json::object();
        for (const auto& [class_id, ap] : d.per_class_ap) {
            per_class[std::to_string(class_id)] = ap;
        }
        j["detection"] = {{"per_class_ap", per_class}, {"map_all", d.map_all},
                          {"map_seen", d.map_seen},   {"map_unseen", d.map_unseen},
                          {"harmonic_mean", d.hm},    {"recall", d.recall},
                          {"recall_k", d.k},          {"iou_thresh", d.iou_thresh}};
    }
    return j.dump(2) + "\n";
}

void save_report(const std::string& path, const EvalReport& report) {
    atomic_write(path, report_to_json(report));
}

}  // namespace kefs
