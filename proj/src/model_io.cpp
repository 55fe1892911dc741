#include "moddrop/model_io.hpp"

#include "moddrop/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

namespace moddrop::io {

namespace {

constexpr const char* kModelMagic = "MODDROP-MODEL";
constexpr const char* kMatrixMagic = "MODDROP-MATRIX";

void put_f64(std::string& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    std::string line() {
        const auto end = bytes_.find('\n', pos_);
        if (end == std::string::npos) throw FormatError("header truncated: missing 'end' line");
        std::string l = bytes_.substr(pos_, end - pos_);
        pos_ = end + 1;
        return l;
    }

    double f64() {
        if (pos_ + 8 > bytes_.size())
            throw FormatError("payload truncated at byte " + std::to_string(pos_));
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i)
            bits |= std::uint64_t{static_cast<unsigned char>(bytes_[pos_ + i])} << (8 * i);
        pos_ += 8;
        return std::bit_cast<double>(bits);
    }

    void expect_end() const {
        if (pos_ != bytes_.size())
            throw FormatError("trailing bytes after payload: " +
                              std::to_string(bytes_.size() - pos_));
    }

private:
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

// Header: "key value..." lines up to "end". Repeated keys ("path") are kept in order.
struct Header {
    std::multimap<std::string, std::vector<std::string>> fields;
    std::vector<std::vector<std::string>> paths;

    const std::vector<std::string>& get(const std::string& key) const {
        auto it = fields.find(key);
        if (it == fields.end()) throw FormatError("header field '" + key + "' missing");
        return it->second;
    }

    long integer(const std::string& key) const {
        const auto& v = get(key);
        if (v.size() != 1) throw FormatError("header field '" + key + "' malformed");
        try {
            std::size_t used = 0;
            const long x = std::stol(v[0], &used);
            if (used != v[0].size()) throw std::invalid_argument(key);
            return x;
        } catch (const std::logic_error&) {
            throw FormatError("header field '" + key + "' is not an integer: " + v[0]);
        }
    }

    std::string word(const std::string& key) const {
        const auto& v = get(key);
        if (v.size() != 1) throw FormatError("header field '" + key + "' malformed");
        return v[0];
    }
};

Header read_header(Reader& r, const std::string& magic, int version) {
    std::istringstream first(r.line());
    std::string got_magic;
    int got_version = -1;
    first >> got_magic >> got_version;
    if (got_magic != magic) throw FormatError("header field 'magic': expected " + magic);
    if (got_version != version)
        throw FormatError("header field 'version': expected " + std::to_string(version) +
                          ", got " + std::to_string(got_version));
    Header h;
    for (std::string l = r.line(); l != "end"; l = r.line()) {
        std::istringstream ls(l);
        std::string key, tok;
        ls >> key;
        std::vector<std::string> values;
        while (ls >> tok) values.push_back(tok);
        if (key.empty()) throw FormatError("header: empty line");
        if (key == "path") h.paths.push_back(values);
        else h.fields.emplace(key, values);
    }
    return h;
}

void write_topology(std::ostringstream& os, const NetworkTopology& topo) {
    os << "classes " << topo.num_classes << '\n';
    os << "shared_activation "
       << (topo.shared_activation == SharedActivation::Tanh ? "tanh" : "linear") << '\n';
    os << "path_biases " << (topo.path_biases ? 1 : 0) << '\n';
    os << "paths " << topo.modality_count() << '\n';
    for (std::size_t k = 0; k < topo.paths.size(); ++k) {
        os << "path " << k << ' ' << topo.paths[k].input_dim;
        for (auto h : topo.paths[k].hidden) os << ' ' << h;
        os << '\n';
    }
}

NetworkTopology read_topology(const Header& h) {
    NetworkTopology topo;
    const long classes = h.integer("classes");
    if (classes < 2) throw FormatError("header field 'classes' must be >= 2");
    topo.num_classes = static_cast<std::size_t>(classes);
    const auto act = h.word("shared_activation");
    if (act == "tanh") topo.shared_activation = SharedActivation::Tanh;
    else if (act == "linear") topo.shared_activation = SharedActivation::Linear;
    else throw FormatError("header field 'shared_activation' unknown: " + act);
    const long biases = h.integer("path_biases");
    if (biases != 0 && biases != 1) throw FormatError("header field 'path_biases' must be 0 or 1");
    topo.path_biases = biases == 1;
    const long K = h.integer("paths");
    if (K < 1 || static_cast<std::size_t>(K) != h.paths.size())
        throw FormatError("header field 'paths' does not match the number of path lines");
    for (std::size_t k = 0; k < h.paths.size(); ++k) {
        const auto& v = h.paths[k];
        if (v.size() < 2 || v[0] != std::to_string(k))
            throw FormatError("header field 'path' line " + std::to_string(k) + " malformed");
        PathTopology p;
        try {
            p.input_dim = std::stoul(v[1]);
            for (std::size_t i = 2; i < v.size(); ++i) p.hidden.push_back(std::stoul(v[i]));
        } catch (const std::logic_error&) {
            throw FormatError("header field 'path' line " + std::to_string(k) + " malformed");
        }
        topo.paths.push_back(std::move(p));
    }
    try {
        topo.validate();
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("header topology invalid: ") + e.what());
    }
    return topo;
}

void put_matrix(std::string& out, const Matrix& m) {
    for (double v : m.data()) put_f64(out, v);
}
void put_vector(std::string& out, const std::vector<double>& v) {
    for (double x : v) put_f64(out, x);
}
void get_matrix(Reader& r, Matrix& m) {
    for (double& v : m.data()) v = r.f64();
}
void get_vector(Reader& r, std::vector<double>& v) {
    for (double& x : v) x = r.f64();
}

void put_path(std::string& out, const PathParams& p) {
    for (const auto& l : p.layers) {
        put_matrix(out, l.weights);
        put_vector(out, l.bias);
    }
}

PathParams get_path(Reader& r, const PathTopology& topo) {
    PathParams p;
    std::size_t in = topo.input_dim;
    for (auto h : topo.hidden) {
        DenseLayer l{Matrix(in, h), std::vector<double>(h)};
        get_matrix(r, l.weights);
        get_vector(r, l.bias);
        p.layers.push_back(std::move(l));
        in = h;
    }
    return p;
}

}  // namespace

std::string serialize_network(const NetworkTopology& topo, const NetworkParams& params) {
    check_params(topo, params);
    std::ostringstream os;
    os << kModelMagic << ' ' << kModelVersion << '\n' << "kind network\n";
    write_topology(os, topo);
    os << "gamma " << params.shared.gamma << '\n' << "end\n";
    std::string out = os.str();
    for (const auto& p : params.paths) put_path(out, p);
    put_matrix(out, params.shared.w1);
    put_vector(out, params.shared.b1);
    put_matrix(out, params.shared.w2);
    put_vector(out, params.shared.b2);
    return out;
}

std::string serialize_classifiers(const NetworkTopology& topo,
                                  const std::vector<ModalityClassifier>& classifiers) {
    topo.validate();
    require(classifiers.size() == topo.modality_count(),
            "serialize_classifiers: one classifier per modality required");
    std::ostringstream os;
    os << kModelMagic << ' ' << kModelVersion << '\n' << "kind classifiers\n";
    write_topology(os, topo);
    os << "end\n";
    std::string out = os.str();
    for (std::size_t k = 0; k < classifiers.size(); ++k) {
        const auto& c = classifiers[k];
        require(c.head.weights.rows() == topo.paths[k].output_dim() &&
                    c.head.weights.cols() == topo.num_classes,
                "serialize_classifiers: head shape mismatch");
        put_path(out, c.path);
        put_matrix(out, c.head.weights);
        put_vector(out, c.head.bias);
    }
    return out;
}

SavedModel deserialize_model(const std::string& bytes) {
    Reader r(bytes);
    const Header h = read_header(r, kModelMagic, kModelVersion);
    SavedModel model;
    model.topology = read_topology(h);
    const auto& topo = model.topology;
    const auto kind = h.word("kind");
    if (kind == "network") {
        NetworkParams p;
        const long gamma = h.integer("gamma");
        if (gamma != 0 && gamma != 1) throw FormatError("header field 'gamma' must be 0 or 1");
        for (const auto& pt : topo.paths) p.paths.push_back(get_path(r, pt));
        p.shared.w1 = Matrix(topo.fused_width(), topo.shared_width());
        p.shared.b1.resize(topo.shared_width());
        p.shared.w2 = Matrix(topo.shared_width(), topo.num_classes);
        p.shared.b2.resize(topo.num_classes);
        p.shared.gamma = static_cast<int>(gamma);
        get_matrix(r, p.shared.w1);
        get_vector(r, p.shared.b1);
        get_matrix(r, p.shared.w2);
        get_vector(r, p.shared.b2);
        model.network = std::move(p);
    } else if (kind == "classifiers") {
        for (const auto& pt : topo.paths) {
            ModalityClassifier c;
            c.path = get_path(r, pt);
            c.head = {Matrix(pt.output_dim(), topo.num_classes),
                      std::vector<double>(topo.num_classes)};
            get_matrix(r, c.head.weights);
            get_vector(r, c.head.bias);
            model.classifiers.push_back(std::move(c));
        }
    } else {
        throw FormatError("header field 'kind' unknown: " + kind);
    }
    r.expect_end();
    return model;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("write failed: " + path.string());
}

void save_model(const std::filesystem::path& path, const NetworkTopology& topo,
                const NetworkParams& params) {
    write_file(path, serialize_network(topo, params));
}

void save_classifiers(const std::filesystem::path& path, const NetworkTopology& topo,
                      const std::vector<ModalityClassifier>& classifiers) {
    write_file(path, serialize_classifiers(topo, classifiers));
}

SavedModel load_model(const std::filesystem::path& path) {
    try {
        return deserialize_model(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::string serialize_matrix(const Matrix& m) {
    std::ostringstream os;
    os << kMatrixMagic << ' ' << kMatrixVersion << '\n'
       << "rows " << m.rows() << '\n'
       << "cols " << m.cols() << '\n'
       << "end\n";
    std::string out = os.str();
    put_matrix(out, m);
    return out;
}

Matrix deserialize_matrix(const std::string& bytes) {
    Reader r(bytes);
    const Header h = read_header(r, kMatrixMagic, kMatrixVersion);
    const long rows = h.integer("rows"), cols = h.integer("cols");
    if (rows < 0 || cols < 0) throw FormatError("header field 'rows'/'cols' negative");
    Matrix m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
    get_matrix(r, m);
    r.expect_end();
    return m;
}

void save_matrix(const std::filesystem::path& path, const Matrix& m) {
    write_file(path, serialize_matrix(m));
}

Matrix load_matrix(const std::filesystem::path& path) { return deserialize_matrix(read_file(path)); }

}  // namespace moddrop::io
