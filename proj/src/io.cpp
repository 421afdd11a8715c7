#include "tfb/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tfb/errors.hpp"

namespace tfb::io {

using nlohmann::json;

// ---------------------------------------------------------------------------
// primitives
// ---------------------------------------------------------------------------

namespace {
constexpr char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const unsigned char* bytes, std::size_t len) {
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    for (std::size_t i = 0; i < len; i += 3) {
        const unsigned b0 = bytes[i];
        const unsigned b1 = i + 1 < len ? bytes[i + 1] : 0;
        const unsigned b2 = i + 2 < len ? bytes[i + 2] : 0;
        out.push_back(kB64Alphabet[b0 >> 2]);
        out.push_back(kB64Alphabet[((b0 & 0x3) << 4) | (b1 >> 4)]);
        out.push_back(i + 1 < len ? kB64Alphabet[((b1 & 0xF) << 2) | (b2 >> 6)] : '=');
        out.push_back(i + 2 < len ? kB64Alphabet[b2 & 0x3F] : '=');
    }
    return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
    if (text.size() % 4 != 0) {
        throw ValidationError("base64_decode: length must be a multiple of 4");
    }
    static const auto value_of = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    std::vector<unsigned char> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        int v[4];
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            const char c = text[i + k];
            if (c == '=') {
                if (i + 4 != text.size() || k < 2) {
                    throw ValidationError("base64_decode: misplaced padding");
                }
                v[k] = 0;
                ++pad;
            } else {
                v[k] = value_of(c);
                if (v[k] < 0) {
                    throw ValidationError(std::string("base64_decode: bad character '") + c +
                                          "'");
                }
                if (pad > 0) throw ValidationError("base64_decode: data after padding");
            }
        }
        out.push_back(static_cast<unsigned char>((v[0] << 2) | (v[1] >> 4)));
        if (pad < 2) out.push_back(static_cast<unsigned char>(((v[1] & 0xF) << 4) | (v[2] >> 2)));
        if (pad < 1) out.push_back(static_cast<unsigned char>(((v[2] & 0x3) << 6) | v[3]));
    }
    return out;
}

std::string encode_doubles(const std::vector<double>& xs) {
    // Little-endian f64. The build targets little-endian hosts; a static
    // check keeps the format honest if that ever changes.
    static_assert(std::endian::native == std::endian::little,
                  "tensor wire format is little-endian");
    return base64_encode(reinterpret_cast<const unsigned char*>(xs.data()),
                         xs.size() * sizeof(double));
}

std::vector<double> decode_doubles(const std::string& text) {
    const std::vector<unsigned char> bytes = base64_decode(text);
    if (bytes.size() % sizeof(double) != 0) {
        throw ValidationError("decode_doubles: byte count is not a multiple of 8");
    }
    std::vector<double> out(bytes.size() / sizeof(double));
    std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write file: " + path.string());
    out << text;
    if (!out) throw ValidationError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr int kFormatVersion = 1;

json layer_spec_to_json(const LayerSpec& spec) {
    json j;
    j["kind"] = layer_kind_name(spec.kind);
    j["in_dim"] = spec.in_dim;
    j["out_dim"] = spec.out_dim;
    j["activation"] = activation_name(spec.activation);
    if (spec.kind == LayerKind::DenseAdapted) j["rank"] = spec.rank;
    return j;
}

LayerSpec layer_spec_from_json(const json& j) {
    LayerSpec spec;
    spec.kind = layer_kind_from_name(j.at("kind").get<std::string>());
    spec.in_dim = j.at("in_dim").get<std::size_t>();
    spec.out_dim = j.at("out_dim").get<std::size_t>();
    spec.activation = activation_from_name(j.at("activation").get<std::string>());
    spec.rank = spec.kind == LayerKind::DenseAdapted ? j.at("rank").get<std::size_t>() : 0;
    return spec;
}

}  // namespace

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
    ckpt.net.validate();
    json root;
    root["format_version"] = kFormatVersion;
    root["task"] = task_name(ckpt.task);
    root["meta"] = {{"train_seed", ckpt.meta.train_seed},
                    {"steps", ckpt.meta.steps},
                    {"learning_rate", ckpt.meta.learning_rate}};

    json topology = json::array();
    json layers = json::array();
    for (const Layer& layer : ckpt.net.layers) {
        topology.push_back(layer_spec_to_json(layer.spec));
        json tensors;
        tensors["w0"] = encode_doubles(layer.w0.data);
        tensors["bias"] = encode_doubles(layer.bias);
        if (layer.spec.kind == LayerKind::DenseAdapted) {
            tensors["b"] = encode_doubles(layer.b.data);
            tensors["a"] = encode_doubles(layer.a.data);
        }
        layers.push_back(std::move(tensors));
    }
    root["topology"] = std::move(topology);
    root["layers"] = std::move(layers);

    if (ckpt.posterior.has_value()) {
        json post;
        post["family"] = ckpt.posterior->family;
        post["sigma_q"] = ckpt.posterior->sigma_q;
        json d = json::array();
        for (const auto& layer_d : ckpt.posterior->d) d.push_back(encode_doubles(layer_d));
        post["d"] = std::move(d);
        root["posterior"] = std::move(post);
    }

    write_text_file(path, root.dump(2) + "\n");
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
    json root;
    try {
        root = json::parse(read_text_file(path));
    } catch (const json::parse_error& err) {
        throw ValidationError("load_checkpoint: " + path.string() + ": " + err.what());
    }

    try {
        if (root.at("format_version").get<int>() != kFormatVersion) {
            throw ValidationError("load_checkpoint: unsupported format_version");
        }
        ModelCheckpoint ckpt;
        ckpt.task = task_from_name(root.at("task").get<std::string>());
        ckpt.meta.train_seed = root.at("meta").at("train_seed").get<std::uint64_t>();
        ckpt.meta.steps = root.at("meta").at("steps").get<std::int64_t>();
        ckpt.meta.learning_rate = root.at("meta").at("learning_rate").get<double>();

        const json& topology = root.at("topology");
        const json& layers = root.at("layers");
        if (topology.size() != layers.size()) {
            throw ValidationError("load_checkpoint: topology/layers length mismatch");
        }
        for (std::size_t l = 0; l < topology.size(); ++l) {
            Layer layer;
            layer.spec = layer_spec_from_json(topology[l]);
            const json& tensors = layers[l];

            layer.w0 = DenseMatrix(layer.spec.out_dim, layer.spec.in_dim);
            layer.w0.data = decode_doubles(tensors.at("w0").get<std::string>());
            if (layer.w0.data.size() != layer.spec.out_dim * layer.spec.in_dim) {
                throw ValidationError("load_checkpoint: w0 tensor size mismatch at layer " +
                                      std::to_string(l));
            }
            layer.bias = decode_doubles(tensors.at("bias").get<std::string>());
            if (layer.bias.size() != layer.spec.out_dim) {
                throw ValidationError("load_checkpoint: bias size mismatch at layer " +
                                      std::to_string(l));
            }
            if (layer.spec.kind == LayerKind::DenseAdapted) {
                layer.b = DenseMatrix(layer.spec.out_dim, layer.spec.rank);
                layer.b.data = decode_doubles(tensors.at("b").get<std::string>());
                layer.a = DenseMatrix(layer.spec.rank, layer.spec.in_dim);
                layer.a.data = decode_doubles(tensors.at("a").get<std::string>());
                if (layer.b.data.size() != layer.spec.out_dim * layer.spec.rank ||
                    layer.a.data.size() != layer.spec.rank * layer.spec.in_dim) {
                    throw ValidationError(
                        "load_checkpoint: adapter tensor size mismatch at layer " +
                        std::to_string(l));
                }
            }
            ckpt.net.layers.push_back(std::move(layer));
        }
        ckpt.net.validate();

        if (root.contains("posterior")) {
            CheckpointPosterior post;
            const json& p = root.at("posterior");
            post.family = p.at("family").get<std::string>();
            family_from_name(post.family);  // validates the string
            post.sigma_q = p.at("sigma_q").get<double>();
            if (!(post.sigma_q >= 0.0)) {
                throw ValidationError("load_checkpoint: sigma_q must be >= 0");
            }
            for (const json& d : p.at("d")) {
                post.d.push_back(decode_doubles(d.get<std::string>()));
            }
            if (post.d.size() != ckpt.net.layers.size()) {
                throw ValidationError("load_checkpoint: posterior d list misaligned");
            }
            ckpt.posterior = std::move(post);
        }
        return ckpt;
    } catch (const json::exception& err) {
        throw ValidationError("load_checkpoint: " + path.string() + ": " + err.what());
    }
}

// ---------------------------------------------------------------------------
// datasets
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

double parse_double(const std::string& text, const char* what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(text, &pos);
        if (pos != text.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ValidationError(std::string(what) + ": cannot parse '" + text + "' as a number");
    }
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
    ds.validate();
    std::ostringstream out;
    const std::size_t width = ds.inputs.empty() ? 0 : ds.inputs.front().size();
    for (std::size_t j = 0; j < width; ++j) {
        if (j > 0) out << ',';
        out << 'x' << j;
    }
    if (ds.targets.has_value()) out << ",y";
    if (ds.labels.has_value()) out << ",label";
    out << '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 0; j < width; ++j) {
            if (j > 0) out << ',';
            out << format_double(ds.inputs[i][j]);
        }
        if (ds.targets.has_value()) out << ',' << format_double((*ds.targets)[i]);
        if (ds.labels.has_value()) out << ',' << (*ds.labels)[i];
        out << '\n';
    }
    write_text_file(path, out.str());
}

Dataset load_dataset(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("load_dataset: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const std::vector<std::string> header = split_csv_line(line);
    std::size_t width = 0;
    bool has_y = false, has_label = false;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (header[j] == "x" + std::to_string(j)) {
            ++width;
        } else if (header[j] == "y" && j == header.size() - 1) {
            has_y = true;
        } else if (header[j] == "label" && j == header.size() - 1) {
            has_label = true;
        } else {
            throw ValidationError("load_dataset: unexpected header column '" + header[j] + "'");
        }
    }
    if (width == 0) throw ValidationError("load_dataset: no input columns");

    Dataset ds;
    ds.task = has_label ? Task::Classification : Task::Regression;
    if (has_y) ds.targets.emplace();
    if (has_label) ds.labels.emplace();

    std::size_t line_no = 1;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw ValidationError("load_dataset: line " + std::to_string(line_no) + " has " +
                                  std::to_string(fields.size()) + " fields, expected " +
                                  std::to_string(header.size()));
        }
        std::vector<double> x(width);
        for (std::size_t j = 0; j < width; ++j) x[j] = parse_double(fields[j], "load_dataset");
        ds.inputs.push_back(std::move(x));
        if (has_y) ds.targets->push_back(parse_double(fields[width], "load_dataset"));
        if (has_label) {
            const double raw = parse_double(fields[width], "load_dataset");
            const int label = static_cast<int>(raw);
            if (static_cast<double>(label) != raw || label < 0) {
                throw ValidationError("load_dataset: label must be a non-negative integer, got '" +
                                      fields[width] + "'");
            }
            ds.labels->push_back(label);
            max_label = std::max(max_label, label);
        }
    }
    if (has_label) ds.class_count = static_cast<std::size_t>(max_label + 1);
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// result tables
// ---------------------------------------------------------------------------

void save_search_trace_csv(const SearchTrace& trace, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "round,sigma_q,metric_value,accepted\n";
    for (std::size_t i = 0; i < trace.probes.size(); ++i) {
        out << i << ',' << format_double(trace.probes[i].sigma_q) << ','
            << format_double(trace.probes[i].metric_value) << ','
            << (trace.probes[i].accepted ? 1 : 0) << '\n';
    }
    write_text_file(path, out.str());
}

void save_search_trace_json(const SearchTrace& trace, const std::filesystem::path& path) {
    json root;
    root["p0"] = trace.p0;
    root["epsilon_abs"] = trace.epsilon_abs;
    root["result_sigma"] = trace.result_sigma;
    root["any_accepted"] = trace.any_accepted;
    root["bracket_lo"] = trace.bracket_lo;
    root["bracket_width"] = trace.bracket_width;
    json probes = json::array();
    for (const Probe& p : trace.probes) {
        probes.push_back({{"sigma_q", p.sigma_q},
                          {"metric_value", p.metric_value},
                          {"accepted", p.accepted}});
    }
    root["probes"] = std::move(probes);
    write_text_file(path, root.dump(2) + "\n");
}

void save_grid_result_csv(const GridResult& result, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "sigma_q,metric_value\n";
    for (const GridProbe& p : result.probes) {
        out << format_double(p.sigma_q) << ',' << format_double(p.metric_value) << '\n';
    }
    write_text_file(path, out.str());
}

void save_grid_result_json(const GridResult& result, const std::filesystem::path& path) {
    json root;
    root["p0"] = result.p0;
    root["target"] = result.target;
    root["sigma_star"] = result.sigma_star;
    root["clamped"] = result.clamped;
    json probes = json::array();
    for (const GridProbe& p : result.probes) {
        probes.push_back({{"sigma_q", p.sigma_q}, {"metric_value", p.metric_value}});
    }
    root["probes"] = std::move(probes);
    write_text_file(path, root.dump(2) + "\n");
}

void save_metric_reports_csv(const std::vector<MetricReport>& reports,
                             const std::vector<std::pair<int, std::uint64_t>>& mc_and_seed,
                             const std::filesystem::path& path) {
    if (reports.size() != mc_and_seed.size()) {
        throw ValidationError("save_metric_reports_csv: length mismatch");
    }
    std::ostringstream out;
    out << "metric,value,mc_samples,seed\n";
    for (std::size_t i = 0; i < reports.size(); ++i) {
        out << metric_name(reports[i].kind) << ',' << format_double(reports[i].value) << ','
            << mc_and_seed[i].first << ',' << mc_and_seed[i].second << '\n';
    }
    write_text_file(path, out.str());
}

void save_bands_csv(const std::vector<std::pair<double, std::vector<BandRow>>>& sections,
                    const std::filesystem::path& path) {
    std::ostringstream out;
    out << "sigma_q,x,mean,lo,hi\n";
    for (const auto& [sigma, band] : sections) {
        for (const BandRow& row : band) {
            out << format_double(sigma) << ',' << format_double(row.x) << ','
                << format_double(row.mean) << ',' << format_double(row.lo) << ','
                << format_double(row.hi) << '\n';
        }
    }
    write_text_file(path, out.str());
}

}  // namespace tfb::io
