#include "mmdcal/io.hpp"

#include "mmdcal/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mmdcal {

std::string format_double(double value) {
    if (!std::isfinite(value)) throw NumericError("cannot format a non-finite value");
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
    return out;
}

std::string unquote(std::string_view s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return std::string(s);
}

}  // namespace

Sample parse_csv(std::string_view text, const std::string& provenance) {
    if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t nl = text.find('\n', start);
        const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
        lines.push_back(text.substr(start, end - start));
        if (nl == std::string_view::npos) break;
        start = nl + 1;
    }
    std::size_t first = 0;
    while (first < lines.size() && trim(lines[first]).empty()) ++first;
    if (first == lines.size()) throw DataError(provenance + ": empty CSV file");

    std::vector<std::string> names;
    for (auto f : split_fields(lines[first])) names.push_back(unquote(f));
    for (std::size_t c = 0; c < names.size(); ++c) {
        if (names[c].empty()) throw DataError(provenance + ": empty column name at column " + std::to_string(c + 1));
    }
    const std::size_t d = names.size();

    std::vector<double> values;
    std::size_t n_rows = 0;
    for (std::size_t li = first + 1; li < lines.size(); ++li) {
        if (trim(lines[li]).empty()) continue;
        const auto fields = split_fields(lines[li]);
        const std::string where = provenance + ": line " + std::to_string(li + 1);
        if (fields.size() != d) {
            throw DataError(where + " has " + std::to_string(fields.size()) + " fields, header has " + std::to_string(d));
        }
        for (std::size_t c = 0; c < d; ++c) {
            const std::string_view f = fields[c];
            double v = 0.0;
            const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
            if (f.empty() || res.ec != std::errc{} || res.ptr != f.data() + f.size()) {
                throw DataError(where + ", column " + std::to_string(c + 1) + ": '" + std::string(f) + "' is not a number");
            }
            if (!std::isfinite(v)) {
                throw DataError(where + ", column " + std::to_string(c + 1) + ": non-finite value '" + std::string(f) + "'");
            }
            values.push_back(v);
        }
        ++n_rows;
    }
    if (n_rows == 0) throw DataError(provenance + ": CSV has a header but no data rows");
    Matrix data = Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(d));
    return Sample(std::move(data), std::move(names), provenance);
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw DataError("write failed for '" + path.string() + "'");
}

Sample read_csv(const std::filesystem::path& path) {
    return parse_csv(read_text_file(path), path.filename().string());
}

std::string format_csv(const Matrix& data, const std::vector<std::string>& column_names) {
    require_dims(column_names.size() == static_cast<std::size_t>(data.cols()), "CSV header width");
    std::string out;
    for (std::size_t c = 0; c < column_names.size(); ++c) {
        if (c) out += ',';
        out += column_names[c];
    }
    out += '\n';
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        for (Eigen::Index j = 0; j < data.cols(); ++j) {
            if (j) out += ',';
            out += format_double(data(i, j));
        }
        out += '\n';
    }
    return out;
}

void write_csv(const std::filesystem::path& path, const Matrix& data, const std::vector<std::string>& column_names) {
    write_text_file(path, format_csv(data, column_names));
}

void write_csv(const std::filesystem::path& path, const Sample& sample) {
    write_csv(path, sample.data, sample.column_names);
}

namespace {

Json vec_json(const RowVector& v) {
    return Json(std::vector<double>(v.data(), v.data() + v.size()));
}

RowVector row_from_json(const Json& j, std::size_t expected, const char* what) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != expected) {
        throw DataError(std::string("model JSON: ") + what + " has " + std::to_string(v.size()) + " entries, expected " +
                        std::to_string(expected));
    }
    return Eigen::Map<const RowVector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Json dense_json(const DenseLayer& l) {
    return {{"rows", l.weights.rows()},
            {"cols", l.weights.cols()},
            {"weights", std::vector<double>(l.weights.data(), l.weights.data() + l.weights.size())},
            {"bias", vec_json(l.bias)}};
}

DenseLayer dense_from_json(const Json& j, std::size_t in, std::size_t out) {
    if (j.at("rows").get<std::size_t>() != in || j.at("cols").get<std::size_t>() != out) {
        throw DataError("model JSON: dense layer shape does not match the declared network shape");
    }
    DenseLayer l(in, out);
    const auto w = j.at("weights").get<std::vector<double>>();
    if (w.size() != in * out) throw DataError("model JSON: dense weight count mismatch");
    l.weights = Eigen::Map<const Matrix>(w.data(), static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out));
    l.bias = row_from_json(j.at("bias"), out, "bias");
    return l;
}

Json bn_json(const BatchNormLayer& bn) {
    return {{"gamma", vec_json(bn.gamma)},
            {"beta", vec_json(bn.beta)},
            {"running_mean", vec_json(bn.running_mean)},
            {"running_var", vec_json(bn.running_var)},
            {"momentum", bn.momentum},
            {"epsilon", bn.epsilon}};
}

BatchNormLayer bn_from_json(const Json& j, std::size_t c) {
    BatchNormLayer bn(c);
    bn.gamma = row_from_json(j.at("gamma"), c, "gamma");
    bn.beta = row_from_json(j.at("beta"), c, "beta");
    bn.running_mean = row_from_json(j.at("running_mean"), c, "running_mean");
    bn.running_var = row_from_json(j.at("running_var"), c, "running_var");
    bn.momentum = j.at("momentum").get<double>();
    bn.epsilon = j.at("epsilon").get<double>();
    if ((bn.running_var.array() < 0.0).any()) throw DataError("model JSON: negative running variance");
    return bn;
}

void check_schema(const Json& j, const char* format) {
    if (!j.is_object() || j.value("format", std::string{}) != format) {
        throw DataError(std::string("not a ") + format + " document");
    }
    const int version = j.at("schema_version").get<int>();
    if (version != kModelSchemaVersion) {
        throw DataError(std::string(format) + ": unsupported schema_version " + std::to_string(version));
    }
}

}  // namespace

Json network_to_json(const Network& net) {
    Json blocks = Json::array();
    for (const auto& b : net.blocks()) {
        blocks.push_back({{"bn1", bn_json(b.bn1)},
                          {"dense1", dense_json(b.dense1)},
                          {"bn2", bn_json(b.bn2)},
                          {"dense2", dense_json(b.dense2)}});
    }
    return {{"format", "mmdcal-network"},
            {"schema_version", kModelSchemaVersion},
            {"variant", to_string(net.variant())},
            {"dim", net.dim()},
            {"hidden", net.hidden()},
            {"n_blocks", net.n_blocks()},
            {"blocks", blocks}};
}

Network network_from_json(const Json& j) {
    try {
        check_schema(j, "mmdcal-network");
        const auto d = j.at("dim").get<std::size_t>();
        const auto h = j.at("hidden").get<std::size_t>();
        const auto nb = j.at("n_blocks").get<std::size_t>();
        if (j.at("blocks").size() != nb) throw DataError("model JSON: block count mismatch");
        Network net(parse_variant(j.at("variant").get<std::string>()), d, nb, h);
        for (std::size_t i = 0; i < nb; ++i) {
            const Json& bj = j.at("blocks").at(i);
            auto& b = net.blocks()[i];
            b.bn1 = bn_from_json(bj.at("bn1"), d);
            b.dense1 = dense_from_json(bj.at("dense1"), d, h);
            b.bn2 = bn_from_json(bj.at("bn2"), h);
            b.dense2 = dense_from_json(bj.at("dense2"), h, d);
        }
        return net;
    } catch (const Json::exception& e) {
        throw DataError(std::string("malformed network JSON: ") + e.what());
    }
}

Json training_config_to_json(const TrainingConfig& c) {
    return {{"minibatch_size", c.minibatch_size},
            {"l2_penalty", c.l2_penalty},
            {"validation_fraction", c.validation_fraction},
            {"max_epochs", c.max_epochs},
            {"patience", c.patience},
            {"rmsprop",
             {{"learning_rate", c.rmsprop.learning_rate}, {"rho", c.rmsprop.rho}, {"epsilon", c.rmsprop.epsilon}}},
            {"init_variance", c.init_variance},
            {"seed", c.seed}};
}

TrainingConfig training_config_from_json(const Json& j, TrainingConfig c) {
    try {
        c.minibatch_size = j.value("minibatch_size", c.minibatch_size);
        c.l2_penalty = j.value("l2_penalty", c.l2_penalty);
        c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
        c.max_epochs = j.value("max_epochs", c.max_epochs);
        c.patience = j.value("patience", c.patience);
        c.init_variance = j.value("init_variance", c.init_variance);
        c.seed = j.value("seed", c.seed);
        if (j.contains("rmsprop")) {
            const Json& r = j.at("rmsprop");
            c.rmsprop.learning_rate = r.value("learning_rate", c.rmsprop.learning_rate);
            c.rmsprop.rho = r.value("rho", c.rmsprop.rho);
            c.rmsprop.epsilon = r.value("epsilon", c.rmsprop.epsilon);
        }
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("invalid training config: ") + e.what());
    }
    return c;
}

Json kernel_to_json(const KernelSpec& k) {
    return {{"sigmas", std::vector<double>(k.sigmas.begin(), k.sigmas.end())}, {"median_scale", k.median_scale}};
}

KernelSpec kernel_from_json(const Json& j) {
    KernelSpec k;
    const auto s = j.at("sigmas").get<std::vector<double>>();
    if (s.size() != 3) throw DataError("kernel JSON: expected 3 sigmas");
    std::copy(s.begin(), s.end(), k.sigmas.begin());
    k.median_scale = j.value("median_scale", 0.0);
    k.validate();
    return k;
}

Json calibration_map_to_json(const CalibrationMap& map) {
    Json log = Json::array();
    for (const auto& e : map.training_log) {
        log.push_back({{"epoch", e.epoch},
                       {"train_loss", e.train_loss ? Json(*e.train_loss) : Json(nullptr)},
                       {"validation_loss", e.validation_loss}});
    }
    return {{"format", "mmdcal-model"},
            {"schema_version", kModelSchemaVersion},
            {"network", network_to_json(map.network)},
            {"standardization", {{"mean", vec_json(map.standardization.mean)}, {"std", vec_json(map.standardization.std)}}},
            {"kernel", kernel_to_json(map.kernel)},
            {"shape",
             {{"n_blocks", map.shape.n_blocks},
              {"hidden_width", map.shape.hidden_width},
              {"variant", to_string(map.shape.variant)}}},
            {"config", training_config_to_json(map.config)},
            {"best_epoch", map.best_epoch},
            {"training_log", log}};
}

CalibrationMap calibration_map_from_json(const Json& j) {
    try {
        check_schema(j, "mmdcal-model");
        CalibrationMap map;
        map.network = network_from_json(j.at("network"));
        const std::size_t d = map.network.dim();
        map.standardization.mean = row_from_json(j.at("standardization").at("mean"), d, "standardization mean");
        map.standardization.std = row_from_json(j.at("standardization").at("std"), d, "standardization std");
        if ((map.standardization.std.array() <= 0.0).any()) throw DataError("model JSON: nonpositive standardization std");
        map.kernel = kernel_from_json(j.at("kernel"));
        const Json& shape = j.at("shape");
        map.shape.n_blocks = shape.at("n_blocks").get<std::size_t>();
        map.shape.hidden_width = shape.at("hidden_width").get<std::size_t>();
        map.shape.variant = parse_variant(shape.at("variant").get<std::string>());
        map.config = training_config_from_json(j.at("config"));
        map.best_epoch = j.at("best_epoch").get<std::size_t>();
        for (const auto& e : j.at("training_log")) {
            EpochLog entry;
            entry.epoch = e.at("epoch").get<std::size_t>();
            if (!e.at("train_loss").is_null()) entry.train_loss = e.at("train_loss").get<double>();
            entry.validation_loss = e.at("validation_loss").get<double>();
            map.training_log.push_back(entry);
        }
        return map;
    } catch (const Json::exception& e) {
        throw DataError(std::string("malformed model JSON: ") + e.what());
    }
}

void save_calibration_map(const std::filesystem::path& path, const CalibrationMap& map) {
    write_text_file(path, calibration_map_to_json(map).dump(1) + "\n");
}

CalibrationMap load_calibration_map(const std::filesystem::path& path) {
    Json j;
    try {
        j = Json::parse(read_text_file(path));
    } catch (const Json::parse_error& e) {
        throw DataError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
    return calibration_map_from_json(j);
}

}  // namespace mmdcal
