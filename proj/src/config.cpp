#include "tsink/config.hpp"

#include <fstream>
#include <functional>
#include <istream>
#include <ostream>

#include "tsink/format.hpp"

namespace tsink {

namespace {

struct Field {
    std::string key;
    std::function<void(const std::string&)> set;
    std::function<std::string()> get;
};

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& v) {
    const long long x = parse_int(v);
    if (x < 0) throw std::invalid_argument("expected a non-negative integer, got '" + v + "'");
    return static_cast<std::size_t>(x);
}

std::uint64_t to_u64(const std::string& v) {
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
        throw std::invalid_argument("expected an unsigned integer, got '" + v + "'");
    }
    return std::stoull(v);
}

bool to_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("expected true or false, got '" + v + "'");
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

template <class T>
std::string join(const std::vector<T>& xs) {
    std::string s;
    for (std::size_t k = 0; k < xs.size(); ++k) s += (k ? "," : "") + std::to_string(xs[k]);
    return s;
}

NormKind parse_norm(const std::string& s) {
    if (s == "spectral") return NormKind::Spectral;
    if (s == "frobenius") return NormKind::Frobenius;
    throw std::invalid_argument("unknown norm '" + s + "' (expected spectral or frobenius)");
}

std::string norm_name(NormKind k) { return k == NormKind::Spectral ? "spectral" : "frobenius"; }

Field size_field(std::string key, std::size_t& ref) {
    return {std::move(key), [&ref](const std::string& v) { ref = to_size(v); }, [&ref] { return std::to_string(ref); }};
}

Field real_field(std::string key, double& ref) {
    return {std::move(key), [&ref](const std::string& v) { ref = parse_double(v); }, [&ref] { return fmt_double(ref); }};
}

Field bool_field(std::string key, bool& ref) {
    return {std::move(key), [&ref](const std::string& v) { ref = to_bool(v); }, [&ref] { return from_bool(ref); }};
}

Field string_field(std::string key, std::string& ref) {
    return {std::move(key), [&ref](const std::string& v) { ref = v; }, [&ref] { return ref; }};
}

std::vector<Field> fields(RunConfig& c) {
    ModelConfig& m = c.train.model;
    return {
        {"seed", [&c](const std::string& v) { c.seed = to_u64(v); }, [&c] { return std::to_string(c.seed); }},
        bool_field("output.record_wall_time", c.record_wall_time),

        size_field("gradcheck.configs", c.gradcheck.configs),
        real_field("gradcheck.tolerance", c.gradcheck.tolerance),
        size_field("gradcheck.model_coords", c.gradcheck.model_coords),
        real_field("gradcheck.model_tolerance", c.gradcheck.model_tolerance),
        size_field("gradcheck.T", c.gradcheck.steps),
        size_field("gradcheck.dim", c.gradcheck.dim),

        {"sweep.steps", [&c](const std::string& v) { c.sweep.steps = parse_size_list(v); },
         [&c] { return join(c.sweep.steps); }},
        size_field("sweep.samples", c.sweep.samples),
        size_field("sweep.d_model", c.sweep.d_model),
        size_field("sweep.d_k", c.sweep.d_k),
        {"sweep.norm", [&c](const std::string& v) { c.sweep.norm = parse_norm(v); },
         [&c] { return norm_name(c.sweep.norm); }},
        {"sweep.reg", [&c](const std::string& v) { c.sweep.reg.kind = parse_reg_kind(v); },
         [&c] { return to_string(c.sweep.reg.kind); }},
        real_field("sweep.lambda", c.sweep.reg.lambda),
        real_field("sweep.p", c.sweep.reg.p),

        string_field("data.source", c.data.source),
        string_field("data.path", c.data.path),
        size_field("data.nodes", c.data.synthetic.nodes),
        size_field("data.steps", c.data.synthetic.steps),
        real_field("data.density", c.data.synthetic.graph_density),
        real_field("data.noise", c.data.synthetic.noise_std),
        bool_field("data.time_of_day", c.data.synthetic.time_of_day),

        string_field("train.variant", c.variant),
        real_field("train.lr0", c.train.lr0),
        size_field("train.epochs", c.train.epochs),
        size_field("train.warmup_epochs", c.train.warmup_epochs),
        size_field("train.batch_size", c.train.batch_size),
        real_field("train.weight_decay", c.train.weight_decay),
        real_field("train.beta1", c.train.beta1),
        real_field("train.beta2", c.train.beta2),
        real_field("train.eps", c.train.eps),
        {"train.seeds", [&c](const std::string& v) { c.train.seeds = parse_seed_list(v); },
         [&c] { return join(c.train.seeds); }},
        {"train.horizons", [&c](const std::string& v) { c.train.horizons_report = parse_size_list(v); },
         [&c] { return join(c.train.horizons_report); }},
        real_field("train.penalty_lambda", c.train.penalty_lambda),
        real_field("train.dropout_p", c.train.dropout_p),
        size_field("train.stride", c.train.train_stride),
        size_field("train.probe_windows", c.train.probe_windows),

        size_field("model.window", m.window),
        size_field("model.horizon", m.horizon),
        size_field("model.d_model", m.d_model),
        size_field("model.heads", m.heads),
        size_field("model.d_k", m.d_k),
        size_field("model.d_v", m.d_v),
        size_field("model.d_gcn", m.d_gcn),
        size_field("model.d_emb", m.d_emb),
        bool_field("model.share_graph_weight", m.share_graph_weight),
        {"model.pe", [&m](const std::string& v) { m.pe = parse_pe_scheme(v); }, [&m] { return to_string(m.pe); }},
    };
}

}  // namespace

std::vector<std::size_t> parse_size_list(const std::string& s) {
    std::vector<std::size_t> out;
    for (const auto& cell : split_csv_line(s)) out.push_back(to_size(trim(cell)));
    return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
    std::vector<std::uint64_t> out;
    for (const auto& cell : split_csv_line(s)) out.push_back(to_u64(trim(cell)));
    return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    for (auto& f : fields(*this)) {
        if (f.key != key) continue;
        try {
            f.set(value);
        } catch (const std::exception& e) {
            throw ConfigError("config key '" + key + "': " + e.what());
        }
        return;
    }
    throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
    std::vector<std::pair<std::string, std::string>> out;
    RunConfig copy = *this;
    for (auto& f : fields(copy)) out.emplace_back(f.key, f.get());
    return out;
}

void RunConfig::validate() const {
    try {
        if (data.source != "synthetic" && data.source != "csv") {
            throw std::invalid_argument("data.source must be 'synthetic' or 'csv'");
        }
        if (data.source == "csv" && data.path.empty()) throw std::invalid_argument("data.path is required when data.source = csv");
        if (variant != "all") parse_variant(variant);
        if (gradcheck.steps == 1) throw std::invalid_argument("gradcheck.T must be >= 2");
        if (!(gradcheck.tolerance >= 0.0) || !(gradcheck.model_tolerance >= 0.0)) {
            throw std::invalid_argument("gradcheck tolerances must be >= 0");
        }
        sweep.validate();
        train.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
}

void read_config(std::istream& is, RunConfig& cfg) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        try {
            cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void read_config_file(const std::filesystem::path& path, RunConfig& cfg) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path.string());
    read_config(is, cfg);
}

void apply_override(const std::string& kv, RunConfig& cfg) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not of the form key=value");
    cfg.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
}

void write_config(std::ostream& os, const RunConfig& cfg) {
    for (const auto& [k, v] : cfg.entries()) os << k << " = " << v << '\n';
}

}  // namespace tsink
