#include "ukt/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "ukt/errors.hpp"

namespace ukt {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") + 1 - b);
}

std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) throw ConfigError("config: bad value for " + key + ": '" + text + "'");
    return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError("config: bad boolean for " + key + ": '" + text + "'");
}

std::string format_cohorts(const std::vector<Cohort>& cohorts) {
    std::string out;
    for (const auto& c : cohorts) {
        if (!out.empty()) out += ',';
        out += std::to_string(c.students) + ':' + format_real(c.ability_mean) + ':' + format_real(c.ability_std);
    }
    return out;
}

std::vector<Cohort> parse_cohorts(const std::string& text) {
    std::vector<Cohort> cohorts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::stringstream parts(item);
        std::string n, mean, sd;
        if (!std::getline(parts, n, ':') || !std::getline(parts, mean, ':') || !std::getline(parts, sd)) {
            throw ConfigError("config: cohort '" + item + "' is not students:mean:std");
        }
        cohorts.push_back({parse_number<std::size_t>("synth.cohorts", trim(n)),
                           parse_number<double>("synth.cohorts", trim(mean)),
                           parse_number<double>("synth.cohorts", trim(sd))});
    }
    if (cohorts.empty()) throw ConfigError("config: synth.cohorts is empty");
    return cohorts;
}

struct Field {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define UKT_FIELD(key, expr, type)                                                              \
    {key, Field{[](RunConfig& c, const std::string& v) { c.expr = parse_number<type>(key, v); }, \
                [](const RunConfig& c) -> std::string {                                         \
                    if constexpr (std::is_floating_point_v<type>) return format_real(c.expr);   \
                    else return std::to_string(c.expr);                                         \
                }}}

#define UKT_BOOL(key, expr)                                                               \
    {key, Field{[](RunConfig& c, const std::string& v) { c.expr = parse_bool(key, v); }, \
                [](const RunConfig& c) -> std::string { return c.expr ? "true" : "false"; }}}

#define UKT_TEXT(key, expr)                                                   \
    {key, Field{[](RunConfig& c, const std::string& v) { c.expr = v; },      \
                [](const RunConfig& c) -> std::string { return c.expr; }}}

// Ordered so that serialization groups keys by section.
const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = {
        UKT_FIELD("train.max_epochs", train.max_epochs, std::size_t),
        UKT_FIELD("train.patience", train.patience, std::size_t),
        UKT_FIELD("train.learning_rate", train.learning_rate, Real),
        UKT_FIELD("train.batch_size", train.batch_size, std::size_t),
        UKT_FIELD("train.seed", train.seed, std::uint64_t),
        {"train.target_auc",
         Field{[](RunConfig& c, const std::string& v) {
                   if (v == "none") c.train.target_auc.reset();
                   else c.train.target_auc = parse_number<Real>("train.target_auc", v);
               },
               [](const RunConfig& c) -> std::string {
                   return c.train.target_auc ? format_real(*c.train.target_auc) : "none";
               }}},
        UKT_FIELD("model.dim", model.dim, std::size_t),
        UKT_FIELD("model.heads", model.heads, std::size_t),
        UKT_FIELD("model.blocks", model.blocks, std::size_t),
        UKT_FIELD("model.max_len", model.max_len, std::size_t),
        UKT_FIELD("model.dropout", model.dropout, Real),
        UKT_FIELD("model.score_scale", model.score_scale, Real),
        UKT_BOOL("model.use_rasch", model.use_rasch),
        UKT_FIELD("model.cl_distance_cap", model.cl_distance_cap, Real),
        {"model.cl_convention",
         Field{[](RunConfig& c, const std::string& v) {
                   if (v == "paper") c.model.cl_convention = ClConvention::Repel;
                   else if (v == "infonce") c.model.cl_convention = ClConvention::InfoNce;
                   else throw ConfigError("config: model.cl_convention must be paper or infonce");
               },
               [](const RunConfig& c) -> std::string {
                   return c.model.cl_convention == ClConvention::Repel ? "paper" : "infonce";
               }}},
        UKT_TEXT("variant.name", variant),
        UKT_FIELD("variant.lambda", lambda, Real),
        {"synth.cohorts",
         Field{[](RunConfig& c, const std::string& v) { c.synth.cohorts = parse_cohorts(v); },
               [](const RunConfig& c) { return format_cohorts(c.synth.cohorts); }}},
        UKT_FIELD("synth.num_kcs", synth.num_kcs, std::size_t),
        UKT_FIELD("synth.questions_per_kc", synth.questions_per_kc, std::size_t),
        UKT_FIELD("synth.min_len", synth.min_len, std::size_t),
        UKT_FIELD("synth.max_len", synth.max_len, std::size_t),
        UKT_FIELD("synth.learning_rate", synth.learning_rate, double),
        UKT_FIELD("synth.learning_rate_std", synth.learning_rate_std, double),
        UKT_FIELD("synth.kc_difficulty_std", synth.kc_difficulty_std, double),
        UKT_FIELD("synth.question_difficulty_std", synth.question_difficulty_std, double),
        UKT_FIELD("synth.sharpness", synth.sharpness, double),
        UKT_FIELD("synth.mean_run_length", synth.mean_run_length, double),
        UKT_FIELD("synth.guess", synth.guess, double),
        UKT_FIELD("synth.slip", synth.slip, double),
        UKT_FIELD("synth.seed", synth.seed, std::uint64_t),
        UKT_TEXT("data.dataset", data.dataset),
        UKT_TEXT("data.format", data.format),
        UKT_FIELD("data.test_fraction", data.test_fraction, double),
        UKT_FIELD("data.folds", data.folds, std::size_t),
        UKT_FIELD("data.fold", data.fold, std::size_t),
        UKT_FIELD("data.folds_used", data.folds_used, std::size_t),
        UKT_FIELD("data.min_len", data.min_len, std::size_t),
        UKT_FIELD("data.max_len", data.max_len, std::size_t),
        UKT_TEXT("run.out", out),
        UKT_TEXT("run.checkpoint", checkpoint),
        UKT_FIELD("run.noise_rate", noise_rate, Real),
        UKT_BOOL("run.quiet", quiet),
    };
    return table;
}

#undef UKT_FIELD
#undef UKT_BOOL
#undef UKT_TEXT

}  // namespace

VariantConfig RunConfig::resolved_variant() const {
    auto v = parse_variant(variant, lambda);
    if (!v) throw ConfigError("unknown variant '" + variant + "' (ukt, no-cl, no-wdist, no-stocemb)");
    return *v;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& [name, field] : fields()) {
        if (name == key) {
            field.set(cfg, value);
            return;
        }
    }
    throw ConfigError("config: unknown key '" + key + "'");
}

RunConfig parse_run_config(const std::string& text, RunConfig base) {
    std::istringstream in(text);
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("config line " + std::to_string(line_no) + ": bad section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        if (!section.empty()) key = section + "." + key;
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        try {
            set_config_value(base, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str(), std::move(base));
}

std::string serialize_run_config(const RunConfig& cfg) {
    std::ostringstream out;
    std::string section;
    for (const auto& [name, field] : fields()) {
        const auto dot = name.find('.');
        const std::string sec = name.substr(0, dot);
        if (sec != section) {
            if (!section.empty()) out << '\n';
            out << '[' << sec << "]\n";
            section = sec;
        }
        out << name.substr(dot + 1) << " = \"" << field.get(cfg) << "\"\n";
    }
    return out.str();
}

}  // namespace ukt
