#include "rbdsde/config.hpp"

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

namespace rbdsde {

using nlohmann::json;

namespace {

json basis_json(const RegressionBasis& b) {
    return {{"kind", to_string(b.kind)}, {"degree", b.degree}, {"bins", b.bins}};
}

json to_json(const ExperimentConfig& c) {
    json problem = {{"name", c.problem}, {"overrides", c.overrides}};
    if (c.expression) {
        const auto& e = *c.expression;
        problem["expression"] = {{"f", e.f},         {"g", e.g},
                                 {"terminal", e.terminal}, {"obstacle", e.obstacle},
                                 {"drift", e.drift}, {"diffusion", e.diffusion},
                                 {"x0", e.x0}};
    }
    json j = {
        {"problem", problem},
        {"grid", {{"T", c.T ? json(*c.T) : json(nullptr)}, {"N", c.N}}},
        {"monte_carlo", {{"paths", c.paths}, {"seed", c.seed}, {"b_index", c.b_index}}},
        {"basis", basis_json(c.basis)},
        {"solver",
         {{"picard_tol", c.solver.picard_tol},
          {"picard_max_iter", c.solver.picard_max_iter},
          {"ridge", c.solver.ridge},
          {"z_scheme", to_string(c.solver.z_scheme)}}},
        {"majorant", {{"c", c.majorant_c}}},
        {"field", {{"x", c.field.x}, {"nodes", c.field.nodes}, {"envelopes", c.field.envelopes}}},
        {"outputs", {{"directory", c.out_dir}}},
    };
    if (c.modulus) {
        const auto& m = *c.modulus;
        j["modulus"] = {{"variant", m.variant},
                        {"parameter", m.parameter},
                        {"z_lipschitz", m.z_lipschitz},
                        {"alpha", m.alpha},
                        {"table_file", m.table_file}};
    }
    return j;
}

// Strict reader: every object is checked for unknown keys and every value
// for its type, with the dotted path in the message.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_.empty() ? "config" : path_, "expected an object");
    }

    void allow(std::initializer_list<const char*> keys) const {
        for (const auto& [k, v] : j_.items()) {
            bool known = false;
            for (const char* a : keys) known = known || k == a;
            if (!known) fail(at(k), "unknown key");
        }
    }

    bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }
    Reader child(const char* key) const { return Reader(j_.at(key), at(key)); }
    const json& raw(const char* key) const { return j_.at(key); }

    template <class T>
    void read(const char* key, T& out) const {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) fail(at(key), "expected a string");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) fail(at(key), "expected a number");
        } else if constexpr (std::is_unsigned_v<T>) {
            if (!v.is_number_unsigned()) fail(at(key), "expected a non-negative integer");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) fail(at(key), "expected an integer");
        }
        out = v.get<T>();
    }

    std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    [[noreturn]] static void fail(const std::string& field, const std::string& what) {
        throw ConfigError("config field '" + field + "': " + what);
    }

private:
    const json& j_;
    std::string path_;
};

template <class T>
std::vector<T> read_list(const Reader& r, const char* key) {
    std::vector<T> out;
    if (!r.has(key)) return out;
    const json& v = r.raw(key);
    if (!v.is_array()) Reader::fail(r.at(key), "expected an array");
    for (std::size_t i = 0; i < v.size(); ++i) {
        const bool ok = std::is_unsigned_v<T> ? v[i].is_number_unsigned() : v[i].is_number_integer();
        if (!ok) Reader::fail(r.at(key) + "[" + std::to_string(i) + "]", "expected an integer");
        out.push_back(v[i].get<T>());
    }
    return out;
}

ExperimentConfig from_json(const json& j) {
    ExperimentConfig c;
    const Reader root(j, "");
    root.allow({"problem", "modulus", "grid", "monte_carlo", "basis", "solver", "majorant", "field", "outputs"});

    if (root.has("problem")) {
        const Reader p = root.child("problem");
        p.allow({"name", "overrides", "expression"});
        p.read("name", c.problem);
        if (p.has("overrides")) {
            const Reader o = p.child("overrides");
            for (const auto& [k, v] : p.raw("overrides").items()) {
                if (!v.is_number()) Reader::fail(o.at(k), "expected a number");
                c.overrides[k] = v.get<double>();
            }
        }
        if (p.has("expression")) {
            const Reader e = p.child("expression");
            e.allow({"f", "g", "terminal", "obstacle", "drift", "diffusion", "x0"});
            ExpressionConfig ex;
            e.read("f", ex.f);
            e.read("g", ex.g);
            e.read("terminal", ex.terminal);
            e.read("obstacle", ex.obstacle);
            e.read("drift", ex.drift);
            e.read("diffusion", ex.diffusion);
            e.read("x0", ex.x0);
            c.expression = ex;
        }
    }
    if (root.has("modulus")) {
        const Reader m = root.child("modulus");
        m.allow({"variant", "parameter", "z_lipschitz", "alpha", "table_file"});
        ModulusConfig mc;
        m.read("variant", mc.variant);
        m.read("parameter", mc.parameter);
        m.read("z_lipschitz", mc.z_lipschitz);
        m.read("alpha", mc.alpha);
        m.read("table_file", mc.table_file);
        if (mc.variant != "lipschitz" && mc.variant != "log" && mc.variant != "loglog" && mc.variant != "tabulated")
            Reader::fail("modulus.variant", "expected lipschitz, log, loglog or tabulated");
        c.modulus = mc;
    }
    if (root.has("grid")) {
        const Reader g = root.child("grid");
        g.allow({"T", "N"});
        if (g.has("T")) {
            double T = 0.0;
            g.read("T", T);
            c.T = T;
        }
        g.read("N", c.N);
    }
    if (root.has("monte_carlo")) {
        const Reader m = root.child("monte_carlo");
        m.allow({"paths", "seed", "b_index"});
        m.read("paths", c.paths);
        m.read("seed", c.seed);
        m.read("b_index", c.b_index);
    }
    if (root.has("basis")) {
        const Reader b = root.child("basis");
        b.allow({"kind", "degree", "bins"});
        std::string kind = to_string(c.basis.kind);
        b.read("kind", kind);
        try {
            c.basis.kind = basis_kind_from_string(kind);
        } catch (const std::invalid_argument&) {
            Reader::fail("basis.kind", "unknown basis '" + kind + "'");
        }
        b.read("degree", c.basis.degree);
        b.read("bins", c.basis.bins);
    }
    if (root.has("solver")) {
        const Reader s = root.child("solver");
        s.allow({"picard_tol", "picard_max_iter", "ridge", "z_scheme"});
        s.read("picard_tol", c.solver.picard_tol);
        s.read("picard_max_iter", c.solver.picard_max_iter);
        s.read("ridge", c.solver.ridge);
        std::string scheme = to_string(c.solver.z_scheme);
        s.read("z_scheme", scheme);
        try {
            c.solver.z_scheme = z_scheme_from_string(scheme);
        } catch (const std::invalid_argument&) {
            Reader::fail("solver.z_scheme", "unknown scheme '" + scheme + "'");
        }
    }
    if (root.has("majorant")) {
        const Reader m = root.child("majorant");
        m.allow({"c"});
        m.read("c", c.majorant_c);
    }
    if (root.has("field")) {
        const Reader f = root.child("field");
        f.allow({"x", "nodes", "envelopes"});
        if (f.has("x")) {
            const json& xs = f.raw("x");
            if (!xs.is_array()) Reader::fail("field.x", "expected an array");
            for (std::size_t i = 0; i < xs.size(); ++i) {
                const std::string where = "field.x[" + std::to_string(i) + "]";
                if (xs[i].is_number()) {
                    c.field.x.push_back({xs[i].get<double>()});
                    continue;
                }
                if (!xs[i].is_array() || xs[i].empty()) Reader::fail(where, "expected a number or a point");
                std::vector<double> point;
                for (const auto& v : xs[i]) {
                    if (!v.is_number()) Reader::fail(where, "expected numbers");
                    point.push_back(v.get<double>());
                }
                c.field.x.push_back(std::move(point));
            }
        }
        c.field.nodes = read_list<std::size_t>(f, "nodes");
        c.field.envelopes = read_list<int>(f, "envelopes");
    }
    if (root.has("outputs")) {
        const Reader o = root.child("outputs");
        o.allow({"directory"});
        o.read("directory", c.out_dir);
    }
    return c;
}

}  // namespace

std::string render_config(const ExperimentConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t k = 0; k + 1 < e.byte && k < text.size(); ++k) {
            if (text[k] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError("config line " + std::to_string(line) + ", column " + std::to_string(col) +
                          ": malformed JSON");
    }
    return from_json(j);
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
    ExperimentConfig c = cfg;
    c.out_dir.clear();
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char ch : render_config(c)) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

ModulusSpec build_modulus(const ModulusConfig& m) {
    ModulusSpec rho;
    if (m.variant == "lipschitz") {
        rho = ModulusSpec::lipschitz(m.parameter);
    } else if (m.variant == "log") {
        rho = ModulusSpec::log_modulus(m.parameter);
    } else if (m.variant == "loglog") {
        rho = ModulusSpec::loglog_modulus(m.parameter);
    } else {
        std::ifstream in(m.table_file);
        if (!in) throw ConfigError("config field 'modulus.table_file': cannot read '" + m.table_file + "'");
        rho = load_tabulated_modulus(in);
    }
    rho.z_lipschitz = m.z_lipschitz;
    rho.alpha = m.alpha;
    return rho;
}

}  // namespace

ProblemSpec build_problem(const ExperimentConfig& cfg) {
    if (cfg.expression || cfg.problem == "expression") {
        if (!cfg.expression) throw ConfigError("config field 'problem.expression': missing");
        const auto& e = *cfg.expression;
        ExpressionProblem def;
        def.f = e.f;
        def.g = e.g;
        def.terminal = e.terminal;
        def.obstacle = e.obstacle;
        def.drift = e.drift;
        def.diffusion = e.diffusion;
        def.x0 = e.x0;
        def.horizon = cfg.T.value_or(1.0);
        def.parameters = cfg.overrides;
        if (cfg.modulus) def.modulus = build_modulus(*cfg.modulus);
        return expression_problem(def);
    }
    if (cfg.problem.empty()) throw ConfigError("missing problem name (--problem or problem.name)");
    auto overrides = cfg.overrides;
    if (cfg.T) overrides["T"] = *cfg.T;
    return builtin_problem(cfg.problem, overrides);
}

}  // namespace rbdsde
