#include "snlp/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "json.hpp"
#include "snlp/simd/kernels.hpp"
#include "toml.hpp"

namespace snlp {

using ojson = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr double kInf = std::numeric_limits<double>::infinity();

std::string located(const std::string& source, long line, long column, const std::string& what) {
    std::ostringstream os;
    os << source;
    if (line > 0) os << ":" << line << ":" << column;
    os << ": " << what;
    return os.str();
}

}  // namespace

ConfigError::ConfigError(const std::string& source, long line, long column, const std::string& what)
    : Error(located(source, line, column, what)), line_(line), column_(column) {}

namespace {

// ---------------------------------------------------------------- config parsing

struct Reader {
    std::string source;

    [[noreturn]] void fail(const toml::node* n, const std::string& what) const {
        long line = 0, col = 0;
        if (n) {
            line = static_cast<long>(n->source().begin.line);
            col = static_cast<long>(n->source().begin.column);
        }
        throw ConfigError(source, line, col, what);
    }

    void check_keys(const toml::table& t, std::initializer_list<std::string_view> allowed,
                    const std::string& where) const {
        for (auto&& [k, v] : t) {
            if (std::find(allowed.begin(), allowed.end(), k.str()) == allowed.end())
                fail(&v, "unknown key '" + std::string(k.str()) + "' in " + where);
        }
    }

    std::optional<double> number(const toml::table& t, std::string_view key, const std::string& where) const {
        const toml::node* n = t.get(key);
        if (!n) return std::nullopt;
        if (!n->is_number()) fail(n, where + "." + std::string(key) + " must be a number");
        double v = n->value<double>().value();
        if (!std::isfinite(v)) fail(n, where + "." + std::string(key) + " must be finite");
        return v;
    }

    double number_or(const toml::table& t, std::string_view key, const std::string& where, double def) const {
        return number(t, key, where).value_or(def);
    }

    double required(const toml::table& t, std::string_view key, const std::string& where) const {
        auto v = number(t, key, where);
        if (!v) fail(&t, where + " needs '" + std::string(key) + "'");
        return *v;
    }

    std::optional<std::int64_t> integer(const toml::table& t, std::string_view key, const std::string& where) const {
        const toml::node* n = t.get(key);
        if (!n) return std::nullopt;
        if (!n->is_integer()) fail(n, where + "." + std::string(key) + " must be an integer");
        return n->value<std::int64_t>().value();
    }

    std::optional<std::string> string(const toml::table& t, std::string_view key, const std::string& where) const {
        const toml::node* n = t.get(key);
        if (!n) return std::nullopt;
        if (!n->is_string()) fail(n, where + "." + std::string(key) + " must be a string");
        return n->value<std::string>().value();
    }

    std::optional<bool> boolean(const toml::table& t, std::string_view key, const std::string& where) const {
        const toml::node* n = t.get(key);
        if (!n) return std::nullopt;
        if (!n->is_boolean()) fail(n, where + "." + std::string(key) + " must be true or false");
        return n->value<bool>().value();
    }

    std::vector<double> numbers(const toml::table& t, std::string_view key, const std::string& where) const {
        const toml::node* n = t.get(key);
        if (!n) fail(&t, where + " needs '" + std::string(key) + "'");
        const toml::array* arr = n->as_array();
        if (!arr) fail(n, where + "." + std::string(key) + " must be an array of numbers");
        std::vector<double> out;
        for (const auto& e : *arr) {
            if (!e.is_number()) fail(&e, where + "." + std::string(key) + " must contain numbers only");
            out.push_back(e.value<double>().value());
        }
        return out;
    }

    std::vector<StepLevel> levels(const toml::table& t, const std::string& where) const {
        const toml::node* n = t.get("levels");
        if (!n) fail(&t, where + " needs 'levels' = [[b, delta], ...]");
        const toml::array* arr = n->as_array();
        if (!arr) fail(n, where + ".levels must be an array of [b, delta] pairs");
        std::vector<StepLevel> out;
        for (const auto& e : *arr) {
            const toml::array* pair = e.as_array();
            if (!pair || pair->size() != 2 || !(*pair)[0].is_number() || !(*pair)[1].is_number())
                fail(&e, where + ".levels entries must be [b, delta] pairs of numbers");
            out.push_back({(*pair)[0].value<double>().value(), (*pair)[1].value<double>().value()});
        }
        return out;
    }

    const toml::table* block(const toml::table& root, std::string_view key) const {
        const toml::node* n = root.get(key);
        if (!n) return nullptr;
        const toml::table* t = n->as_table();
        if (!t) fail(n, "'" + std::string(key) + "' must be a table");
        return t;
    }
};

toml::array levels_toml(const std::vector<StepLevel>& ls) {
    toml::array a;
    for (const auto& l : ls) a.push_back(toml::array{l.b, l.delta});
    return a;
}

toml::array numbers_toml(const std::vector<double>& v) {
    toml::array a;
    for (double d : v) a.push_back(d);
    return a;
}

Reflection parse_reflect(const Reader& rd, const toml::table& t, const std::string& where) {
    auto s = rd.string(t, "reflect", where);
    if (!s || *s == "none") return Reflection::None;
    if (*s == "infimum") return Reflection::AtInfimum;
    if (*s == "supremum") return Reflection::AtSupremum;
    rd.fail(t.get("reflect"), where + ".reflect must be \"none\", \"infimum\" or \"supremum\"");
}

const std::set<std::string> kQueryTypes = {"two_sided_up",     "two_sided_down",       "one_sided_down",
                                           "one_sided_up",     "reflected_exit",       "resolvent",
                                           "resolvent_upward", "resolvent_half_line", "multiplicativity",
                                           "q_consistency"};

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
    Reader rd{source};
    toml::table root;
    try {
        root = toml::parse(text, source);
    } catch (const toml::parse_error& e) {
        throw ConfigError(source, static_cast<long>(e.source().begin.line), static_cast<long>(e.source().begin.column),
                          std::string(e.description()));
    }
    rd.check_keys(root, {"model", "rate", "omega", "grid", "mc", "query"}, "the top level");

    ExperimentConfig cfg;
    cfg.source = source;
    toml::table eff;

    // [model]
    const toml::table* m = rd.block(root, "model");
    if (!m) throw ConfigError(source, 0, 0, "missing [model] block");
    auto family = rd.string(*m, "family", "model");
    if (!family) rd.fail(m, "model needs 'family' (\"brownian\" or \"cramer_lundberg\")");
    cfg.model_family = *family;
    try {
        if (*family == "brownian") {
            rd.check_keys(*m, {"family", "mu", "sigma"}, "[model]");
            double mu = rd.number_or(*m, "mu", "model", 0.0);
            double sigma = rd.required(*m, "sigma", "model");
            cfg.model = ModelSpec::brownian(mu, sigma);
            eff.insert("model", toml::table{{"family", "brownian"}, {"mu", mu}, {"sigma", sigma}});
        } else if (*family == "cramer_lundberg") {
            rd.check_keys(*m, {"family", "c", "lambda", "alpha"}, "[model]");
            double c = rd.required(*m, "c", "model");
            double lambda = rd.required(*m, "lambda", "model");
            double alpha = rd.required(*m, "alpha", "model");
            cfg.model = ModelSpec::cramer_lundberg(c, lambda, alpha);
            eff.insert("model", toml::table{{"family", "cramer_lundberg"}, {"c", c}, {"lambda", lambda}, {"alpha", alpha}});
        } else {
            rd.fail(m->get("family"), "model.family must be \"brownian\" or \"cramer_lundberg\"");
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        rd.fail(m, e.what());
    }

    // [rate]
    const toml::table* r = rd.block(root, "rate");
    cfg.has_rate_block = r != nullptr;
    if (r) {
        std::string kind = rd.string(*r, "kind", "rate").value_or("zero");
        try {
            if (kind == "zero") {
                rd.check_keys(*r, {"kind"}, "[rate]");
                eff.insert("rate", toml::table{{"kind", "zero"}});
            } else if (kind == "steps") {
                rd.check_keys(*r, {"kind", "levels"}, "[rate]");
                auto ls = rd.levels(*r, "rate");
                cfg.rate = RateFunction::steps(ls);
                eff.insert("rate", toml::table{{"kind", "steps"}, {"levels", levels_toml(ls)}});
            } else if (kind == "sampled") {
                rd.check_keys(*r, {"kind", "xs", "values"}, "[rate]");
                auto xs = rd.numbers(*r, "xs", "rate"), vs = rd.numbers(*r, "values", "rate");
                cfg.rate = RateFunction::sampled(xs, vs);
                eff.insert("rate",
                           toml::table{{"kind", "sampled"}, {"xs", numbers_toml(xs)}, {"values", numbers_toml(vs)}});
            } else {
                rd.fail(r->get("kind"), "rate.kind must be \"zero\", \"steps\" or \"sampled\"");
            }
            cfg.rate.check_against(cfg.model);
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            rd.fail(r, e.what());
        }
        if (cfg.rate.kind() == RateFunction::Kind::Steps && !cfg.rate.deltas_increasing())
            cfg.warnings.push_back("rate: step increments delta are not strictly increasing");
    } else {
        eff.insert("rate", toml::table{{"kind", "zero"}});
    }

    // [omega]
    const toml::table* o = rd.block(root, "omega");
    cfg.has_omega_block = o != nullptr;
    if (o) {
        std::string kind = rd.string(*o, "kind", "omega").value_or("constant");
        try {
            toml::table e;
            if (kind == "constant") {
                rd.check_keys(*o, {"kind", "value", "left_tail"}, "[omega]");
                double v = rd.number_or(*o, "value", "omega", 0.0);
                cfg.omega = OmegaFunction::constant(v);
                e = toml::table{{"kind", "constant"}, {"value", v}};
            } else if (kind == "steps") {
                rd.check_keys(*o, {"kind", "base", "levels", "left_tail"}, "[omega]");
                double base = rd.number_or(*o, "base", "omega", 0.0);
                auto ls = rd.levels(*o, "omega");
                cfg.omega = OmegaFunction::steps(base, ls);
                e = toml::table{{"kind", "steps"}, {"base", base}, {"levels", levels_toml(ls)}};
            } else if (kind == "sampled") {
                rd.check_keys(*o, {"kind", "xs", "values", "left_tail"}, "[omega]");
                auto xs = rd.numbers(*o, "xs", "omega"), vs = rd.numbers(*o, "values", "omega");
                cfg.omega = OmegaFunction::sampled(xs, vs);
                e = toml::table{{"kind", "sampled"}, {"xs", numbers_toml(xs)}, {"values", numbers_toml(vs)}};
            } else {
                rd.fail(o->get("kind"), "omega.kind must be \"constant\", \"steps\" or \"sampled\"");
            }
            if (auto p = rd.number(*o, "left_tail", "omega")) {
                cfg.omega = cfg.omega.with_left_tail(*p);
                e.insert("left_tail", *p);
            }
            eff.insert("omega", std::move(e));
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            rd.fail(o, e.what());
        }
    } else {
        eff.insert("omega", toml::table{{"kind", "constant"}, {"value", 0.0}});
    }

    // [grid]
    if (const toml::table* g = rd.block(root, "grid")) {
        rd.check_keys(*g, {"lower", "upper", "n_per_unit", "tail_length", "tail_per_unit"}, "[grid]");
        cfg.grid.lower = rd.number_or(*g, "lower", "grid", cfg.grid.lower);
        cfg.grid.upper = rd.number_or(*g, "upper", "grid", cfg.grid.upper);
        cfg.grid.n_per_unit = static_cast<int>(rd.integer(*g, "n_per_unit", "grid").value_or(cfg.grid.n_per_unit));
        cfg.grid.tail_length = rd.number_or(*g, "tail_length", "grid", cfg.grid.tail_length);
        cfg.grid.tail_per_unit =
            static_cast<int>(rd.integer(*g, "tail_per_unit", "grid").value_or(cfg.grid.tail_per_unit));
        if (!(cfg.grid.upper > cfg.grid.lower)) rd.fail(g, "grid.upper must exceed grid.lower");
        if (cfg.grid.n_per_unit < 4 || cfg.grid.tail_per_unit < 4) rd.fail(g, "grid densities must be >= 4");
        if (!(cfg.grid.tail_length > 0.0)) rd.fail(g, "grid.tail_length must be positive");
    }
    eff.insert("grid", toml::table{{"lower", cfg.grid.lower},
                                   {"upper", cfg.grid.upper},
                                   {"n_per_unit", cfg.grid.n_per_unit},
                                   {"tail_length", cfg.grid.tail_length},
                                   {"tail_per_unit", cfg.grid.tail_per_unit}});

    // [mc]
    if (const toml::table* mc = rd.block(root, "mc")) {
        rd.check_keys(*mc, {"enabled", "dt", "n_paths", "seed", "horizon", "workers", "abs_margin"}, "[mc]");
        cfg.mc.enabled = rd.boolean(*mc, "enabled", "mc").value_or(true);
        cfg.mc.path.dt = rd.number_or(*mc, "dt", "mc", cfg.mc.path.dt);
        cfg.mc.path.n_paths = static_cast<long>(rd.integer(*mc, "n_paths", "mc").value_or(cfg.mc.path.n_paths));
        auto seed = rd.integer(*mc, "seed", "mc").value_or(42);
        if (seed < 0) rd.fail(mc->get("seed"), "mc.seed must be >= 0");
        cfg.mc.path.seed = static_cast<std::uint64_t>(seed);
        cfg.mc.path.horizon = rd.number_or(*mc, "horizon", "mc", cfg.mc.path.horizon);
        cfg.mc.path.workers = static_cast<int>(rd.integer(*mc, "workers", "mc").value_or(1));
        cfg.mc.abs_margin = rd.number_or(*mc, "abs_margin", "mc", cfg.mc.abs_margin);
        if (cfg.mc.path.n_paths <= 0) rd.fail(mc->get("n_paths"), "mc.n_paths must be positive");
        if (!(cfg.mc.path.dt > 0.0)) rd.fail(mc->get("dt"), "mc.dt must be positive");
        if (!(cfg.mc.path.horizon > 0.0)) rd.fail(mc->get("horizon"), "mc.horizon must be positive");
        if (cfg.mc.path.workers < 1) rd.fail(mc->get("workers"), "mc.workers must be >= 1");
        if (cfg.mc.abs_margin < 0.0) rd.fail(mc->get("abs_margin"), "mc.abs_margin must be >= 0");
    }
    eff.insert("mc", toml::table{{"enabled", cfg.mc.enabled},
                                 {"dt", cfg.mc.path.dt},
                                 {"n_paths", static_cast<std::int64_t>(cfg.mc.path.n_paths)},
                                 {"seed", static_cast<std::int64_t>(cfg.mc.path.seed)},
                                 {"horizon", cfg.mc.path.horizon},
                                 {"workers", cfg.mc.path.workers},
                                 {"abs_margin", cfg.mc.abs_margin}});

    // [[query]]
    toml::array eq;
    if (const toml::node* qn = root.get("query")) {
        const toml::array* arr = qn->as_array();
        if (!arr) rd.fail(qn, "queries must be written as [[query]] tables");
        for (const auto& e : *arr) {
            const toml::table* t = e.as_table();
            if (!t) rd.fail(&e, "queries must be written as [[query]] tables");
            const std::string where = "query";
            rd.check_keys(*t, {"type", "x", "a", "lower", "y", "z", "bin_width", "reflect"}, "[[query]]");
            QueryConfig q;
            q.line = static_cast<long>(t->source().begin.line);
            auto type = rd.string(*t, "type", where);
            if (!type) rd.fail(t, "query needs 'type'");
            if (!kQueryTypes.count(*type)) rd.fail(t->get("type"), "unknown query type '" + *type + "'");
            q.type = *type;
            q.x = rd.required(*t, "x", where);
            q.a = rd.number(*t, "a", where);
            q.lower = rd.number(*t, "lower", where);
            q.y = rd.number(*t, "y", where);
            q.z = rd.number(*t, "z", where);
            q.bin_width = rd.number_or(*t, "bin_width", where, 0.1);
            q.reflect = parse_reflect(rd, *t, where);
            bool needs_a = q.type != "one_sided_down" && q.type != "resolvent_half_line" && q.type != "multiplicativity";
            bool needs_y = q.type.rfind("resolvent", 0) == 0 || q.type == "multiplicativity";
            if (needs_a && !q.a) rd.fail(t, "query type '" + q.type + "' needs 'a'");
            if (needs_y && !q.y) rd.fail(t, "query type '" + q.type + "' needs 'y'");
            if (q.type == "multiplicativity" && !q.z) rd.fail(t, "query type 'multiplicativity' needs 'z'");
            if ((q.type == "reflected_exit" || q.type == "q_consistency") && q.reflect == Reflection::None)
                rd.fail(t, "query type '" + q.type + "' needs reflect = \"infimum\" or \"supremum\"");
            double right = q.type == "multiplicativity" ? q.z.value_or(0.0) : q.a.value_or(-kInf);
            if (right > cfg.grid.upper + 1e-12) rd.fail(t, "query level beyond grid.upper; extend grid");
            if (!(q.bin_width > 0.0)) rd.fail(t->get("bin_width"), "query.bin_width must be positive");
            if (q.lower && *q.lower < cfg.grid.lower - 1e-12) rd.fail(t->get("lower"), "query.lower below grid.lower");

            toml::table te{{"type", q.type}, {"x", q.x}};
            if (q.a) te.insert("a", *q.a);
            te.insert("lower", q.lower.value_or(cfg.grid.lower));
            if (q.y) te.insert("y", *q.y);
            if (q.z) te.insert("z", *q.z);
            if (q.type.rfind("resolvent", 0) == 0) te.insert("bin_width", q.bin_width);
            te.insert("reflect", reflection_name(q.reflect));
            eq.push_back(std::move(te));
            cfg.queries.push_back(q);
        }
    }
    if (!eq.empty()) eff.insert("query", std::move(eq));

    // alignment of breakpoints with the grid
    std::vector<double> pts = cfg.rate.jumps();
    for (double b : cfg.omega.jumps()) pts.push_back(b);
    Grid g = Grid::with_density(cfg.grid.lower, cfg.grid.upper, cfg.grid.n_per_unit);
    for (double b : misaligned_jumps(g, pts)) {
        std::ostringstream os;
        os.precision(12);
        os << "breakpoint " << b << " is not on a grid node (h=" << g.h() << "); accuracy drops to O(h)";
        cfg.warnings.push_back(os.str());
    }

    std::ostringstream os;
    os << eff;
    cfg.effective_toml = os.str() + "\n";
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, 0, 0, "cannot read config file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

// ---------------------------------------------------------------- tables

namespace {

Grid config_grid(const ExperimentConfig& cfg) {
    return Grid::with_density(cfg.grid.lower, cfg.grid.upper, cfg.grid.n_per_unit);
}

double default_q(const ExperimentConfig& cfg) { return cfg.omega.is_constant() ? cfg.omega.constant_value() : 0.0; }

// Derivative families: values from the derivative table, forward differences as their slope.
ScaleTable prime_of(const ScaleTable& t, Family f) {
    ScaleTable out = t;
    out.family = f;
    out.table = t.derivative;
    const Grid& g = t.grid();
    std::vector<double> d(static_cast<std::size_t>(g.size()));
    for (int i = 0; i < g.size(); ++i) {
        int j = std::min(i, g.n() - 1);
        d[static_cast<std::size_t>(i)] = (t.derivative.left(j + 1) - t.derivative.right(j)) / g.h();
    }
    out.derivative.values = std::move(d);
    out.derivative.left_limits.clear();
    out.extension = LeftExtension::Zero;
    return out;
}

}  // namespace

ScaleTable build_family(const ExperimentConfig& cfg, Family family, std::optional<double> q_opt) {
    const double q = q_opt.value_or(default_q(cfg));
    const Grid g = config_grid(cfg);
    const std::string name = family_name(family);
    auto need_omega = [&]() {
        if (!cfg.has_omega_block) throw PreconditionError("family " + name + " needs an [omega] block");
    };
    auto need_steps = [&]() {
        if (!cfg.has_rate_block || cfg.rate.kind() != RateFunction::Kind::Steps)
            throw PreconditionError("family " + name + " needs a [rate] block with kind = \"steps\"");
    };
    switch (family) {
        case Family::LevelW: return level_scale(cfg.model, q, cfg.rate, g).w;
        case Family::LevelZ: return level_scale(cfg.model, q, cfg.rate, g).z;
        case Family::LevelWPrime: return prime_of(level_scale(cfg.model, q, cfg.rate, g).w, family);
        case Family::LevelZPrime: return prime_of(level_scale(cfg.model, q, cfg.rate, g).z, family);
        case Family::MultiW_k: need_steps(); return multi_refracted_scale(cfg.model, q, cfg.rate, g).w;
        case Family::MultiZ_k: need_steps(); return multi_refracted_scale(cfg.model, q, cfg.rate, g).z;
        case Family::UFunc: {
            if (!cfg.has_rate_block) throw PreconditionError("family UFunc needs a [rate] block");
            if (cfg.grid.lower > cfg.rate.d_prime())
                throw PreconditionError("family UFunc needs grid.lower <= the first rate breakpoint");
            return u_function(cfg.model, q, cfg.rate, g);
        }
        case Family::OmegaW:
        case Family::OmegaZ: {
            need_omega();
            ScalePair p = omega_level_scale(cfg.model, cfg.omega, RateFunction::zero(), g, q_opt.value_or(0.0));
            return family == Family::OmegaW ? p.w : p.z;
        }
        case Family::OmegaLevelW:
        case Family::OmegaLevelZ: {
            need_omega();
            if (!cfg.has_rate_block) throw PreconditionError("family " + name + " needs a [rate] block");
            ScalePair p = omega_level_scale(cfg.model, cfg.omega, cfg.rate, g, q_opt.value_or(0.0));
            return family == Family::OmegaLevelW ? p.w : p.z;
        }
        case Family::OmegaH:
        case Family::OmegaLevelH: {
            need_omega();
            if (!cfg.omega.left_tail_value()) throw PreconditionError("family " + name + " needs [omega] left_tail");
            if (family == Family::OmegaLevelH && !cfg.has_rate_block)
                throw PreconditionError("family " + name + " needs a [rate] block");
            Grid hg = Grid::with_density(0.0, cfg.grid.upper, cfg.grid.n_per_unit);
            return omega_h(cfg.model, cfg.omega, family == Family::OmegaH ? RateFunction::zero() : cfg.rate, hg);
        }
    }
    throw UnsupportedError("unknown family");
}

std::string table_csv(const ScaleTable& t) {
    std::ostringstream os;
    os << "# family=" << family_name(t.family);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", t.shift);
    os << " shift=" << buf;
    std::snprintf(buf, sizeof buf, "%.17g", t.q_shift);
    os << " q=" << buf << " params=" << t.params << "\n";
    os << "x,value,right_derivative\n";
    const Grid& g = t.grid();
    for (int i = 0; i < g.size(); ++i) {
        char line[128];
        std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g\n", g.node(i), t.table.right(i), t.derivative.right(i));
        os << line;
    }
    return os.str();
}

void write_table_csv(const ScaleTable& t, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << table_csv(t);
}

TableCsv read_table_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path);
    TableCsv t;
    std::string line;
    std::getline(in, t.header);
    std::getline(in, line);
    if (line != "x,value,right_derivative") throw Error(path + ": unexpected column header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        double a, b, c;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &a, &b, &c) != 3) throw Error(path + ": malformed row");
        t.x.push_back(a);
        t.value.push_back(b);
        t.right_derivative.push_back(c);
    }
    return t;
}

// ---------------------------------------------------------------- queries

namespace {

std::string utc_now() {
    std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

ojson toml_to_json(const std::string& toml_text) {
    toml::table t = toml::parse(toml_text);
    std::ostringstream os;
    os << toml::json_formatter{t};
    return ojson::parse(os.str());
}

ojson num_or_null(std::optional<double> v) { return v ? ojson(*v) : ojson(nullptr); }

ojson estimate_json(const Estimate& e) {
    ojson j;
    j["mean"] = e.mean;
    j["std_error"] = e.std_error;
    j["n"] = e.n;
    j["truncated_fraction"] = e.truncated_fraction;
    j["dt"] = e.dt;
    j["seed"] = e.seed;
    j["workers"] = e.workers;
    j["warnings"] = e.warnings;
    return j;
}

// Composite Simpson over panels cut at the density's jump points; panel ends are taken
// as one-sided limits.
double bin_mass(const std::function<double(double)>& f, double lo, double hi, std::vector<double> cuts) {
    if (!(hi > lo)) return 0.0;
    cuts.push_back(lo);
    cuts.push_back(hi);
    std::sort(cuts.begin(), cuts.end());
    constexpr int m = 16;
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        double u = std::max(cuts[k], lo), v = std::min(cuts[k + 1], hi);
        if (!(v > u)) continue;
        double step = (v - u) / m, sum = 0.0;
        for (int i = 0; i <= m; ++i) {
            double y = i == 0 ? std::nextafter(u, v) : i == m ? std::nextafter(v, u) : u + i * step;
            sum += (i == 0 || i == m ? 1.0 : i % 2 ? 4.0 : 2.0) * f(y);
        }
        total += sum * step / 3.0;
    }
    return total;
}

struct Engines {
    const ExperimentConfig& cfg;
    SolverOptions so;
    PathConfig pc;
    std::map<Reflection, std::unique_ptr<FluctuationSolver>> solvers;
    std::map<Reflection, std::unique_ptr<MonteCarlo>> mcs;

    ProcessKind kind(Reflection r) const { return ProcessKind{cfg.model, cfg.rate, cfg.omega, r}; }
    const FluctuationSolver& solver(Reflection r) {
        auto& s = solvers[r];
        if (!s) s = std::make_unique<FluctuationSolver>(kind(r), so);
        return *s;
    }
    const MonteCarlo& mc(Reflection r) {
        auto& m = mcs[r];
        if (!m) m = std::make_unique<MonteCarlo>(kind(r), pc);
        return *m;
    }
};

struct Answer {
    double value = 0.0;
    std::string formula_id;
    std::optional<Estimate> mc;
    std::optional<double> tolerance;  // internal checks without Monte Carlo
    double check = 0.0;
};

Answer answer(Engines& en, const QueryConfig& q, bool run_mc) {
    const double lower = q.lower.value_or(en.cfg.grid.lower);
    const double a = q.a.value_or(kInf);
    Answer ans;
    const std::string& t = q.type;
    if (t == "two_sided_up" || t == "two_sided_down") {
        bool up = t == "two_sided_up";
        ExitResult e = en.solver(Reflection::None).exit_two_sided(q.x, lower, a);
        ans.value = up ? e.up : e.down;
        ans.formula_id = e.formula_id + (up ? ".up" : ".down");
        if (run_mc) ans.mc = en.mc(Reflection::None).exit_two_sided(q.x, lower, a, up);
    } else if (t == "one_sided_down") {
        ans.value = en.solver(Reflection::None).exit_one_sided_down(q.x, lower, &ans.formula_id);
        if (run_mc) ans.mc = en.mc(Reflection::None).exit_one_sided_down(q.x, lower);
    } else if (t == "one_sided_up") {
        ans.value = en.solver(Reflection::None).exit_one_sided_up(q.x, a, &ans.formula_id);
        if (run_mc) ans.mc = en.mc(Reflection::None).exit_one_sided_up(q.x, a);
    } else if (t == "reflected_exit") {
        ans.value = en.solver(q.reflect).reflected_exit(q.x, a, &ans.formula_id);
        if (run_mc) ans.mc = en.mc(q.reflect).reflected_exit(q.x, a);
    } else if (t == "resolvent" || t == "resolvent_half_line" || t == "resolvent_upward") {
        double lo = *q.y - 0.5 * q.bin_width, hi = *q.y + 0.5 * q.bin_width;
        double atom = 0.0;
        std::function<double(double)> f;
        if (q.reflect != Reflection::None) {
            const FluctuationSolver& s = en.solver(q.reflect);
            lo = std::max(lo, 0.0);
            hi = std::min(hi, a);
            ResolventDensity r0 = s.reflected_resolvent_density(q.x, lo, a);
            ans.formula_id = r0.formula_id;
            if (lo == 0.0) atom = r0.atom;
            f = [&s, &q, a](double y) { return s.reflected_resolvent_density(q.x, y, a).density; };
            if (run_mc) ans.mc = en.mc(q.reflect).reflected_occupation(q.x, lo, hi, a);
        } else if (t == "resolvent_upward") {
            const FluctuationSolver& s = en.solver(Reflection::None);
            hi = std::min(hi, a);
            ans.formula_id = s.resolvent_density_upward(q.x, lo, a).formula_id;
            f = [&s, &q, a](double y) { return s.resolvent_density_upward(q.x, y, a).density; };
            if (run_mc) ans.mc = en.mc(Reflection::None).occupation(q.x, lo, hi, -kInf, a);
        } else {
            const FluctuationSolver& s = en.solver(Reflection::None);
            double top = t == "resolvent_half_line" ? kInf : a;
            lo = std::max(lo, lower);
            hi = std::min(hi, top);
            ans.formula_id = s.resolvent_density(q.x, *q.y, lower, top).formula_id;
            f = [&s, &q, lower, top](double y) { return s.resolvent_density(q.x, y, lower, top).density; };
            if (run_mc) ans.mc = en.mc(Reflection::None).occupation(q.x, lo, hi, lower, top);
        }
        std::vector<double> cuts = en.cfg.rate.jumps();
        for (double b : en.cfg.omega.jumps()) cuts.push_back(b);
        if (q.reflect == Reflection::AtSupremum)
            for (double& c : cuts) c = a - c;
        cuts.push_back(q.x);
        ans.value = atom + bin_mass(f, lo, hi, cuts);
        ans.formula_id += ".bin";
    } else if (t == "multiplicativity") {
        bool refl = q.reflect == Reflection::AtInfimum;
        if (q.reflect == Reflection::AtSupremum)
            throw UnsupportedError("multiplicativity is defined for the two-sided and infimum-reflected exits");
        auto p = en.solver(Reflection::None).multiplicativity(q.x, *q.y, *q.z, refl);
        ans.value = p.first;
        ans.check = std::abs(p.first - p.second);
        ans.tolerance = 1e-6;
        ans.formula_id = refl ? "multiplicativity.reflected" : "multiplicativity.two_sided";
    } else if (t == "q_consistency") {
        const FluctuationSolver& s = en.solver(q.reflect);
        ans.value = s.consistency_qresolvent(q.x, a);
        ans.check = std::abs(ans.value - s.reflected_exit(q.x, a));
        ans.tolerance = 1e-4;
        ans.formula_id = "q_resolvent_consistency";
    }
    return ans;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opt) {
    Engines en{cfg, {}, cfg.mc.path, {}, {}};
    en.so.n_per_unit = cfg.grid.n_per_unit;
    en.so.upper = cfg.grid.upper;
    en.so.tail_length = cfg.grid.tail_length;
    en.so.tail_per_unit = cfg.grid.tail_per_unit;
    if (opt.workers) en.pc.workers = *opt.workers;
    const bool run_mc = opt.mc && cfg.mc.enabled;

    ojson report;
    report["tool"] = "snlp";
    report["version"] = kVersion;
    report["generated_at"] = opt.timestamp.empty() ? utc_now() : opt.timestamp;
    report["config"] = toml_to_json(cfg.effective_toml);
    ojson env;
    env["simd"] = simd::level_name(simd::active_level());
    env["grid"] = {{"lower", cfg.grid.lower},
                   {"upper", cfg.grid.upper},
                   {"n_per_unit", cfg.grid.n_per_unit},
                   {"h", 1.0 / cfg.grid.n_per_unit},
                   {"tail_length", cfg.grid.tail_length},
                   {"tail_per_unit", cfg.grid.tail_per_unit}};
    env["tolerances"] = {{"tail_stabilization", kTailTolerance},
                         {"mc_sigmas", 3.0},
                         {"mc_abs_margin", cfg.mc.abs_margin},
                         {"multiplicativity", 1e-6},
                         {"q_consistency", 1e-4}};
    env["mc"] = {{"enabled", run_mc},
                 {"seed", cfg.mc.path.seed},
                 {"workers", en.pc.workers},
                 {"dt", cfg.mc.path.dt},
                 {"n_paths", cfg.mc.path.n_paths}};
    report["environment"] = env;
    report["warnings"] = cfg.warnings;

    bool all_pass = true;
    ojson records = ojson::array();
    for (const QueryConfig& q : cfg.queries) {
        ojson rec;
        rec["kind"] = q.type;
        rec["params"] = {{"lower", q.lower.value_or(cfg.grid.lower)},
                         {"y", num_or_null(q.y)},
                         {"z", num_or_null(q.z)},
                         {"bin_width", q.bin_width},
                         {"reflect", reflection_name(q.reflect)}};
        rec["x"] = q.x;
        rec["a"] = num_or_null(q.a);
        bool pass = false;
        try {
            Answer ans = answer(en, q, run_mc);
            rec["value"] = ans.value;
            rec["formula_id"] = ans.formula_id;
            if (ans.mc) {
                const Estimate& e = *ans.mc;
                double diff = std::abs(ans.value - e.mean);
                rec["mc"] = estimate_json(e);
                rec["abs_diff"] = diff;
                rec["z_score"] = e.std_error > 0.0 ? ojson(diff / e.std_error) : ojson(nullptr);
                pass = std::isfinite(ans.value) && diff <= 3.0 * e.std_error + cfg.mc.abs_margin;
            } else {
                rec["mc"] = nullptr;
                rec["abs_diff"] = ans.tolerance ? ojson(ans.check) : ojson(nullptr);
                rec["z_score"] = nullptr;
                pass = std::isfinite(ans.value) && (!ans.tolerance || ans.check <= *ans.tolerance);
            }
        } catch (const Error& e) {
            rec["value"] = nullptr;
            rec["formula_id"] = nullptr;
            rec["mc"] = nullptr;
            rec["abs_diff"] = nullptr;
            rec["z_score"] = nullptr;
            rec["error"] = e.what();
        }
        rec["pass"] = pass;
        all_pass = all_pass && pass;
        records.push_back(std::move(rec));
    }
    report["queries"] = std::move(records);
    report["all_pass"] = all_pass;

    RunResult out;
    out.report_json = report.dump(2) + "\n";
    out.all_pass = all_pass;
    try {
        ScalePair p = en.solver(Reflection::None).tables(cfg.grid.lower);
        out.tables.push_back(std::move(p.w));
        out.tables.push_back(std::move(p.z));
    } catch (const Error&) {
    }
    return out;
}

// ---------------------------------------------------------------- validate

ValidationResult validate_config(const ExperimentConfig& cfg) {
    ojson checks = ojson::array();
    bool all = true;
    auto add = [&](const std::string& name, double value, double tol, bool pass) {
        checks.push_back({{"name", name}, {"value", value}, {"tolerance", tol}, {"pass", pass}});
        all = all && pass;
    };
    auto guarded = [&](const std::string& name, const std::function<void()>& fn) {
        try {
            fn();
        } catch (const Error& e) {
            checks.push_back({{"name", name}, {"error", e.what()}, {"pass", false}});
            all = false;
        }
    };
    const double q = default_q(cfg);

    guarded("laplace_residual", [&] {
        ScaleFunction sf(cfg.model, q);
        double worst = 0.0;
        for (double off : {1.5, 2.0, 3.0, 5.0, 8.0}) {
            double theta = sf.phi() + off;
            double X = 40.0 / off;
            double integral = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
                [&](double x) { return std::exp(-theta * x) * sf.w(x); }, 0.0, X, 15, 1e-14);
            double expect = 1.0 / (laplace_exponent(cfg.model, theta) - q);
            worst = std::max(worst, std::abs(integral - expect) / std::abs(expect));
        }
        add("laplace_residual", worst, 1e-6, worst <= 1e-6);
    });

    const double top = std::min(cfg.grid.upper, cfg.grid.lower + 4.0);
    guarded("reduction_zero_rate", [&] {
        Grid g = Grid::with_density(cfg.grid.lower, top, cfg.grid.n_per_unit);
        ScalePair p = level_scale(cfg.model, q, RateFunction::zero(), g);
        ScaleFunction sf(cfg.model, q);
        double e = 0.0;
        for (int i = 0; i < g.size(); ++i) {
            double u = g.node(i) - g.d();
            e = std::max({e, std::abs(p.w.table.values[i] - sf.w(u)), std::abs(p.z.table.values[i] - sf.z(u))});
        }
        add("reduction_zero_rate", e, 5e-6, e <= 5e-6);
    });

    SolverOptions so;
    so.n_per_unit = cfg.grid.n_per_unit;
    so.upper = cfg.grid.upper;
    so.tail_length = cfg.grid.tail_length;
    so.tail_per_unit = cfg.grid.tail_per_unit;
    FluctuationSolver s(ProcessKind{cfg.model, cfg.rate, cfg.omega, Reflection::None}, so);
    const double lo = cfg.grid.lower, up = cfg.grid.upper;

    guarded("monotone_tables", [&] {
        ScalePair p = s.tables(lo);
        double worst = 0.0;
        for (const ScaleTable* t : {&p.w, &p.z})
            for (std::size_t i = 1; i < t->table.values.size(); ++i)
                worst = std::min(worst, t->table.values[i] - t->table.left(static_cast<int>(i) - 1));
        add("monotone_tables", worst, -1e-8, worst >= -1e-8);
    });

    guarded("exit_range", [&] {
        double worst = 0.0;
        for (int i = 0; i <= 16; ++i) {
            ExitResult e = s.exit_two_sided(lo + (up - lo) * i / 16, lo, up);
            worst = std::min({worst, e.up, e.down, 1.0 - e.up - e.down});
        }
        add("exit_range", worst, -1e-8, worst >= -1e-8);
    });

    guarded("resolvent_positivity", [&] {
        double worst = 0.0;
        for (int j = 1; j < 8; ++j) {
            double y = lo + (up - lo) * j / 8;
            for (int i = 0; i <= 16; ++i)
                worst = std::min(worst, s.resolvent_density(lo + (up - lo) * i / 16, y, lo, up).density);
        }
        add("resolvent_positivity", worst, -1e-8, worst >= -1e-8);
    });

    guarded("multiplicativity", [&] {
        double worst = 0.0;
        double span = up;
        if (lo == 0.0) {
            for (double fx : {0.1, 0.3})
                for (double fy : {0.5, 0.7})
                    for (bool refl : {false, true}) {
                        auto p = s.multiplicativity(fx * span, fy * span, span, refl);
                        worst = std::max(worst, std::abs(p.first - p.second));
                    }
        }
        add("multiplicativity", worst, 1e-6, worst <= 1e-6);
    });

    if (cfg.omega.is_constant() && q > 0.0 && lo == 0.0) {
        guarded("q_consistency", [&] {
            SolverOptions o = so;
            o.upper = std::min(up, 1.0);
            o.resolvent_rows = 64;
            FluctuationSolver r(ProcessKind{cfg.model, cfg.rate, cfg.omega, Reflection::AtInfimum}, o);
            double a = o.upper;
            double d = std::abs(r.consistency_qresolvent(0.5 * a, a) - r.reflected_exit(0.5 * a, a));
            add("q_consistency", d, 1e-4, d <= 1e-4);
        });
    }

    ojson rep;
    rep["tool"] = "snlp";
    rep["version"] = kVersion;
    rep["config"] = toml_to_json(cfg.effective_toml);
    rep["checks"] = checks;
    rep["all_pass"] = all;
    return {rep.dump(2) + "\n", all};
}

}  // namespace snlp
