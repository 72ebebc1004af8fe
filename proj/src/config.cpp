#include "nlexit/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "json.hpp"

namespace nlexit {

namespace {

namespace pt = boost::property_tree;
using json = nlohmann::json;

const std::map<std::string, std::set<std::string>> known_keys{
    {"kernel", {"family", "lambda", "rate", "alpha", "m", "epsilon", "table_path"}},
    {"domain", {"omega", "omega_d", "lambda"}},
    {"grid", {"h"}},
    {"solver", {"scheme", "dt", "t_end", "k_max", "checkpoints"}},
    {"initial", {"kind", "x0"}},
    {"mc", {"n_paths", "seed", "t_max"}},
    {"paths", {"n_paths", "t_max", "x0", "confined", "brownian", "brownian_dt"}},
    {"output", {"dir", "dump_operator"}},
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

class Reader {
public:
    explicit Reader(const pt::ptree& tree) : tree_(tree) {
        for (const auto& [section, body] : tree_) {
            const auto it = known_keys.find(section);
            if (it == known_keys.end()) throw ConfigError("unknown section [" + section + "]");
            if (body.empty() && !body.data().empty())
                throw ConfigError("key '" + section + "' must live inside a section");
            for (const auto& [key, value] : body)
                if (!it->second.count(key)) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
        }
    }

    std::optional<std::string> raw(const std::string& section, const std::string& key) const {
        const auto s = tree_.get_child_optional(section);
        if (!s) return std::nullopt;
        const auto v = s->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
        if (!v) return std::nullopt;
        return trim(*v);
    }

    template <typename T>
    void get(const std::string& section, const std::string& key, T& out) const {
        const auto v = raw(section, key);
        if (v) out = convert<T>(*v, section + "." + key);
    }

    template <typename T>
    void get(const std::string& section, const std::string& key, std::optional<T>& out) const {
        const auto v = raw(section, key);
        if (v) out = convert<T>(*v, section + "." + key);
    }

    template <typename T>
    static T convert(const std::string& text, const std::string& where) {
        try {
            if constexpr (std::is_same_v<T, std::string>) {
                return text;
            } else if constexpr (std::is_same_v<T, bool>) {
                if (text == "true" || text == "1" || text == "yes") return true;
                if (text == "false" || text == "0" || text == "no") return false;
                throw std::invalid_argument("not a boolean");
            } else if constexpr (std::is_floating_point_v<T>) {
                std::size_t pos = 0;
                const double v = std::stod(text, &pos);
                if (pos != text.size() || !std::isfinite(v)) throw std::invalid_argument("trailing text");
                return T(v);
            } else {
                if (!text.empty() && text[0] == '-') throw std::invalid_argument("negative");
                std::size_t pos = 0;
                const unsigned long long v = std::stoull(text, &pos);
                if (pos != text.size()) throw std::invalid_argument("trailing text");
                return T(v);
            }
        } catch (const std::invalid_argument&) {
            throw ConfigError("cannot parse " + where + " = '" + text + "'");
        } catch (const std::out_of_range&) {
            throw ConfigError("value out of range for " + where + " = '" + text + "'");
        }
    }

private:
    const pt::ptree& tree_;
};

IntervalSet<double> parse_intervals(const std::string& text, const std::string& where) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error&) {
        throw ConfigError(where + " must be a JSON list of [lo, hi] pairs, got '" + text + "'");
    }
    if (!j.is_array() || j.empty()) throw ConfigError(where + " must be a nonempty list of [lo, hi] pairs");
    // accept a bare pair as a single interval
    if (j.size() == 2 && j[0].is_number()) j = json::array({j});
    std::vector<Interval<double>> pieces;
    for (const auto& p : j) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
            throw ConfigError(where + ": every entry must be a [lo, hi] pair");
        const double lo = p[0].get<double>(), hi = p[1].get<double>();
        if (!(lo < hi)) throw ConfigError(where + ": interval [" + fmt(lo) + ", " + fmt(hi) + "] is empty");
        pieces.push_back({lo, hi});
    }
    return IntervalSet<double>(pieces);
}

std::vector<double> parse_numbers(const std::string& text, const std::string& where) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error&) {
        throw ConfigError(where + " must be a JSON list of numbers, got '" + text + "'");
    }
    if (!j.is_array()) throw ConfigError(where + " must be a JSON list of numbers");
    std::vector<double> out;
    for (const auto& v : j) {
        if (!v.is_number()) throw ConfigError(where + " must contain only numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

std::string intervals_text(const IntervalSet<double>& s) {
    std::string out = "[";
    for (std::size_t k = 0; k < s.size(); ++k) {
        if (k) out += ", ";
        out += "[" + fmt(s[k].lo) + ", " + fmt(s[k].hi) + "]";
    }
    return out + "]";
}

void validate(const RunConfig& c) {
    const auto& k = c.kernel;
    if (k.family != "compound_poisson_uniform" && k.family != "truncated_stable" && k.family != "tabulated")
        throw ConfigError("kernel.family must be compound_poisson_uniform, truncated_stable or tabulated (got '" +
                          k.family + "')");
    if (!(k.lambda > 0)) throw ConfigError("kernel.lambda must be > 0");
    if (k.family == "tabulated" && k.table_path.empty()) throw ConfigError("kernel.table_path is required for tabulated kernels");
    if (k.family == "compound_poisson_uniform" && !(k.rate >= 0)) throw ConfigError("kernel.rate must be >= 0");
    if (c.domain.omega.empty()) throw ConfigError("domain.omega is required");
    if (c.domain.lambda && std::abs(*c.domain.lambda - k.lambda) > 1e-12 * k.lambda)
        throw ConfigError("domain.lambda = " + fmt(*c.domain.lambda) + " disagrees with kernel.lambda = " +
                          fmt(k.lambda));
    if (!(c.h > 0)) throw ConfigError("grid.h must be > 0");
    if (c.h > k.lambda / 4)
        throw ConfigError("grid.h = " + fmt(c.h) + " exceeds lambda/4 = " + fmt(k.lambda / 4));
    if (!(c.solver.dt > 0)) throw ConfigError("solver.dt must be > 0");
    if (!(c.solver.t_end > 0)) throw ConfigError("solver.t_end must be > 0");
    if (c.solver.k_max < 1) throw ConfigError("solver.k_max must be >= 1");
    for (double t : c.solver.checkpoints)
        if (!(t >= 0)) throw ConfigError("solver.checkpoints must be >= 0");
    if (c.mc.n_paths < 1) throw ConfigError("mc.n_paths must be >= 1");
    if (c.mc.t_max && !(*c.mc.t_max > 0)) throw ConfigError("mc.t_max must be > 0");
    if (c.paths.n_paths < 1) throw ConfigError("paths.n_paths must be >= 1");
    if (!(c.paths.t_max > 0)) throw ConfigError("paths.t_max must be > 0");
    if (!(c.paths.brownian_dt > 0)) throw ConfigError("paths.brownian_dt must be > 0");
    // these construct and validate the kernel, omega_d and grid spacing
    const auto partition = c.make_partition();
    if (k.family != "tabulated") c.make_kernel();
    if (c.initial.kind == InitialCondition<double>::Kind::point && !c.domain.omega.contains(c.initial.x0))
        throw ConfigError("initial.x0 = " + fmt(c.initial.x0) + " is not inside omega");
    if (c.paths.confined && c.paths.x0 && partition.region_of(*c.paths.x0) != Region::interior)
        throw ConfigError("paths.x0 = " + fmt(*c.paths.x0) + " is not inside omega");
}

}  // namespace

std::string RunConfig::canonical() const {
    std::ostringstream os;
    os << "[kernel]\nfamily = " << kernel.family << "\nlambda = " << fmt(kernel.lambda);
    if (kernel.family == "compound_poisson_uniform") os << "\nrate = " << fmt(kernel.rate);
    if (kernel.family == "truncated_stable")
        os << "\nalpha = " << fmt(kernel.alpha) << "\nm = " << fmt(kernel.m) << "\nepsilon = " << fmt(kernel.epsilon);
    if (kernel.family == "tabulated") os << "\ntable_path = " << kernel.table_path;
    os << "\n\n[domain]\nomega = " << intervals_text(domain.omega) << "\nomega_d = ";
    switch (domain.choice) {
        case AbsorbingChoice::full: os << "full"; break;
        case AbsorbingChoice::empty: os << "empty"; break;
        case AbsorbingChoice::explicit_set: os << intervals_text(domain.omega_d); break;
    }
    os << "\n\n[grid]\nh = " << fmt(h);
    os << "\n\n[solver]\nscheme = " << to_string(solver.scheme) << "\ndt = " << fmt(solver.dt)
       << "\nt_end = " << fmt(solver.t_end) << "\nk_max = " << solver.k_max << "\ncheckpoints = [";
    for (std::size_t i = 0; i < solver.checkpoints.size(); ++i) os << (i ? ", " : "") << fmt(solver.checkpoints[i]);
    os << "]\n\n[initial]\nkind = " << (initial.kind == InitialCondition<double>::Kind::uniform ? "uniform" : "point");
    if (initial.kind == InitialCondition<double>::Kind::point) os << "\nx0 = " << fmt(initial.x0);
    os << "\n\n[mc]\nn_paths = " << mc.n_paths << "\nseed = " << mc.seed << "\nt_max = "
       << (mc.t_max ? fmt(*mc.t_max) : std::string("auto"));
    os << "\n\n[paths]\nn_paths = " << paths.n_paths << "\nt_max = " << fmt(paths.t_max)
       << "\nx0 = " << (paths.x0 ? fmt(*paths.x0) : std::string("auto")) << "\nconfined = "
       << (paths.confined ? "true" : "false") << "\nbrownian = " << (paths.brownian ? "true" : "false")
       << "\nbrownian_dt = " << fmt(paths.brownian_dt);
    os << "\n\n[output]\ndump_operator = " << (output.dump_operator ? "true" : "false") << "\n";
    return os.str();
}

std::string RunConfig::hash() const {
    std::uint64_t h64 = 0xcbf29ce484222325ull;
    for (unsigned char ch : canonical()) {
        h64 ^= ch;
        h64 *= 0x100000001b3ull;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h64;
    return os.str();
}

JumpKernel<double> RunConfig::make_kernel() const {
    if (kernel.family == "compound_poisson_uniform")
        return JumpKernel<double>::compound_poisson_uniform(kernel.rate, kernel.lambda);
    if (kernel.family == "truncated_stable")
        return JumpKernel<double>::truncated_stable(kernel.alpha, kernel.m, kernel.epsilon, kernel.lambda);
    std::filesystem::path p(kernel.table_path);
    if (p.is_relative()) p = base_dir / p;
    return load_kernel_table(p, kernel.lambda);
}

DomainPartition<double> RunConfig::make_partition() const {
    return DomainPartition<double>(domain.omega, kernel.lambda, domain.choice, domain.omega_d);
}

InitialCondition<double> RunConfig::make_initial() const {
    return initial.kind == InitialCondition<double>::Kind::uniform ? InitialCondition<double>::uniform()
                                                                   : InitialCondition<double>::point(initial.x0);
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("malformed configuration: ") + e.message() + " (line " +
                          std::to_string(e.line()) + ")");
    }
    const Reader r(tree);
    RunConfig c;
    c.base_dir = base_dir;

    r.get("kernel", "family", c.kernel.family);
    r.get("kernel", "lambda", c.kernel.lambda);
    r.get("kernel", "rate", c.kernel.rate);
    r.get("kernel", "alpha", c.kernel.alpha);
    r.get("kernel", "m", c.kernel.m);
    r.get("kernel", "epsilon", c.kernel.epsilon);
    r.get("kernel", "table_path", c.kernel.table_path);

    if (const auto v = r.raw("domain", "omega")) c.domain.omega = parse_intervals(*v, "domain.omega");
    if (const auto v = r.raw("domain", "omega_d")) {
        if (*v == "full")
            c.domain.choice = AbsorbingChoice::full;
        else if (*v == "empty")
            c.domain.choice = AbsorbingChoice::empty;
        else {
            c.domain.choice = AbsorbingChoice::explicit_set;
            c.domain.omega_d = parse_intervals(*v, "domain.omega_d");
        }
    }
    r.get("domain", "lambda", c.domain.lambda);
    r.get("grid", "h", c.h);

    if (const auto v = r.raw("solver", "scheme")) {
        if (*v == "implicit_euler")
            c.solver.scheme = TimeScheme::implicit_euler;
        else if (*v == "crank_nicolson")
            c.solver.scheme = TimeScheme::crank_nicolson;
        else
            throw ConfigError("solver.scheme must be implicit_euler or crank_nicolson (got '" + *v + "')");
    }
    r.get("solver", "dt", c.solver.dt);
    r.get("solver", "t_end", c.solver.t_end);
    if (const auto v = r.raw("solver", "k_max")) c.solver.k_max = int(Reader::convert<unsigned>(*v, "solver.k_max"));
    if (const auto v = r.raw("solver", "checkpoints")) c.solver.checkpoints = parse_numbers(*v, "solver.checkpoints");

    if (const auto v = r.raw("initial", "kind")) {
        if (*v == "uniform")
            c.initial.kind = InitialCondition<double>::Kind::uniform;
        else if (*v == "point")
            c.initial.kind = InitialCondition<double>::Kind::point;
        else
            throw ConfigError("initial.kind must be uniform or point (got '" + *v + "')");
    }
    r.get("initial", "x0", c.initial.x0);
    if (c.initial.kind == InitialCondition<double>::Kind::point && !r.raw("initial", "x0"))
        throw ConfigError("initial.x0 is required when initial.kind = point");

    r.get("mc", "n_paths", c.mc.n_paths);
    r.get("mc", "seed", c.mc.seed);
    if (const auto v = r.raw("mc", "t_max"); v && *v != "auto") c.mc.t_max = Reader::convert<double>(*v, "mc.t_max");

    r.get("paths", "n_paths", c.paths.n_paths);
    r.get("paths", "t_max", c.paths.t_max);
    if (const auto v = r.raw("paths", "x0"); v && *v != "auto") c.paths.x0 = Reader::convert<double>(*v, "paths.x0");
    r.get("paths", "confined", c.paths.confined);
    r.get("paths", "brownian", c.paths.brownian);
    r.get("paths", "brownian_dt", c.paths.brownian_dt);

    r.get("output", "dir", c.output.dir);
    r.get("output", "dump_operator", c.output.dump_operator);

    validate(c);
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open configuration file '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    auto c = parse_config(buf.str(), path.parent_path());
    if (c.kernel.family == "tabulated") c.make_kernel();  // surface table errors at load time
    return c;
}

JumpKernel<double> load_kernel_table(const std::filesystem::path& path, double lambda) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open kernel table '" + path.string() + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        bool numeric = true;
        while (std::getline(ss, cell, ',')) {
            cell = trim(cell);
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (cell.empty() || *end != '\0') {
                numeric = false;
                break;
            }
            row.push_back(v);
        }
        if (!numeric) {
            if (rows.empty()) continue;  // header line
            throw ConfigError("kernel table " + path.string() + ": non-numeric entry on line " + std::to_string(lineno));
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw ConfigError("kernel table " + path.string() + ": inconsistent column count on line " +
                              std::to_string(lineno));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ConfigError("kernel table " + path.string() + " has no data rows");

    if (rows.front().size() == 2) {
        std::sort(rows.begin(), rows.end());
        std::vector<double> d, v;
        for (const auto& r : rows) {
            d.push_back(r[0]);
            v.push_back(r[1]);
        }
        return JumpKernel<double>::tabulated(d, v, lambda);
    }
    if (rows.front().size() == 3) {
        std::set<double> xs_set, ys_set;
        for (const auto& r : rows) {
            xs_set.insert(r[0]);
            ys_set.insert(r[1]);
        }
        const std::vector<double> xs(xs_set.begin(), xs_set.end()), ys(ys_set.begin(), ys_set.end());
        Eigen::MatrixXd values = Eigen::MatrixXd::Constant(Eigen::Index(xs.size()), Eigen::Index(ys.size()),
                                                           std::numeric_limits<double>::quiet_NaN());
        for (const auto& r : rows) {
            const auto i = std::lower_bound(xs.begin(), xs.end(), r[0]) - xs.begin();
            const auto j = std::lower_bound(ys.begin(), ys.end(), r[1]) - ys.begin();
            values(i, j) = r[2];
        }
        if (values.hasNaN())
            throw ConfigError("kernel table " + path.string() + ": (x, y) triples do not cover a full grid");
        return JumpKernel<double>::tabulated(xs, ys, values, lambda);
    }
    throw ConfigError("kernel table " + path.string() + " must have 2 columns (dx, value) or 3 (x, y, value)");
}

}  // namespace nlexit
