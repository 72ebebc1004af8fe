#include "nlexit/run.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "nlexit/montecarlo.hpp"
#include "nlexit/operator.hpp"
#include "nlexit/solver.hpp"

namespace nlexit {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;
using Vec = Eigen::VectorXd;

constexpr double identity_tolerance = 1e-10;
constexpr double z_limit = 3.0;

// Brownian comparator paths draw from a stream family disjoint from the jump paths.
constexpr std::uint64_t brownian_stream_offset = std::uint64_t(1) << 40;

class Session {
public:
    Session(const RunConfig& config, const RunOptions& options, std::ostream& log)
        : config_(config),
          log_(log),
          threads_(std::max(1u, options.threads)),
          dir_(options.out_dir.empty() ? fs::path(config.output.dir) : options.out_dir),
          hash_(config.hash()),
          kernel_(config.make_kernel()),
          partition_(config.make_partition()) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw ConfigError("cannot create output directory '" + dir_.string() + "': " + ec.message());
    }

    const RunConfig& config() const { return config_; }
    const JumpKernel<double>& kernel() const { return kernel_; }
    const DomainPartition<double>& partition() const { return partition_; }
    unsigned threads() const { return threads_; }
    std::ostream& log() { return log_; }
    std::vector<fs::path>& files() { return files_; }

    const DiscreteOperator<double>& op() {
        if (!op_) {
            const auto grid = build_grid(partition_, config_.h);
            op_ = assemble(kernel_, grid, partition_, threads_);
            log_ << "operator: " << op_->size() << " active cells (" << op_->interior_size() << " in omega, "
                 << op_->absorbing.size() << " in omega_d)\n";
        }
        return *op_;
    }

    Vec initial_density() {
        const auto& o = op();
        if (config_.initial.kind == InitialCondition<double>::Kind::uniform) return uniform_density(o);
        return point_mass(o, config_.initial.x0);
    }

    /// Mean exit time averaged against the initial density.
    double solver_mean_exit_time() {
        const Vec m = mean_exit_time(op()).values;
        return initial_density().cwiseProduct(op().widths).dot(m);
    }

    double mc_t_max() {
        if (config_.mc.t_max) return *config_.mc.t_max;
        if (partition_.omega_d().empty()) return config_.solver.t_end;
        const Vec m = mean_exit_time(op()).values;
        const double t = 50 * m.maxCoeff();
        log_ << "mc.t_max defaulted to 50 x max mean exit time = " << t << "\n";
        return t;
    }

    /// Opens an output file whose first line echoes the config hash.
    std::ofstream csv(const std::string& name) {
        std::ofstream out = open(name);
        out << "# config_hash=" << hash_ << "\n";
        out << std::setprecision(17);
        return out;
    }

    void write_json(const std::string& name, json body) {
        json doc;
        doc["config_hash"] = hash_;
        for (auto& [k, v] : body.items()) doc[k] = v;
        std::ofstream out = open(name);
        out << doc.dump(2) << "\n";
    }

    void write_resolved_config() {
        std::ofstream out = open("run_config.ini");
        out << "# config_hash=" << hash_ << "\n" << config_.canonical();
    }

private:
    std::ofstream open(const std::string& name) {
        const fs::path p = dir_ / name;
        std::ofstream out(p, std::ios::binary);
        if (!out) throw ConfigError("cannot write output file '" + p.string() + "'");
        files_.push_back(p);
        return out;
    }

    const RunConfig& config_;
    std::ostream& log_;
    unsigned threads_;
    fs::path dir_;
    std::string hash_;
    JumpKernel<double> kernel_;
    DomainPartition<double> partition_;
    std::optional<DiscreteOperator<double>> op_;
    std::vector<fs::path> files_;
};

const char* region_name(Region r) { return to_string(r); }

double interpolate(const std::vector<double>& t, const std::vector<double>& y, double at) {
    if (at <= t.front()) return y.front();
    if (at >= t.back()) return y.back();
    const auto it = std::upper_bound(t.begin(), t.end(), at);
    const std::size_t k = std::size_t(it - t.begin());
    const double w = (at - t[k - 1]) / (t[k] - t[k - 1]);
    return (1 - w) * y[k - 1] + w * y[k];
}

DensityTrajectory<double> solve_forward(Session& s) {
    const auto& c = s.config().solver;
    auto traj = evolve(s.op(), s.initial_density(), c.dt, c.t_end, c.scheme);
    if (traj.negative_density)
        s.log() << "warning: density went negative (min " << traj.min_density << "); reduce dt or use implicit_euler\n";
    return traj;
}

int cmd_solve(Session& s) {
    const auto traj = solve_forward(s);
    {
        auto out = s.csv("survival.csv");
        out << "t,S,F\n";
        for (std::size_t n = 0; n < traj.times.size(); ++n)
            out << traj.times[n] << "," << traj.survival[n] << "," << traj.absorbed[n] << "\n";
    }
    double defect = 0;
    for (std::size_t n = 0; n < traj.times.size(); ++n)
        defect = std::max(defect, std::abs(traj.survival[n] + traj.absorbed[n] - traj.survival.front()));
    s.log() << "solve: " << traj.times.size() - 1 << " steps of dt = " << traj.dt << ", S(t_end) = "
            << traj.survival.back() << ", max |S + F - 1| = " << defect << "\n";

    {
        auto out = s.csv("sigma.txt");
        if (!s.kernel().symmetric()) {
            out << "sigma = nan\n# coercivity estimate needs a symmetric kernel\n";
        } else {
            const auto est = coercivity_sigma(s.op());
            out << "sigma = " << est.value << "\nresidual = " << est.residual << "\niterations = " << est.iterations
                << "\n";
            s.log() << "sigma = " << est.value << "\n";
        }
    }

    if (s.config().output.dump_operator) {
        const auto& op = s.op();
        {
            auto out = s.csv("operator.csv");
            out << "row,col,a_star\n";
            for (Eigen::Index k = 0; k < op.a_star.outerSize(); ++k)
                for (Eigen::SparseMatrix<double>::InnerIterator it(op.a_star, k); it; ++it)
                    out << it.row() << "," << it.col() << "," << it.value() << "\n";
        }
        json cells = json::array();
        for (Eigen::Index i = 0; i < op.size(); ++i)
            cells.push_back({{"index", i},
                             {"center", op.centers[i]},
                             {"width", op.widths[i]},
                             {"region", region_name(op.tags[std::size_t(i)])}});
        s.write_json("operator.json", {{"matrix", "a_star"},
                                       {"storage", "coordinate triplets in operator.csv, column-major order"},
                                       {"size", op.size()},
                                       {"cells", cells}});
    }
    return exit_ok;
}

void write_moment_table(Session& s, const std::string& name, const std::vector<ExitMoments<double>>& m) {
    const auto& op = s.op();
    auto out = s.csv(name);
    out << "x,h,region";
    for (const auto& mk : m) out << ",m" << mk.order;
    out << "\n";
    for (Eigen::Index i = 0; i < op.size(); ++i) {
        out << op.centers[i] << "," << op.widths[i] << "," << region_name(op.tags[std::size_t(i)]);
        for (const auto& mk : m) out << "," << mk.values[i];
        out << "\n";
    }
}

int cmd_exit_time(Session& s) {
    const auto m = exit_moments(s.op(), 1);
    write_moment_table(s, "met.csv", m);
    s.log() << "mean exit time (initial-density average) = " << s.solver_mean_exit_time() << "\n";
    return exit_ok;
}

int cmd_moments(Session& s) {
    const auto m = exit_moments(s.op(), s.config().solver.k_max);
    write_moment_table(s, "moments.csv", m);
    const Vec w = s.initial_density().cwiseProduct(s.op().widths);
    for (const auto& mk : m) s.log() << "E[T^" << mk.order << "] = " << w.dot(mk.values) << "\n";
    return exit_ok;
}

std::vector<double> survival_times(const RunConfig& c) {
    std::vector<double> t = c.solver.checkpoints;
    for (int k = 0; k <= 100; ++k) t.push_back(c.solver.t_end * k / 100);
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
}

json exit_pieces_mc(const ExitEnsemble<double>& ens, const IntervalSet<double>& omega_d) {
    json pieces = json::array();
    const double n = double(ens.records.size());
    for (const auto& p : omega_d) {
        std::size_t count = 0;
        for (const auto& r : ens.records)
            if (!r.censored && r.exit_location >= p.lo && r.exit_location <= p.hi) ++count;
        pieces.push_back({{"interval", {p.lo, p.hi}}, {"exits", count}, {"fraction", double(count) / n}});
    }
    return pieces;
}

ExitEnsemble<double> run_ensemble(Session& s) {
    const auto& c = s.config();
    const double t_max = s.mc_t_max();
    auto ens = simulate_ensemble(s.kernel(), s.partition(), c.make_initial(), c.mc.n_paths, c.mc.seed, t_max,
                                 s.threads());
    const auto m = exit_time_moment(ens, 1);
    s.log() << "simulate: " << c.mc.n_paths << " paths, seed " << c.mc.seed << ", t_max " << t_max
            << ", mean exit time " << m.mean << " +- " << m.stderr_ << " (" << m.censored << " censored)\n";
    return ens;
}

int cmd_simulate(Session& s) {
    const auto ens = run_ensemble(s);
    {
        auto out = s.csv("ensemble.csv");
        out << "path_id,x0,T,y_exit,N,censored\n";
        for (std::size_t i = 0; i < ens.records.size(); ++i) {
            const auto& r = ens.records[i];
            out << i << "," << r.x0 << "," << r.exit_time << ",";
            if (r.censored)
                out << "nan";
            else
                out << r.exit_location;
            out << "," << r.jumps << "," << (r.censored ? 1 : 0) << "\n";
        }
    }
    const auto surv = empirical_survival(ens, survival_times(s.config()));
    {
        auto out = s.csv("mc_survival.csv");
        out << "t,S_hat,stderr,n\n";
        for (std::size_t k = 0; k < surv.times.size(); ++k)
            out << surv.times[k] << "," << surv.s_hat[k] << "," << surv.stderr_[k] << "," << surv.n_eff[k] << "\n";
    }
    const auto m = exit_time_moment(ens, 1);
    s.write_json("simulate.json", {{"n_paths", ens.n_paths},
                                   {"seed", ens.seed},
                                   {"t_max", ens.t_max},
                                   {"censored", m.censored},
                                   {"mean_exit_time", m.used ? json(m.mean) : json(nullptr)},
                                   {"mean_exit_time_stderr", m.stderr_},
                                   {"exits_by_piece", exit_pieces_mc(ens, s.partition().omega_d())}});
    return exit_ok;
}

int cmd_paths(Session& s) {
    const auto& c = s.config();
    const auto& p = c.paths;
    const double x0 = p.x0 ? *p.x0 : (c.domain.omega[0].lo + c.domain.omega[0].hi) / 2;
    const IntervalSet<double> region =
        p.confined ? s.partition().active() : IntervalSet<double>::real_line();
    const double rate = total_rate(s.kernel(), x0, region);
    {
        auto out = s.csv("paths.csv");
        out << "path_id,t,x\n";
        auto summary = s.csv("path_summary.csv");
        summary << "path_id,jumps,expected_jumps,exited\n";
        for (std::size_t i = 0; i < p.n_paths; ++i) {
            Rng gen = stream_for(c.mc.seed, i);
            const auto path = simulate_path(s.kernel(), x0, gen, p.t_max, p.confined ? &s.partition() : nullptr);
            for (std::size_t k = 0; k < path.times.size(); ++k)
                out << i << "," << path.times[k] << "," << path.positions[k] << "\n";
            // closing point so plots extend to t_max
            if (!path.exited) out << i << "," << p.t_max << "," << path.positions.back() << "\n";
            summary << i << "," << path.times.size() - 1 << "," << rate * p.t_max << "," << (path.exited ? 1 : 0)
                    << "\n";
        }
    }
    if (p.brownian) {
        auto out = s.csv("brownian.csv");
        out << "path_id,t,x\n";
        for (std::size_t i = 0; i < p.n_paths; ++i) {
            Rng gen = stream_for(c.mc.seed, brownian_stream_offset + i);
            const auto path = brownian_path(x0, gen, p.t_max, p.brownian_dt);
            for (std::size_t k = 0; k < path.times.size(); ++k)
                out << i << "," << path.times[k] << "," << path.positions[k] << "\n";
        }
    }
    s.log() << "paths: " << p.n_paths << " path(s) from x0 = " << x0 << ", total rate " << rate << "\n";
    return exit_ok;
}

struct Check {
    std::string name;
    double value;
    double tolerance;
    std::string skipped;  // reason, empty when the check ran
    bool pass() const { return !skipped.empty() || value <= tolerance; }
};

int cmd_verify(Session& s) {
    const auto& op = s.op();
    Rng gen = stream_for(s.config().mc.seed, 0);
    std::vector<Check> checks;
    const auto adj = adjoint_check(op, 16, gen);
    checks.push_back({"adjoint", adj.relative, identity_tolerance, {}});
    checks.push_back({"annihilates_constants", constant_annihilation_defect(op), identity_tolerance, {}});
    Vec u = Vec::Zero(op.size());
    std::uniform_real_distribution<double> unit(0.1, 1.0);
    for (auto i : op.interior) u[i] = unit(gen);
    const auto bal = balance_check(op, u, gen, 32);
    checks.push_back({"balance_antisymmetry", bal.antisymmetry, identity_tolerance, {}});
    checks.push_back({"balance_self_interaction", bal.self_interaction, identity_tolerance, {}});
    checks.push_back({"balance_action_reaction", bal.action_reaction, identity_tolerance, {}});
    checks.push_back({"balance_additivity", bal.additivity, identity_tolerance, {}});
    checks.push_back({"divergence_theorem", divergence_theorem_check(op, u).relative, identity_tolerance, {}});
    if (s.kernel().symmetric())
        checks.push_back({"symmetry", symmetry_defect(op), 1e-12, {}});
    else
        checks.push_back({"symmetry", 0, 1e-12, "asymmetric kernel"});

    const auto traj = solve_forward(s);
    double defect = 0, censored_defect = 0;
    for (std::size_t n = 0; n < traj.times.size(); ++n) {
        defect = std::max(defect, std::abs(traj.survival[n] + traj.absorbed[n] - 1));
        censored_defect = std::max(censored_defect, std::abs(traj.survival[n] - 1));
    }
    checks.push_back({"conservation", defect, identity_tolerance, {}});
    if (op.absorbing.empty())
        checks.push_back({"censored_mass", censored_defect, 1e-12, {}});
    else
        checks.push_back({"censored_mass", 0, 1e-12, "omega_d is nonempty"});

    bool all = true;
    json list = json::array();
    for (const auto& c : checks) {
        all = all && c.pass();
        json e{{"name", c.name}, {"value", c.value}, {"tolerance", c.tolerance}, {"pass", c.pass()}};
        if (!c.skipped.empty()) e["skipped"] = c.skipped;
        list.push_back(e);
        s.log() << std::left << std::setw(26) << c.name << (!c.skipped.empty() ? "SKIP" : c.pass() ? "PASS" : "FAIL");
        if (c.skipped.empty()) s.log() << "  " << std::setprecision(3) << std::scientific << c.value << std::defaultfloat;
        s.log() << "\n";
    }
    s.write_json("verify.json", {{"all_pass", all}, {"checks", list}});
    return all ? exit_ok : exit_check_failed;
}

int cmd_compare(Session& s) {
    const auto& c = s.config();
    const auto traj = solve_forward(s);
    const auto ens = run_ensemble(s);
    const auto surv = empirical_survival(ens, c.solver.checkpoints);

    bool all = true;
    json rows = json::array();
    {
        auto out = s.csv("compare.csv");
        out << "t,S_solver,S_hat,stderr,z\n";
        for (std::size_t k = 0; k < surv.times.size(); ++k) {
            const double t = surv.times[k];
            if (t > traj.times.back()) {
                s.log() << "checkpoint t = " << t << " lies beyond solver.t_end; skipped\n";
                continue;
            }
            const double ref = interpolate(traj.times, traj.survival, t);
            const double n = double(surv.n_eff[k]);
            // standard error under the solver's value, so that S_hat = 0 or 1 is still scored
            const double se = n > 0 ? std::sqrt(std::max(ref * (1 - ref), 0.0) / n) : 0.0;
            const double diff = surv.s_hat[k] - ref;
            const double z = se > 0 ? diff / se : (std::abs(diff) < 1e-12 ? 0.0 : INFINITY);
            all = all && std::abs(z) <= z_limit;
            out << t << "," << ref << "," << surv.s_hat[k] << "," << se << "," << z << "\n";
            rows.push_back({{"t", t}, {"S_solver", ref}, {"S_hat", surv.s_hat[k]}, {"stderr", se}, {"z", z}});
            s.log() << "t = " << std::setw(8) << t << "  S = " << std::setw(12) << ref << "  S_hat = " << std::setw(12)
                    << surv.s_hat[k] << "  z = " << z << "\n";
        }
    }

    json report{{"survival", rows}, {"z_limit", z_limit}};
    if (!s.partition().omega_d().empty()) {
        const auto mc = exit_time_moment(ens, 1);
        const double det = s.solver_mean_exit_time();
        report["mean_exit_time"] = {{"solver", det},
                                    {"mc", mc.used ? json(mc.mean) : json(nullptr)},
                                    {"stderr", mc.stderr_},
                                    {"z", mc.stderr_ > 0 ? (mc.mean - det) / mc.stderr_ : 0.0}};
        json pieces = exit_pieces_mc(ens, s.partition().omega_d());
        const Vec w = s.initial_density().cwiseProduct(s.op().widths);
        const double n = double(ens.records.size());
        for (std::size_t k = 0; k < pieces.size(); ++k) {
            const auto& p = s.partition().omega_d()[k];
            const double prob = w.dot(exit_probability(s.op(), IntervalSet<double>({p})));
            const double se = std::sqrt(std::max(prob * (1 - prob), 0.0) / n);
            pieces[k]["solver_fraction"] = prob;
            pieces[k]["z"] = se > 0 ? (pieces[k]["fraction"].get<double>() - prob) / se : 0.0;
        }
        report["exits_by_piece"] = pieces;
    }
    report["all_within_limit"] = all;
    s.write_json("compare.json", report);
    return all ? exit_ok : exit_check_failed;
}

}  // namespace

std::optional<Command> parse_command(const std::string& name) {
    for (Command c : {Command::solve, Command::exit_time, Command::moments, Command::simulate, Command::paths,
                      Command::verify, Command::compare})
        if (name == to_string(c)) return c;
    return std::nullopt;
}

const char* to_string(Command c) {
    switch (c) {
        case Command::solve: return "solve";
        case Command::exit_time: return "exit-time";
        case Command::moments: return "moments";
        case Command::simulate: return "simulate";
        case Command::paths: return "paths";
        case Command::verify: return "verify";
        case Command::compare: return "compare";
    }
    return "?";
}

RunResult run(Command command, const RunConfig& config, const RunOptions& options, std::ostream& log) {
    Session s(config, options, log);
    s.write_resolved_config();
    RunResult result;
    switch (command) {
        case Command::solve: result.exit_code = cmd_solve(s); break;
        case Command::exit_time: result.exit_code = cmd_exit_time(s); break;
        case Command::moments: result.exit_code = cmd_moments(s); break;
        case Command::simulate: result.exit_code = cmd_simulate(s); break;
        case Command::paths: result.exit_code = cmd_paths(s); break;
        case Command::verify: result.exit_code = cmd_verify(s); break;
        case Command::compare: result.exit_code = cmd_compare(s); break;
    }
    result.files = s.files();
    return result;
}

std::string error_report(int exit_code, const std::string& kind, const std::string& message) {
    json j{{"status", "error"}, {"exit_code", exit_code}, {"kind", kind}, {"message", message}};
    return j.dump();
}

}  // namespace nlexit
