#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nlexit/geometry.hpp"
#include "nlexit/kernel.hpp"
#include "nlexit/montecarlo.hpp"
#include "nlexit/solver.hpp"

namespace nlexit {

struct KernelBlock {
    std::string family = "compound_poisson_uniform";  // or truncated_stable, tabulated
    double lambda = 1.0;
    double rate = 0.2;
    double alpha = 0.5;
    double m = 1.0;
    double epsilon = 1e-3;
    std::string table_path;  // CSV: dx,value or x,y,value
};

struct DomainBlock {
    IntervalSet<double> omega;
    AbsorbingChoice choice = AbsorbingChoice::full;
    IntervalSet<double> omega_d;      // explicit choice only
    std::optional<double> lambda;     // must match the kernel when given
};

struct SolverBlock {
    TimeScheme scheme = TimeScheme::implicit_euler;
    double dt = 0.01;
    double t_end = 50.0;
    int k_max = 2;
    std::vector<double> checkpoints{1, 5, 10, 25, 50};
};

struct InitialBlock {
    InitialCondition<double>::Kind kind = InitialCondition<double>::Kind::uniform;
    double x0 = 0;
};

struct McBlock {
    std::size_t n_paths = 100000;
    std::uint64_t seed = 1;
    std::optional<double> t_max;  // default: 50 x the solver's largest mean exit time
};

struct PathsBlock {
    std::size_t n_paths = 5;
    double t_max = 50;
    std::optional<double> x0;  // default: midpoint of the first omega piece
    bool confined = false;
    bool brownian = true;
    double brownian_dt = 0.01;
};

struct OutputBlock {
    std::string dir = "out";
    bool dump_operator = false;
};

struct RunConfig {
    KernelBlock kernel;
    DomainBlock domain;
    double h = 1.0 / 64;
    SolverBlock solver;
    InitialBlock initial;
    McBlock mc;
    PathsBlock paths;
    OutputBlock output;
    std::filesystem::path base_dir;  // table_path is resolved against this

    /// Canonical text of every setting, defaults included.
    std::string canonical() const;
    /// 64-bit FNV-1a of canonical(), as 16 hex digits.
    std::string hash() const;

    JumpKernel<double> make_kernel() const;
    DomainPartition<double> make_partition() const;
    InitialCondition<double> make_initial() const;
};

/// Parses an INI-style run configuration and cross-validates it. Throws
/// ConfigError with a message naming the offending key or interval.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Reads a CSV kernel table of (dx, value) pairs or (x, y, value) triples.
JumpKernel<double> load_kernel_table(const std::filesystem::path& path, double lambda);

}  // namespace nlexit
