#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "nlexit/config.hpp"
#include "nlexit/errors.hpp"
#include "nlexit/run.hpp"

namespace {

int fail(int code, const std::string& kind, const std::string& message, const std::filesystem::path& out_dir) {
    const std::string report = nlexit::error_report(code, kind, message);
    std::cerr << report << "\n";
    if (!out_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(out_dir, ec);
        std::ofstream(out_dir / "error.json") << report << "\n";
    }
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Exit times of finite-range jump processes: nonlocal solver and Monte Carlo"};
    std::string command, config_path, out_dir;
    std::optional<std::uint64_t> seed;
    unsigned threads = 1;
    app.add_option("command", command, "solve | exit-time | moments | simulate | paths | verify | compare")
        ->required();
    app.add_option("--config", config_path, "run configuration (INI)")->required();
    app.add_option("--out", out_dir, "output directory (overrides output.dir)");
    app.add_option("--seed", seed, "random seed (overrides mc.seed)");
    app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return fail(nlexit::exit_validation, "usage", e.what(), {});
    }

    const auto cmd = nlexit::parse_command(command);
    if (!cmd) return fail(nlexit::exit_validation, "usage", "unknown command '" + command + "'", {});

    std::filesystem::path report_dir = out_dir;
    try {
        auto config = nlexit::load_config(config_path);
        if (seed) config.mc.seed = *seed;
        if (report_dir.empty()) report_dir = config.output.dir;
        const auto result = nlexit::run(*cmd, config, {out_dir, threads}, std::cout);
        for (const auto& f : result.files) std::cout << "wrote " << f.string() << "\n";
        if (result.exit_code == nlexit::exit_check_failed)
            return fail(result.exit_code, "check_failed", "one or more checks exceeded their tolerance", report_dir);
        return result.exit_code;
    } catch (const nlexit::ConfigError& e) {
        return fail(nlexit::exit_validation, "validation", e.what(), report_dir);
    } catch (const nlexit::NumericalError& e) {
        return fail(nlexit::exit_numerical, "numerical", e.what(), report_dir);
    } catch (const std::exception& e) {
        return fail(nlexit::exit_numerical, "numerical", e.what(), report_dir);
    }
}
