#include "tokfix/error.hpp"
#include "tokfix/log.hpp"
#include "tokfix/pipeline.hpp"
#include "tokfix/util.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <map>

namespace {

int run(int argc, char** argv) {
    CLI::App app{"Token-level bug localization and repair experiments"};
    app.require_subcommand(1);
    app.fallthrough();

    std::optional<std::string> config_path;
    std::vector<std::string> overrides;
    bool oracle_regions = false;
    bool verbose = false;
    bool quiet = false;
    std::string input;
    app.add_option("-c,--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("-s,--set", overrides, "Override a config value: dotted.key=value")->allow_extra_args(false);
    app.add_flag("--use-oracle-regions", oracle_regions, "Cut prompts at ground-truth regions");
    app.add_flag("-v,--verbose", verbose, "Progress logging on stderr");
    app.add_flag("-q,--quiet", quiet, "Errors only");

    using tokfix::Run;
    const std::map<std::string, std::pair<std::string, std::function<int(Run&)>>> commands = {
        {"gen-synthetic", {"Generate a synthetic corpus", [](Run& r) { r.gen_synthetic(); return 0; }}},
        {"ingest", {"Validate a corpus file and store it as the run corpus",
                    [&](Run& r) {
                        r.ingest(input.empty() ? r.config().at("ingest").at("input").get<std::string>() : input);
                        return 0;
                    }}},
        {"split", {"Split the corpus into train/validation/test", [](Run& r) { r.split(); return 0; }}},
        {"oracle", {"Extract ground-truth regions for every sample", [](Run& r) { r.oracle(); return 0; }}},
        {"train-loc", {"Train the localizer", [](Run& r) { r.train_loc(); return 0; }}},
        {"eval-loc", {"Evaluate the localizer on the evaluation split", [](Run& r) { return r.eval_loc(); }}},
        {"collect-adjust", {"Probe shifted prompts to label adjustment data", [](Run& r) { r.collect_adjust(); return 0; }}},
        {"train-adjust", {"Train the start adjuster", [](Run& r) { r.train_adjust(); return 0; }}},
        {"fix", {"Generate candidate patches", [](Run& r) { r.fix(); return 0; }}},
        {"evaluate", {"Score candidate patches and write the report",
                      [](Run& r) {
                          const int rc = r.evaluate();
                          std::cout << tokfix::read_file(r.path("report_table"));
                          return rc;
                      }}},
        {"pipeline", {"Run every stage end to end",
                      [](Run& r) {
                          const int rc = r.pipeline();
                          std::cout << tokfix::read_file(r.path("report_table"));
                          return rc;
                      }}},
    };
    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, cmd] : commands) {
        auto* sub = app.add_subcommand(name, cmd.first);
        if (name == "ingest") sub->add_option("input", input, "Corpus file to ingest");
        subs[name] = sub;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    tokfix::set_log_level(quiet ? tokfix::LogLevel::Quiet : verbose ? tokfix::LogLevel::Info : tokfix::LogLevel::Warn);
    if (oracle_regions) overrides.push_back("fixer.use_oracle_regions=true");

    try {
        Run r(tokfix::resolve_run_config(config_path, overrides));
        for (const auto& [name, sub] : subs)
            if (sub->parsed()) return commands.at(name).second(r);
    } catch (const tokfix::Error& e) {
        std::cerr << "tokfix: " << e.what() << "\n";
        return e.is_validation() ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "tokfix: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
