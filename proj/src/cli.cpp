#include <chainsmith/cli.hpp>
#include <chainsmith/pipeline.hpp>

#include <CLI11.hpp>

#include <iostream>

namespace chainsmith::cli {

namespace {

struct Options {
    std::string config;
    std::vector<std::string> overrides;
    int instances = 100;
    std::uint64_t verify_seed = 20240601;
};

void add_config_options(CLI::App* cmd, Options& opts, bool required) {
    auto* c = cmd->add_option("-c,--config", opts.config, "Pipeline config file (JSON)");
    if (required) c->required();
    cmd->add_option("--set", opts.overrides, "Override a config value, e.g. curation.positive_threshold=80");
}

int dpo_verify(const Options& opts, std::ostream& out) {
    const auto rep = dpo::run_verification(opts.instances, opts.verify_seed);
    out << "gradient check: " << rep.instances << " instances, max relative error "
        << rep.max_gradient_relative_error << " (tolerance " << rep.gradient_tolerance << ")\n";
    out << "ln 2 residual at policy == reference: " << rep.max_ln2_residual << " (tolerance " << rep.ln2_tolerance
        << ")\n";
    out << "bt_probability(2, 0) = " << rep.bt_value << '\n';
    out << rep.to_json().dump() << '\n';
    return rep.passed() ? kExitOk : kExitRuntime;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"chainsmith: long-chain reasoning data pipeline, preference curation and two-agent inference"};
    app.require_subcommand(1);
    Options opts;

    struct Command {
        const char* name;
        const char* help;
    };
    const Command commands[] = {
        {"generate", "Sample reasoning traces for every query (queries -> traces)"},
        {"assess", "Filter answers and score reasoning paths (traces -> scored)"},
        {"curate", "Build reasoning SFT, summary SFT and preference pairs (scored -> sft + pairs)"},
        {"dpo-verify", "Gradient-check and identity checks of the preference loss"},
        {"dpo-iterate", "Run the iterative preference-optimization experiment on the toy policy"},
        {"infer", "Answer queries with the reasoning and summary agents (queries -> answers)"},
        {"eval", "Judge answers and traces; write the report and confusion matrix (answers -> report)"},
        {"all", "Run generate, assess, curate, dpo-iterate, infer and eval in order"},
    };
    std::map<std::string, CLI::App*> subs;
    for (const auto& c : commands) {
        auto* sub = app.add_subcommand(c.name, c.help);
        add_config_options(sub, opts, std::string(c.name) != "dpo-verify");
        subs[c.name] = sub;
    }
    subs["dpo-verify"]->add_option("--instances", opts.instances, "Random instances to check")->capture_default_str();
    subs["dpo-verify"]->add_option("--seed", opts.verify_seed, "Instance generator seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        // Subcommand help requests surface as ParseError with exit code 0.
        if (e.get_exit_code() == 0) {
            for (const auto& [name, sub] : subs)
                if (sub->parsed()) out << sub->help();
            return kExitOk;
        }
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    }

    std::string command;
    for (const auto& [name, sub] : subs)
        if (sub->parsed()) command = name;

    try {
        if (command == "dpo-verify" && opts.config.empty()) return dpo_verify(opts, out);
        const auto cfg = pipeline::PipelineConfig::load(opts.config, opts.overrides);
        using pipeline::Backends;
        if (command == "generate") {
            pipeline::stage_generate(cfg, Backends::from_config(cfg, {"generator"}), err);
        } else if (command == "assess") {
            pipeline::stage_assess(cfg, Backends::from_config(cfg, {"answer_judge", "score_judge"}), err);
        } else if (command == "curate") {
            pipeline::stage_curate(cfg, err);
        } else if (command == "dpo-verify") {
            return dpo_verify(opts, out);
        } else if (command == "dpo-iterate") {
            pipeline::stage_dpo_iterate(cfg, err);
        } else if (command == "infer") {
            pipeline::stage_infer(cfg, Backends::from_config(cfg, {"reasoning_agent", "summary_agent"}), err);
        } else if (command == "eval") {
            pipeline::stage_eval(cfg, Backends::from_config(cfg, {"answer_judge", "trace_judge"}), err);
        } else if (command == "all") {
            pipeline::run_all(cfg, Backends::from_config(cfg), err);
        } else {
            err << "error: unknown command '" << command << "'\n";
            return kExitValidation;
        }
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}

}  // namespace chainsmith::cli
