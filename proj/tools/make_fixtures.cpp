// Regenerates the offline fixture corpus: queries, general QA, config and one scripted
// reply table per backend role, recorded from the deterministic simulators in sim.hpp.

#include <chainsmith/pipeline.hpp>
#include <chainsmith/records.hpp>
#include <chainsmith/sim.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using namespace chainsmith;
using nlohmann::json;

namespace {

constexpr int kQueries = 12;

std::vector<schema::QueryRecord> make_queries() {
    std::vector<schema::QueryRecord> qs;
    std::mt19937 rng(424242);
    std::uniform_int_distribution<int> d(2, 60);
    for (int i = 0; i < kQueries; ++i) {
        const int a = d(rng), b = d(rng);
        char id[16];
        std::snprintf(id, sizeof id, "q%02d", i + 1);
        qs.push_back({id, std::string("file://images/") + id + ".png",
                      "What is " + std::to_string(a) + " + " + std::to_string(b) + "?", std::to_string(a + b)});
    }
    return qs;
}

std::vector<records::GeneralQaRecord> make_general_qa() {
    const char* items[][2] = {{"What colour is the sky on a clear day?", "blue"},
                              {"How many sides does a triangle have?", "3"},
                              {"What is the capital of France?", "Paris"},
                              {"How many legs does a spider have?", "8"},
                              {"What is frozen water called?", "ice"},
                              {"Which planet is closest to the sun?", "Mercury"}};
    std::vector<records::GeneralQaRecord> out;
    for (std::size_t i = 0; i < std::size(items); ++i)
        out.push_back({"g" + std::to_string(i + 1), "file://images/general" + std::to_string(i + 1) + ".png",
                       items[i][0], items[i][1]});
    return out;
}

json make_config() {
    json backends = json::object();
    for (const auto& role : pipeline::backend_roles())
        backends[role] = {{"kind", "scripted"}, {"script", "scripts/" + role + ".jsonl"}, {"max_in_flight", 4}};
    return {{"seed", 20240601},
            {"prompt_dir", "../assets/prompts"},
            {"backends", backends},
            {"generation", {{"samples_per_query", 6}, {"max_steps", 6}, {"params", {{"max_tokens", 512}}}}},
            {"curation",
             {{"positive_threshold", 85},
              {"rejected_target", 25},
              {"general_qa_ratio", 0.2},
              {"flawed_bands",
               json::array({{{"lo", 1}, {"hi", 33}, {"weight", 1.0 / 3}},
                            {{"lo", 34}, {"hi", 66}, {"weight", 1.0 / 3}},
                            {{"lo", 67}, {"hi", 84}, {"weight", 1.0 / 3}}})}}},
            {"dpo", {{"beta", 0.1}, {"sft_weight", 1.0}, {"rounds", 3}}},
            {"inference", {{"max_steps", 6}, {"reasoning_params", {{"temperature", 1.2}}}}},
            {"output_dir", "out"},
            {"paths", {{"queries", "queries.jsonl"}, {"general_qa", "general_qa.jsonl"}}}};
}

void write_file(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary | std::ios::trunc) << text;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Writes the whole corpus under `dir`; the pipeline output goes to `scratch`.
void generate(const fs::path& dir, const fs::path& scratch, const fs::path& prompt_dir, bool verbose) {
    records::write_records(dir / "queries.jsonl", make_queries());
    records::write_records(dir / "general_qa.jsonl", make_general_qa());
    write_file(dir / "pipeline.json", make_config().dump(2) + '\n');

    const auto cfg = pipeline::PipelineConfig::load(dir / "pipeline.json", {"output_dir=" + scratch.string(), "prompt_dir=" + fs::absolute(prompt_dir).string()});
    pipeline::Backends b;
    std::map<std::string, std::shared_ptr<backend::RecordingBackend>> recorders;
    for (const auto& role : pipeline::backend_roles()) {
        recorders[role] = std::make_shared<backend::RecordingBackend>(sim::for_role(role), 4);
        b.by_role[role] = recorders[role];
    }
    std::ostringstream log;
    pipeline::run_all(cfg, b, log);
    if (verbose) std::cerr << log.str();
    fs::create_directories(dir / "scripts");
    for (const auto& [role, rec] : recorders)
        backend::ScriptedBackend::save_table((dir / "scripts" / (role + ".jsonl")).string(), rec->table());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Regenerate the scripted fixture corpus"};
    std::string dir = "fixtures";
    bool check = false, verbose = false;
    app.add_option("--dir", dir, "fixture directory");
    app.add_flag("--check", check, "regenerate into a scratch copy and compare with --dir");
    app.add_flag("-v,--verbose", verbose, "print the pipeline log");
    CLI11_PARSE(app, argc, argv);
    const auto prompts = fs::path(dir) / ".." / "assets" / "prompts";

    try {
        const auto scratch = fs::temp_directory_path() / ("chainsmith-fixtures-" + std::to_string(std::random_device{}()));
        if (!check) {
            generate(dir, scratch / "out", prompts, verbose);
            fs::remove_all(scratch);
            std::cout << "fixtures written to " << dir << '\n';
            return 0;
        }
        const fs::path fresh = scratch / "fixtures";
        generate(fresh, scratch / "out", prompts, verbose);
        int stale = 0;
        for (const auto& entry : fs::recursive_directory_iterator(fresh)) {
            if (!entry.is_regular_file()) continue;
            const auto rel = fs::relative(entry.path(), fresh);
            if (read_file(entry.path()) != read_file(fs::path(dir) / rel)) {
                std::cerr << "stale fixture: " << rel.string() << '\n';
                ++stale;
            }
        }
        fs::remove_all(scratch);
        if (stale) return 1;
        std::cout << "fixtures up to date\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "make_fixtures: " << e.what() << '\n';
        return 2;
    }
}
