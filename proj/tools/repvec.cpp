#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "repvec/config.hpp"
#include "repvec/pipeline.hpp"

int main(int argc, char **argv)
{
    std::string commands;
    for(const auto c : repvec::pipeline_commands())
        commands += (commands.empty() ? "" : ", ") + std::string(c);

    CLI::App app{"Patient representation learning pipeline"};
    std::string command, config_path, out;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;
    app.add_option("command", command, "One of: " + commands)->required();
    app.add_option("--config", config_path, "key=value configuration file")->required();
    app.add_option("--seed", seed, "Override the seed key");
    app.add_option("--out", out, "Override the output directory");
    app.add_option("--set", overrides, "Extra key=value overrides")->take_all();
    app.set_version_flag("--version", std::string(repvec::kVersion));

    try {
        app.parse(argc, argv);
    } catch(const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        auto config = repvec::PipelineConfig::load(config_path);
        if(seed)
            config.set("seed", std::to_string(*seed));
        if(!out.empty())
            config.set("out", std::filesystem::absolute(out).string());
        for(const auto &kv : overrides) {
            const auto eq = kv.find('=');
            if(eq == std::string::npos)
                throw repvec::ConfigError("--set expects key=value, got '" + kv + "'");
            config.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        return repvec::run_command(command, config, std::cerr);
    } catch(const repvec::ConfigError &e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    }
}
