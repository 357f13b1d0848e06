#include "vbs/config.hpp"

#include <fstream>
#include <sstream>

namespace vbs {

void RunConfig::validate() const {
    if (lr < 0) throw ConfigError("config: lr must not be negative");
    if (momentum < 0 || momentum >= 1) throw ConfigError("config: momentum out of [0,1)");
    if (loss_scale <= 0) throw ConfigError("config: loss_scale must be positive");
    if (batch < 1) throw ConfigError("config: batch size must be >= 1");
    if (epochs < 0 || max_steps < 0) throw ConfigError("config: negative step counts");
    if (preset != "vit-b16" && preset != "vit-l16" && preset != "vit-desk")
        throw ConfigError("config: unknown preset " + preset);
    if (threshold <= 0 || threshold >= 1) throw ConfigError("config: threshold out of (0,1)");
}

std::string RunConfig::echo() const {
    std::ostringstream os;
    os.precision(17);
    os << "preset=" << preset << "\n"
       << "lr=" << lr << "\n"
       << "weight_decay=" << weight_decay << "\n"
       << "momentum=" << momentum << "\n"
       << "loss_scale=" << loss_scale << "\n"
       << "batch=" << batch << "\n"
       << "epochs=" << epochs << "\n"
       << "max_steps=" << max_steps << "\n"
       << "seed=" << seed << "\n"
       << "data_dir=" << data_dir << "\n"
       << "out_dir=" << out_dir << "\n"
       << "lambda=" << lambda << "\n"
       << "threshold=" << threshold << "\n"
       << "entropy_bonus=" << (entropy_bonus ? 1 : 0) << "\n"
       << "frequency_weights=" << (frequency_weights ? 1 : 0) << "\n";
    return os.str();
}

void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value) {
    try {
        if (key == "preset")
            cfg.preset = value;
        else if (key == "lr")
            cfg.lr = std::stod(value);
        else if (key == "weight_decay")
            cfg.weight_decay = std::stod(value);
        else if (key == "momentum")
            cfg.momentum = std::stod(value);
        else if (key == "loss_scale")
            cfg.loss_scale = std::stod(value);
        else if (key == "batch")
            cfg.batch = std::stoi(value);
        else if (key == "epochs")
            cfg.epochs = std::stoi(value);
        else if (key == "max_steps")
            cfg.max_steps = std::stoi(value);
        else if (key == "seed")
            cfg.seed = std::stoull(value);
        else if (key == "data_dir")
            cfg.data_dir = value;
        else if (key == "out_dir")
            cfg.out_dir = value;
        else if (key == "lambda")
            cfg.lambda = std::stod(value);
        else if (key == "threshold")
            cfg.threshold = std::stod(value);
        else if (key == "entropy_bonus")
            cfg.entropy_bonus = value == "1" || value == "true";
        else if (key == "frequency_weights")
            cfg.frequency_weights = value == "1" || value == "true";
        else
            throw ConfigError("config: unknown key " + key);
    } catch (const std::invalid_argument&) {
        throw ConfigError("config: bad value for " + key + ": " + value);
    } catch (const std::out_of_range&) {
        throw ConfigError("config: value out of range for " + key + ": " + value);
    }
}

RunConfig parse_config_file(const std::string& path, const RunConfig& base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    RunConfig cfg = base;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) + " is not key=value");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        apply_config_line(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

}  // namespace vbs
