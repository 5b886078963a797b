#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "flatcad/errors.hpp"
#include "flatcad/training.hpp"

namespace flatcad {

// Plain-text run configuration: one `key = value` per line, `#` comments.
// Unknown keys are hard errors. serialize_config(parse_config(text)) is the
// identity on the resolved settings.

inline Route route_from_string(const std::string& s) {
    if (s == "proxy_fd") return Route::ProxyFD;
    if (s == "proxy_ad") return Route::ProxyAD;
    if (s == "gauss") return Route::GaussBaseline;
    if (s == "none") return Route::None;
    throw ConfigError("unknown route: " + s + " (expected proxy_fd|proxy_ad|gauss|none)");
}

inline TrainConfig parse_config_stream(std::istream& in, const std::string& name) {
    TrainConfig cfg;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string key, eq, value;
        std::istringstream ls(line);
        if (!(ls >> key)) continue;
        if (!(ls >> eq >> value) || eq != "=")
            throw ConfigError(name + ":" + std::to_string(line_no) + ": expected `key = value`");

        auto real_value = [&] { return std::stod(value); };
        auto int_value = [&] { return std::stol(value); };
        auto seed_value = [&] { return static_cast<std::uint64_t>(std::stoull(value)); };

        try {
            if (key == "depth") cfg.depth = static_cast<int>(int_value());
            else if (key == "width") cfg.width = static_cast<int>(int_value());
            else if (key == "omega0") cfg.omega0 = real_value();
            else if (key == "lr") cfg.lr = real_value();
            else if (key == "max_iters") cfg.max_iters = static_cast<int>(int_value());
            else if (key == "plateau_window") cfg.plateau_window = static_cast<int>(int_value());
            else if (key == "eval_every") cfg.eval_every = static_cast<int>(int_value());
            else if (key == "batch_manifold") cfg.batch_manifold = static_cast<std::size_t>(int_value());
            else if (key == "batch_freespace") cfg.batch_freespace = static_cast<std::size_t>(int_value());
            else if (key == "shell_count") cfg.shell_count = static_cast<std::size_t>(int_value());
            else if (key == "knn_k") cfg.knn_k = static_cast<int>(int_value());
            else if (key == "checkpoint_every") cfg.checkpoint_every = static_cast<int>(int_value());
            else if (key == "w_dm") cfg.weights.w_dm = real_value();
            else if (key == "w_dnm") cfg.weights.w_dnm = real_value();
            else if (key == "w_eik") cfg.weights.w_eik = real_value();
            else if (key == "w_proxy") cfg.weights.w_proxy = real_value();
            else if (key == "w_gauss") cfg.weights.w_gauss = real_value();
            else if (key == "alpha") cfg.weights.alpha = real_value();
            else if (key == "route") cfg.route = route_from_string(value);
            else if (key == "fd_step") cfg.fd_step = real_value();
            else if (key == "proxy_form") {
                if (value == "l1") cfg.proxy_squared = false;
                else if (value == "l2") cfg.proxy_squared = true;
                else throw ConfigError("proxy_form must be l1 or l2");
            } else if (key == "seed_init") cfg.seeds.init = seed_value();
            else if (key == "seed_shell") cfg.seeds.shell = seed_value();
            else if (key == "seed_batch") cfg.seeds.batch = seed_value();
            else if (key == "seed_theta") cfg.seeds.theta = seed_value();
            else if (key == "seed_freespace") cfg.seeds.freespace = seed_value();
            else if (key == "adam_beta1") cfg.adam.beta1 = real_value();
            else if (key == "adam_beta2") cfg.adam.beta2 = real_value();
            else if (key == "adam_eps") cfg.adam.eps = real_value();
            else throw ConfigError(name + ":" + std::to_string(line_no) + ": unknown key " + key);
        } catch (const std::invalid_argument&) {
            throw ConfigError(name + ":" + std::to_string(line_no) + ": bad value for " + key);
        } catch (const std::out_of_range&) {
            throw ConfigError(name + ":" + std::to_string(line_no) + ": value out of range for " + key);
        }
    }
    return cfg;
}

inline TrainConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    return parse_config_stream(in, path);
}

inline std::string serialize_config(const TrainConfig& cfg) {
    std::ostringstream out;
    out.precision(17);
    const char* route = cfg.route == Route::ProxyFD    ? "proxy_fd"
                        : cfg.route == Route::ProxyAD  ? "proxy_ad"
                        : cfg.route == Route::GaussBaseline ? "gauss"
                                                       : "none";
    out << "depth = " << cfg.depth << "\n";
    out << "width = " << cfg.width << "\n";
    out << "omega0 = " << cfg.omega0 << "\n";
    out << "lr = " << cfg.lr << "\n";
    out << "max_iters = " << cfg.max_iters << "\n";
    out << "plateau_window = " << cfg.plateau_window << "\n";
    out << "eval_every = " << cfg.eval_every << "\n";
    out << "batch_manifold = " << cfg.batch_manifold << "\n";
    out << "batch_freespace = " << cfg.batch_freespace << "\n";
    out << "shell_count = " << cfg.shell_count << "\n";
    out << "knn_k = " << cfg.knn_k << "\n";
    out << "checkpoint_every = " << cfg.checkpoint_every << "\n";
    out << "w_dm = " << cfg.weights.w_dm << "\n";
    out << "w_dnm = " << cfg.weights.w_dnm << "\n";
    out << "w_eik = " << cfg.weights.w_eik << "\n";
    out << "w_proxy = " << cfg.weights.w_proxy << "\n";
    out << "w_gauss = " << cfg.weights.w_gauss << "\n";
    out << "alpha = " << cfg.weights.alpha << "\n";
    out << "route = " << route << "\n";
    out << "fd_step = " << cfg.fd_step << "\n";
    out << "proxy_form = " << (cfg.proxy_squared ? "l2" : "l1") << "\n";
    out << "seed_init = " << cfg.seeds.init << "\n";
    out << "seed_shell = " << cfg.seeds.shell << "\n";
    out << "seed_batch = " << cfg.seeds.batch << "\n";
    out << "seed_theta = " << cfg.seeds.theta << "\n";
    out << "seed_freespace = " << cfg.seeds.freespace << "\n";
    out << "adam_beta1 = " << cfg.adam.beta1 << "\n";
    out << "adam_beta2 = " << cfg.adam.beta2 << "\n";
    out << "adam_eps = " << cfg.adam.eps << "\n";
    return out.str();
}

}  // namespace flatcad
