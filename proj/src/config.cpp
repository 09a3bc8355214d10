// SPDX-License-Identifier: Apache-2.0
#include "dualsplat/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace dualsplat {

std::string_view mask_mode_name(MaskMode m) {
    switch (m) {
    case MaskMode::Full: return "full";
    case MaskMode::None: return "none";
    case MaskMode::BinaryOnly: return "binary";
    case MaskMode::ScoreOnly: return "score";
    }
    return "?";
}

namespace {

struct Field {
    std::string name;
    std::string help;
    std::function<void(TrainConfig&, std::string_view)> set;
    std::function<std::string(const TrainConfig&)> get;
};

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
    const std::string s = trim(text);
    T v{};
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end)
        throw ConfigError("invalid value for " + std::string(key) + ": '" + s + "'");
    return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
    const std::string s = trim(text);
    if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
    if (s == "0" || s == "false" || s == "no" || s == "off") return false;
    throw ConfigError("invalid boolean for " + std::string(key) + ": '" + s + "'");
}

template <class T>
Field number_field(std::string name, std::string help, T TrainConfig::*member) {
    return Field{name, std::move(help),
                 [name, member](TrainConfig& c, std::string_view v) { c.*member = parse_number<T>(name, v); },
                 [member](const TrainConfig& c) {
                     if constexpr (std::is_floating_point_v<T>)
                         return format_double(c.*member);
                     else
                         return std::to_string(c.*member);
                 }};
}

Field bool_field(std::string name, std::string help, bool TrainConfig::*member) {
    return Field{name, std::move(help),
                 [name, member](TrainConfig& c, std::string_view v) { c.*member = parse_bool(name, v); },
                 [member](const TrainConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        using C = TrainConfig;
        std::vector<Field> f;
        f.push_back(number_field("lambda_rec", "weight of DSSIM in the reconstruction loss", &C::lambda_rec));
        f.push_back(number_field("dssim_divisor", "DSSIM = (1 - SSIM) / divisor (1 or 2)", &C::dssim_divisor));
        f.push_back(number_field("rho", "share of the angular correction given to view 1", &C::rho));
        f.push_back(number_field("k_geo", "geometric attenuation strength", &C::k_geo));
        f.push_back(number_field("s_sem", "semantic distance normalizer", &C::s_sem));
        f.push_back(number_field("c_sigma", "consistency score scale", &C::c_sigma));
        f.push_back(number_field("eta_s", "mask exponent in prior-stable regions", &C::eta_s));
        f.push_back(number_field("eta_t", "mask exponent in prior-transient regions", &C::eta_t));
        f.push_back(number_field("lambda_inc", "log-sigma regularizer weight", &C::lambda_inc));
        f.push_back(number_field("delta0", "sigma predictor offset", &C::delta0));
        f.push_back(number_field("eps_inc", "predictor loss epsilon", &C::eps_inc));
        f.push_back(number_field("feature_grid", "feature grid downsampling factor", &C::feature_grid));
        f.push_back(number_field("predictor_hidden", "hidden width of the sigma predictor", &C::predictor_hidden));
        f.push_back(number_field("lr_predictor", "sigma predictor learning rate", &C::lr_predictor));
        f.push_back(number_field("gamma", "conflict EMA decay", &C::gamma));
        f.push_back(number_field("lambda_prune", "conflict opacity decay strength", &C::lambda_prune));
        f.push_back(number_field("decay_interval", "iterations between opacity decays", &C::decay_interval));
        f.push_back(number_field("prune_opacity", "prune threshold on opacity", &C::prune_opacity));
        f.push_back(number_field("warmup_iters", "iterations using the prior mask only", &C::warmup_iters));
        f.push_back(number_field("total_iters", "training iterations", &C::total_iters));
        f.push_back(number_field("densify_start", "first densification iteration", &C::densify_start));
        f.push_back(number_field("densify_stop_fraction", "densification stops at this fraction of total_iters",
                                 &C::densify_stop_fraction));
        f.push_back(number_field("densify_interval", "iterations between densify/prune events", &C::densify_interval));
        f.push_back(number_field("densify_grad_threshold", "mean view-space gradient norm threshold",
                                 &C::densify_grad_threshold));
        f.push_back(number_field("densify_size_fraction", "clone/split radius threshold as fraction of width",
                                 &C::densify_size_fraction));
        f.push_back(number_field("split_divisor", "scale divisor for split children", &C::split_divisor));
        f.push_back(number_field("clone_offset", "clone displacement in scene units", &C::clone_offset));
        f.push_back(number_field("max_gaussians", "densification stops adding above this count", &C::max_gaussians));
        f.push_back(number_field("lr_position", "Adam learning rate: position", &C::lr_position));
        f.push_back(number_field("lr_scale", "Adam learning rate: log-scale", &C::lr_scale));
        f.push_back(number_field("lr_rotation", "Adam learning rate: rotation", &C::lr_rotation));
        f.push_back(number_field("lr_opacity", "Adam learning rate: opacity logit", &C::lr_opacity));
        f.push_back(number_field("lr_color", "Adam learning rate: color", &C::lr_color));
        f.push_back(number_field("adam_beta1", "Adam first-moment decay", &C::adam_beta1));
        f.push_back(number_field("adam_beta2", "Adam second-moment decay", &C::adam_beta2));
        f.push_back(number_field("adam_eps", "Adam epsilon", &C::adam_eps));
        f.push_back(number_field("init_count", "initial Gaussian count", &C::init_count));
        f.push_back(number_field("init_scale", "initial isotropic scale (scene units)", &C::init_scale));
        f.push_back(number_field("init_opacity", "initial opacity", &C::init_opacity));
        f.push_back(number_field("image_width", "render width", &C::image_width));
        f.push_back(number_field("image_height", "render height", &C::image_height));
        f.push_back(number_field("cutoff_sigma", "Mahalanobis cutoff radius", &C::cutoff_sigma));
        f.push_back(number_field("weight_clamp", "upper clamp on per-Gaussian weight", &C::weight_clamp));
        f.push_back(number_field("min_weight", "weights below this are skipped", &C::min_weight));
        f.push_back(bool_field("deterministic", "fixed reduction order", &C::deterministic));
        f.push_back(Field{"mask_mode", "full | none | binary | score",
                          [](TrainConfig& c, std::string_view v) {
                              const std::string s = trim(v);
                              if (s == "full") c.mask_mode = MaskMode::Full;
                              else if (s == "none") c.mask_mode = MaskMode::None;
                              else if (s == "binary") c.mask_mode = MaskMode::BinaryOnly;
                              else if (s == "score") c.mask_mode = MaskMode::ScoreOnly;
                              else throw ConfigError("invalid value for mask_mode: '" + s + "'");
                          },
                          [](const TrainConfig& c) { return std::string(mask_mode_name(c.mask_mode)); }});
        f.push_back(bool_field("harmonize", "cross-view gradient harmonization", &C::harmonize));
        f.push_back(bool_field("conflict_structure", "conflict-aware densification and pruning",
                               &C::conflict_structure));
        f.push_back(bool_field("single_view", "one view per iteration", &C::single_view));
        f.push_back(number_field("seed", "random seed", &C::seed));
        f.push_back(number_field("checkpoint_interval", "iterations between checkpoints (0: final only)",
                                 &C::checkpoint_interval));
        return f;
    }();
    return table;
}

const Field& find_field(std::string_view key) {
    for (const auto& f : fields())
        if (f.name == key) return f;
    throw ConfigError("unknown config key: " + std::string(key));
}

}  // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& f : fields()) keys.push_back(f.name);
    return keys;
}

std::string config_key_help(std::string_view key) { return find_field(key).help; }

void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value) {
    find_field(key).set(cfg, value);
}

std::string get_config_value(const TrainConfig& cfg, std::string_view key) { return find_field(key).get(cfg); }

TrainConfig parse_config_text(std::string_view text, TrainConfig base) {
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        set_config_value(base, trim(std::string_view(t).substr(0, eq)), std::string_view(t).substr(eq + 1));
    }
    return base;
}

std::string config_to_text(const TrainConfig& cfg) {
    std::string out;
    for (const auto& f : fields()) out += f.name + " = " + f.get(cfg) + "\n";
    return out;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), base);
}

void save_config(const TrainConfig& cfg, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config " + path.string());
    out << config_to_text(cfg);
}

std::vector<std::string> validate_config(const TrainConfig& c) {
    std::vector<std::string> bad;
    auto need = [&](bool ok, const char* what) {
        if (!ok) bad.emplace_back(what);
    };
    need(c.rho >= 0.0 && c.rho <= 1.0, "rho must lie in [0,1]");
    need(c.gamma > 0.0 && c.gamma < 1.0, "gamma must lie in (0,1)");
    need(c.lambda_rec >= 0.0 && c.lambda_rec <= 1.0, "lambda_rec must lie in [0,1]");
    need(c.dssim_divisor > 0.0, "dssim_divisor must be > 0");
    need(c.k_geo >= 0.0, "k_geo must be >= 0");
    need(c.s_sem > 0.0, "s_sem must be > 0");
    need(c.c_sigma > 0.0, "c_sigma must be > 0");
    need(c.eta_s > 0.0 && c.eta_t > 0.0, "eta_s and eta_t must be > 0");
    need(c.eps_inc > 0.0, "eps_inc must be > 0");
    need(c.lambda_prune > 0.0, "lambda_prune must be > 0");
    need(c.decay_interval > 0, "decay_interval must be > 0");
    need(c.prune_opacity > 0.0 && c.prune_opacity < 1.0, "prune_opacity must lie in (0,1)");
    need(c.densify_interval > 0, "densify_interval must be > 0");
    need(c.densify_grad_threshold > 0.0, "densify_grad_threshold must be > 0");
    need(c.densify_size_fraction > 0.0, "densify_size_fraction must be > 0");
    need(c.split_divisor > 0.0, "split_divisor must be > 0");
    need(c.total_iters >= 0, "total_iters must be >= 0");
    need(c.warmup_iters >= 0 && (c.total_iters == 0 || c.warmup_iters < c.total_iters),
         "warmup_iters must be < total_iters");
    need(c.feature_grid >= 1, "feature_grid must be >= 1");
    need(c.predictor_hidden >= 1, "predictor_hidden must be >= 1");
    need(c.image_width >= 11 && c.image_height >= 11, "image must be at least 11x11 (SSIM window)");
    need(c.cutoff_sigma > 0.0, "cutoff_sigma must be > 0");
    need(c.weight_clamp > 0.0 && c.weight_clamp < 1.0, "weight_clamp must lie in (0,1)");
    need(c.min_weight >= 0.0 && c.min_weight < c.weight_clamp, "min_weight must lie in [0, weight_clamp)");
    need(c.init_count >= 1, "init_count must be >= 1");
    need(c.init_scale > 0.0, "init_scale must be > 0");
    need(c.init_opacity > 0.0 && c.init_opacity < 1.0, "init_opacity must lie in (0,1)");
    need(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0 && c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0,
         "Adam betas must lie in [0,1)");
    return bad;
}

std::string ablation_tag(const TrainConfig& c) {
    std::vector<std::string> parts;
    if (c.single_view) parts.emplace_back("single-view");
    switch (c.mask_mode) {
    case MaskMode::Full: break;
    case MaskMode::None: parts.emplace_back("no-mask"); break;
    case MaskMode::BinaryOnly: parts.emplace_back("bin-mask-only"); break;
    case MaskMode::ScoreOnly: parts.emplace_back("score-mask-only"); break;
    }
    if (!c.harmonize && !c.single_view) parts.emplace_back("no-harmonize");
    if (!c.conflict_structure && !c.single_view) parts.emplace_back("no-conflict-structure");
    if (parts.empty()) return "full";
    std::string tag = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) tag += "+" + parts[i];
    return tag;
}

}  // namespace dualsplat
