#include "splitgs/config.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

namespace splitgs {

using nlohmann::json;

TrainConfig TrainConfig::paper_scale() { return TrainConfig{}; }

TrainConfig TrainConfig::desk_scale() {
    TrainConfig cfg;
    cfg.dap_iterations = 500;
    cfg.s1_iterations = 2000;
    cfg.s2_iterations = 3000;
    // Short schedules need a larger step budget than the paper-scale run;
    // same mechanism, calibrated endpoints.
    cfg.lr = LrSchedule{8e-3, 1.6e-4, 0};
    cfg.densify_interval = 400;
    cfg.densify_warmup = 400;
    cfg.prune_interval = 1000;
    cfg.prune_warmup = 500;
    return cfg;
}

RasterOptions TrainConfig::raster_options(bool retain) const {
    RasterOptions o;
    o.deterministic = deterministic;
    o.num_threads = num_threads;
    o.retain_forward = retain;
    o.precision = precision;
    return o;
}

LrSchedule TrainConfig::resolved_lr() const {
    LrSchedule s = lr;
    if (s.total_steps == 0) s.total_steps = total_iterations();
    return s;
}

namespace {

void get_if(const json& j, const char* key, double& out) {
    if (j.contains(key)) out = j.at(key).get<double>();
}
void get_if(const json& j, const char* key, int64_t& out) {
    if (j.contains(key)) out = j.at(key).get<int64_t>();
}
void get_if(const json& j, const char* key, uint64_t& out) {
    if (j.contains(key)) out = j.at(key).get<uint64_t>();
}
void get_if(const json& j, const char* key, int& out) {
    if (j.contains(key)) out = j.at(key).get<int>();
}
void get_if(const json& j, const char* key, bool& out) {
    if (j.contains(key)) out = j.at(key).get<bool>();
}

}  // namespace

std::string TrainConfig::to_json_string() const {
    json j;
    j["dap_iterations"] = dap_iterations;
    j["s1_iterations"] = s1_iterations;
    j["s2_iterations"] = s2_iterations;
    j["lr"] = {{"initial", lr.lr_initial}, {"final", lr.lr_final}, {"total_steps", lr.total_steps}};
    j["adam"] = {{"beta1", adam.beta1}, {"beta2", adam.beta2}, {"epsilon", adam.epsilon}};
    j["loss"] = {{"lambda_ssim", loss.lambda_ssim},
                 {"lambda_depth_initial", loss.lambda_depth_initial},
                 {"depth_decay_steps", loss.depth_decay_steps},
                 {"w_joint", loss.w_joint},
                 {"w_static", loss.w_static},
                 {"w_dyn", loss.w_dyn}};
    j["prune"] = {{"min_render_frequency", prune.min_render_frequency},
                  {"max_mean_transparency", prune.max_mean_transparency},
                  {"enable_frequency_rule", prune.enable_frequency_rule},
                  {"enable_transparency_rule", prune.enable_transparency_rule}};
    j["encoding"] = {{"l_spatial", encoding.l_spatial}, {"l_temporal", encoding.l_temporal}};
    j["densify"] = {{"grad_threshold", densify.grad_threshold},
                    {"size_threshold", densify.size_threshold},
                    {"split_scale_shrink", densify.split_scale_shrink},
                    {"max_gaussians", densify.max_gaussians},
                    {"reset_opacity", densify.reset_opacity},
                    {"reset_opacity_logit", densify.reset_opacity_logit}};
    j["densify_interval"] = densify_interval;
    j["densify_warmup"] = densify_warmup;
    j["prune_interval"] = prune_interval;
    j["prune_warmup"] = prune_warmup;
    j["seed"] = seed;
    j["precision"] = precision == RasterOptions::Precision::kDouble ? "double" : "single";
    j["deterministic"] = deterministic;
    j["num_threads"] = num_threads;
    j["sh_degree"] = sh_degree;
    j["mlp_hidden"] = mlp_hidden;
    j["mlp_depth"] = mlp_depth;
    j["enable_dap"] = enable_dap;
    j["enable_vdp"] = enable_vdp;
    j["enable_static_app"] = enable_static_app;
    j["enable_dynamic_app"] = enable_dynamic_app;
    j["dilation"] = dilation;
    j["init_opacity"] = init_opacity;
    j["init_dynamic_fraction"] = init_dynamic_fraction;
    j["checkpoint_interval"] = checkpoint_interval;
    return j.dump(2);
}

TrainConfig TrainConfig::from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidParameterError(std::string("config: malformed JSON: ") + e.what());
    }
    TrainConfig cfg;
    if (j.contains("preset")) {
        const auto p = j["preset"].get<std::string>();
        if (p == "desk")
            cfg = desk_scale();
        else if (p == "paper")
            cfg = paper_scale();
        else
            throw InvalidParameterError("config: unknown preset '" + p + "'");
    }
    get_if(j, "dap_iterations", cfg.dap_iterations);
    get_if(j, "s1_iterations", cfg.s1_iterations);
    get_if(j, "s2_iterations", cfg.s2_iterations);
    if (j.contains("lr")) {
        const auto& l = j["lr"];
        get_if(l, "initial", cfg.lr.lr_initial);
        get_if(l, "final", cfg.lr.lr_final);
        get_if(l, "total_steps", cfg.lr.total_steps);
    }
    if (j.contains("adam")) {
        const auto& a = j["adam"];
        get_if(a, "beta1", cfg.adam.beta1);
        get_if(a, "beta2", cfg.adam.beta2);
        get_if(a, "epsilon", cfg.adam.epsilon);
    }
    if (j.contains("loss")) {
        const auto& l = j["loss"];
        get_if(l, "lambda_ssim", cfg.loss.lambda_ssim);
        get_if(l, "lambda_depth_initial", cfg.loss.lambda_depth_initial);
        get_if(l, "depth_decay_steps", cfg.loss.depth_decay_steps);
        get_if(l, "w_joint", cfg.loss.w_joint);
        get_if(l, "w_static", cfg.loss.w_static);
        get_if(l, "w_dyn", cfg.loss.w_dyn);
    }
    if (j.contains("prune")) {
        const auto& p = j["prune"];
        get_if(p, "min_render_frequency", cfg.prune.min_render_frequency);
        get_if(p, "max_mean_transparency", cfg.prune.max_mean_transparency);
        get_if(p, "enable_frequency_rule", cfg.prune.enable_frequency_rule);
        get_if(p, "enable_transparency_rule", cfg.prune.enable_transparency_rule);
    }
    if (j.contains("encoding")) {
        const auto& e = j["encoding"];
        get_if(e, "l_spatial", cfg.encoding.l_spatial);
        get_if(e, "l_temporal", cfg.encoding.l_temporal);
    }
    if (j.contains("densify")) {
        const auto& d = j["densify"];
        get_if(d, "grad_threshold", cfg.densify.grad_threshold);
        get_if(d, "size_threshold", cfg.densify.size_threshold);
        get_if(d, "split_scale_shrink", cfg.densify.split_scale_shrink);
        get_if(d, "max_gaussians", cfg.densify.max_gaussians);
        get_if(d, "reset_opacity", cfg.densify.reset_opacity);
        get_if(d, "reset_opacity_logit", cfg.densify.reset_opacity_logit);
    }
    get_if(j, "densify_interval", cfg.densify_interval);
    get_if(j, "densify_warmup", cfg.densify_warmup);
    get_if(j, "prune_interval", cfg.prune_interval);
    get_if(j, "prune_warmup", cfg.prune_warmup);
    get_if(j, "seed", cfg.seed);
    if (j.contains("precision")) {
        const auto p = j["precision"].get<std::string>();
        if (p == "double")
            cfg.precision = RasterOptions::Precision::kDouble;
        else if (p == "single")
            cfg.precision = RasterOptions::Precision::kSingle;
        else
            throw InvalidParameterError("config: precision must be 'single' or 'double'");
    }
    get_if(j, "deterministic", cfg.deterministic);
    get_if(j, "num_threads", cfg.num_threads);
    get_if(j, "sh_degree", cfg.sh_degree);
    get_if(j, "mlp_hidden", cfg.mlp_hidden);
    get_if(j, "mlp_depth", cfg.mlp_depth);
    get_if(j, "enable_dap", cfg.enable_dap);
    get_if(j, "enable_vdp", cfg.enable_vdp);
    get_if(j, "enable_static_app", cfg.enable_static_app);
    get_if(j, "enable_dynamic_app", cfg.enable_dynamic_app);
    get_if(j, "dilation", cfg.dilation);
    get_if(j, "init_opacity", cfg.init_opacity);
    get_if(j, "init_dynamic_fraction", cfg.init_dynamic_fraction);
    get_if(j, "checkpoint_interval", cfg.checkpoint_interval);
    return cfg;
}

TrainConfig TrainConfig::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidParameterError("config: cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_string(text);
}

}  // namespace splitgs
