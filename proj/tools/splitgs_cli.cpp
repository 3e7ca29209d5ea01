#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <memory>

#include "splitgs/checkpoint.hpp"
#include "splitgs/image_io.hpp"
#include "splitgs/pipeline.hpp"
#include "splitgs/synth.hpp"

using namespace splitgs;

int main(int argc, char** argv) {
    CLI::App app{"splitgs: CPU gaussian-splatting engine for dynamic scenes"};
    app.require_subcommand(1);

    // ----- synth -----
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
    std::string synth_out;
    uint64_t synth_seed = 0;
    int synth_frames = 60;
    std::string synth_res = "64x64";
    synth_cmd->add_option("--out", synth_out, "Output directory")->required();
    synth_cmd->add_option("--seed", synth_seed, "RNG seed");
    synth_cmd->add_option("--frames", synth_frames, "Frame count");
    synth_cmd->add_option("--res", synth_res, "Resolution WxH");

    // ----- pretrain / train -----
    std::string data_dir, out_dir, config_file, resume_file;
    auto add_train_opts = [&](CLI::App* cmd) {
        cmd->add_option("--data", data_dir, "Dataset directory")->required();
        cmd->add_option("--out", out_dir, "Output directory")->required();
        cmd->add_option("--config", config_file, "JSON config file");
        cmd->add_option("--resume", resume_file, "Checkpoint to resume from");
    };
    auto* pretrain_cmd = app.add_subcommand("pretrain", "Depth-aware pretraining only");
    add_train_opts(pretrain_cmd);
    auto* train_cmd = app.add_subcommand("train", "Full training (DAP + Stage I + Stage II)");
    add_train_opts(train_cmd);

    // ----- render -----
    auto* render_cmd = app.add_subcommand("render", "Render one view from a checkpoint");
    std::string render_ckpt, render_out, render_which = "both";
    double render_time = 0.0;
    render_cmd->add_option("--ckpt", render_ckpt, "Checkpoint file")->required();
    render_cmd->add_option("--time", render_time, "Normalized time in [0,1]")->required();
    render_cmd->add_option("--which", render_which, "both|static|dynamic")
        ->check(CLI::IsMember({"both", "static", "dynamic"}));
    render_cmd->add_option("--out", render_out, "Output PNG")->required();

    // ----- eval -----
    auto* eval_cmd = app.add_subcommand("eval", "Per-frame PSNR/SSIM");
    std::string eval_ckpt, eval_data, eval_out;
    eval_cmd->add_option("--ckpt", eval_ckpt, "Checkpoint file")->required();
    eval_cmd->add_option("--data", eval_data, "Dataset directory")->required();
    eval_cmd->add_option("--out", eval_out, "Output metrics.json")->required();

    // ----- prune-report -----
    auto* prune_cmd = app.add_subcommand("prune-report", "Visibility scores per static gaussian");
    std::string prune_ckpt, prune_data, prune_out;
    prune_cmd->add_option("--ckpt", prune_ckpt, "Checkpoint file")->required();
    prune_cmd->add_option("--data", prune_data, "Dataset directory")->required();
    prune_cmd->add_option("--out", prune_out, "Output report.jsonl")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << e.what() << "\n\n" << app.help() << std::flush;
        return 2;
    }

    try {
        if (*synth_cmd) {
            SynthSpec spec;
            spec.frame_count = synth_frames;
            if (std::sscanf(synth_res.c_str(), "%dx%d", &spec.width, &spec.height) != 2 ||
                spec.width <= 0 || spec.height <= 0) {
                std::cerr << "invalid --res, expected WxH\n";
                return 2;
            }
            synth_scene(spec, synth_seed, synth_out);
            std::cout << "dataset written to " << synth_out << "\n";
            return 0;
        }

        if (*pretrain_cmd || *train_cmd) {
            const Dataset dataset = load_dataset(data_dir);
            TrainConfig cfg = TrainConfig::desk_scale();
            if (!config_file.empty()) cfg = TrainConfig::load_file(config_file);

            std::filesystem::create_directories(out_dir);
            std::unique_ptr<Trainer> trainer;
            if (!resume_file.empty()) {
                const Checkpoint ckpt = load_checkpoint(resume_file);
                trainer = std::make_unique<Trainer>(dataset, ckpt);
            } else {
                trainer = std::make_unique<Trainer>(dataset, cfg);
            }
            trainer->log_line = [](const std::string& line) { std::cout << line << "\n"; };
            const auto ckpt_path = std::filesystem::path(out_dir) / "checkpoint.spgs";
            trainer->on_checkpoint = [&](const Checkpoint& c) { save_checkpoint(ckpt_path, c); };

            if (*pretrain_cmd)
                trainer->pretrain_dap();
            else
                trainer->run_all();

            save_checkpoint(ckpt_path, trainer->make_checkpoint());

            // Training report with losses, counts and lifecycle events.
            {
                std::ofstream rep(std::filesystem::path(out_dir) / "report.jsonl");
                for (const auto& rec : trainer->report().iterations)
                    rep << iteration_json(rec) << "\n";
            }
            const EvalSummary summary = trainer->evaluate();
            std::ofstream metrics(std::filesystem::path(out_dir) / "metrics.json");
            metrics << eval_json(summary) << "\n";
            std::cout << "final mean PSNR " << summary.mean_psnr << " dB, mean SSIM "
                      << summary.mean_ssim << "\n";
            return 0;
        }

        if (*render_cmd) {
            const Checkpoint ckpt = load_checkpoint(render_ckpt);
            if (ckpt.cameras.empty()) {
                std::cerr << "checkpoint carries no cameras\n";
                return 1;
            }
            // Nearest stored viewpoint by time.
            size_t best = 0;
            for (size_t i = 1; i < ckpt.cameras.size(); ++i)
                if (std::abs(ckpt.camera_times[i] - render_time) <
                    std::abs(ckpt.camera_times[best] - render_time))
                    best = i;
            RenderSelection which = RenderSelection::kBoth;
            if (render_which == "static") which = RenderSelection::kStaticOnly;
            if (render_which == "dynamic") which = RenderSelection::kDynamicOnly;

            SceneEvalOptions opts;
            opts.apply_static_app = ckpt.config.enable_static_app;
            opts.apply_dynamic_app = ckpt.config.enable_dynamic_app;
            opts.dilation = ckpt.config.dilation;
            auto list = scene_at(ckpt.scene, render_time, ckpt.cameras[best], which, opts);
            const Eigen::Vector3d bg = which == RenderSelection::kDynamicOnly
                                           ? Eigen::Vector3d::Zero()
                                           : ckpt.scene.background;
            RenderOutput out =
                render(list, ckpt.cameras[best], bg, ckpt.config.raster_options(false));
            write_png(render_out, to_u8(out.color));
            std::cout << "wrote " << render_out << "\n";
            return 0;
        }

        if (*eval_cmd) {
            const Dataset dataset = load_dataset(eval_data);
            const Checkpoint ckpt = load_checkpoint(eval_ckpt);
            Trainer trainer(dataset, ckpt);
            const EvalSummary summary = trainer.evaluate();
            std::ofstream out(eval_out);
            if (!out) {
                std::cerr << "cannot write " << eval_out << "\n";
                return 1;
            }
            out << eval_json(summary) << "\n";
            std::cout << "mean PSNR " << summary.mean_psnr << " dB, mean SSIM "
                      << summary.mean_ssim << "\n";
            return 0;
        }

        if (*prune_cmd) {
            const Dataset dataset = load_dataset(prune_data);
            const Checkpoint ckpt = load_checkpoint(prune_ckpt);
            Trainer trainer(dataset, ckpt);
            const VisibilityStats stats = trainer.collect_visibility();
            const auto scores = visibility_score(stats);
            const PruneConfig& pc = ckpt.config.prune;
            std::ofstream out(prune_out);
            if (!out) {
                std::cerr << "cannot write " << prune_out << "\n";
                return 1;
            }
            for (size_t i = 0; i < scores.size(); ++i) {
                const bool low_freq = scores[i].freq < pc.min_render_frequency;
                const double mean_transparency =
                    scores[i].freq > 0 ? scores[i].vbar / scores[i].freq : 0.0;
                const bool pruned =
                    (pc.enable_frequency_rule && low_freq) ||
                    (pc.enable_transparency_rule && !low_freq &&
                     mean_transparency > pc.max_mean_transparency);
                nlohmann::json j{{"index", i},
                                 {"vbar", scores[i].vbar},
                                 {"freq", scores[i].freq},
                                 {"pruned", pruned}};
                out << j.dump() << "\n";
            }
            std::cout << "wrote " << prune_out << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
