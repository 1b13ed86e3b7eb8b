// Copyright 2026 The tdrs Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tdrs/core.hpp"
#include "tdrs/harness.hpp"
#include "tdrs/io.hpp"
#include "tdrs/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitCalibration = 4;

struct SequenceFlags {
    std::size_t vision = 8;
    std::size_t instr = 8;
    std::size_t dim = 32;
    std::uint64_t seed = 0;
};

void add_hyper_flags(CLI::App* cmd, tdrs::DrsHyperParams& hyper) {
    cmd->add_option("--w-min-dc", hyper.w_min_dc, "Gaussian floor weight at d_max");
    cmd->add_option("--w-min-re", hyper.w_min_re, "reinforcement floor weight at d_max");
    cmd->add_option("--lambda-dc", hyper.lambda_dc, "distance-control strength");
    cmd->add_option("--lambda-re", hyper.lambda_re, "reinforcement strength");
    cmd->add_option("--eps", hyper.scale_clamp_eps, "scale clamp epsilon");
    cmd->add_option("--tol", hyper.fixed_point_tol, "fixed-point tolerance");
    cmd->add_option("--max-iters", hyper.fixed_point_max_iters, "fixed-point iteration cap");
}

void add_sequence_flags(CLI::App* cmd, SequenceFlags& seq) {
    cmd->add_option("--vision", seq.vision, "number of vision tokens");
    cmd->add_option("--instr", seq.instr, "number of instruction tokens");
    cmd->add_option("--dim", seq.dim, "embedding dimension (even)");
    cmd->add_option("--seed", seq.seed, "RNG seed for the synthetic sequence");
}

tdrs::Variant parse_variant(const std::string& s) {
    if (s == "baseline") return tdrs::Variant::baseline;
    if (s == "sd") return tdrs::Variant::sd_only;
    if (s == "no-rerd" || s == "no_rerd") return tdrs::Variant::no_rerd;
    if (s == "full") return tdrs::Variant::full;
    throw std::invalid_argument("unknown variant: " + s);
}

json calibration_json(const tdrs::CalibrationReport& c) {
    json j;
    j["abs_min"] = c.abs_min;
    j["w_min_dc"] = c.w_min_dc;
    j["w_min_re"] = c.w_min_re;
    j["lambda_dc"] = c.lambda_dc;
    j["lambda_re"] = c.lambda_re;
    j["auto_calibrated"] = c.auto_calibrated;
    j["sigma0"] = c.sigma0 ? json(*c.sigma0) : json(nullptr);
    j["sigma_re"] = c.sigma_re ? json(*c.sigma_re) : json(nullptr);
    j["alpha_ref"] = c.alpha_ref ? json(*c.alpha_ref) : json(nullptr);
    j["fixed_point_iterations"] =
        c.fixed_point_iterations ? json(*c.fixed_point_iterations) : json(nullptr);
    return j;
}

json stats_json(const tdrs::VariantStats& s) {
    json j;
    j["distant_mass"] = s.distant_mass;
    j["cross_modal_mass"] = s.cross_modal_mass ? json(*s.cross_modal_mass) : json(nullptr);
    j["mean_entropy"] = s.mean_entropy;
    j["argmax_agreement_vs_baseline"] = s.argmax_agreement_vs_baseline;
    return j;
}

json labels_json(const tdrs::AttentionResult& r) {
    json j;
    auto seg_names = [](const std::vector<tdrs::Segment>& segs) {
        json arr = json::array();
        for (auto s : segs) arr.push_back(s == tdrs::Segment::vision ? "vision" : "instruction");
        return arr;
    };
    j["row_positions"] = r.row_positions;
    j["col_positions"] = r.col_positions;
    j["row_segments"] = seg_names(r.row_segments);
    j["col_segments"] = seg_names(r.col_segments);
    return j;
}

void write_json(const fs::path& path, const json& j) {
    tdrs::write_text_file(path.string(), j.dump(2) + "\n");
}

int cmd_decay(std::size_t dim, long max_gap, const tdrs::DrsHyperParams& hyper,
              const std::string& probe_name, std::uint64_t seed, int trials,
              const std::string& out_dir) {
    tdrs::ProbeSpec probe;
    if (probe_name == "ones") {
        probe.kind = tdrs::ProbeSpec::Kind::ones;
    } else if (probe_name == "random") {
        probe.kind = tdrs::ProbeSpec::Kind::random;
        probe.seed = seed;
        probe.trials = trials;
    } else {
        std::cerr << "error: unknown probe '" << probe_name << "'\n";
        return kExitUsage;
    }

    const tdrs::DecayCurve curve = tdrs::sweep_decay(dim, max_gap, hyper, probe);

    std::string csv = "gap,mean_abs_logit,r_dc,r_re\n";
    for (std::size_t i = 0; i < curve.gaps.size(); ++i) {
        csv += std::to_string(curve.gaps[i]);
        csv += ',';
        csv += tdrs::format_double(curve.mean_abs_logit[i]);
        csv += ',';
        csv += tdrs::format_double(curve.r_dc_curve[i]);
        csv += ',';
        csv += tdrs::format_double(curve.r_re_curve[i]);
        csv += '\n';
    }

    json cal;
    cal["sigma0"] = curve.sigma0;
    cal["sigma_re"] = curve.sigma_re;
    cal["alpha_ref"] = curve.alpha_ref;
    cal["iterations"] = curve.iterations;
    cal["w_min_dc"] = curve.hyper.w_min_dc;
    cal["w_min_re"] = curve.hyper.w_min_re;

    fs::create_directories(out_dir);
    tdrs::write_text_file((fs::path(out_dir) / "decay_curve.csv").string(), csv);
    write_json(fs::path(out_dir) / "calibration.json", cal);
    return kExitOk;
}

int cmd_run(const SequenceFlags& seq, const tdrs::PipelineConfig& cfg,
            const std::string& out_dir) {
    if (seq.vision + seq.instr < 1) {
        std::cerr << "error: sequence must contain at least one token\n";
        return kExitUsage;
    }
    const tdrs::TokenSequence tokens = tdrs::build_sequence(seq.vision, seq.instr, seq.dim, seq.seed);
    const tdrs::RotarySchedule schedule = tdrs::RotarySchedule::make(seq.dim);
    const tdrs::AttentionResult result = tdrs::run(tokens, tokens, tokens, schedule, cfg);

    // Agreement and mass statistics are reported against a baseline pass on
    // the same input.
    tdrs::PipelineConfig base_cfg = cfg;
    base_cfg.variant = tdrs::Variant::baseline;
    const tdrs::AttentionResult baseline = tdrs::run(tokens, tokens, tokens, schedule, base_cfg);

    bool has_vision = seq.vision > 0, has_instr = seq.instr > 0;
    const long threshold = (static_cast<long>(tokens.length()) - 1) / 2;
    tdrs::VariantStats stats =
        tdrs::detail::weights_stats(result, threshold, has_vision && has_instr);
    std::size_t same = 0;
    for (std::size_t i = 0; i < result.weights.values.rows(); ++i)
        if (tdrs::detail::row_argmax(result.weights.values, i) ==
            tdrs::detail::row_argmax(baseline.weights.values, i))
            ++same;
    stats.argmax_agreement_vs_baseline =
        static_cast<double>(same) / static_cast<double>(result.weights.values.rows());

    fs::create_directories(out_dir);
    for (const auto& [stage, logits] : result.logits_by_stage) {
        const std::string name = "attention_" + tdrs::stage_name(stage) + ".csv";
        tdrs::write_text_file((fs::path(out_dir) / name).string(),
                              tdrs::matrix_csv(logits.values));
    }
    tdrs::write_text_file((fs::path(out_dir) / "weights.csv").string(),
                          tdrs::matrix_csv(result.weights.values));

    json report;
    report["variant"] = tdrs::variant_name(cfg.variant);
    report["distant_threshold"] = threshold;
    report["stats"] = stats_json(stats);
    report["calibration"] = calibration_json(result.calibration_report);
    write_json(fs::path(out_dir) / "report.json", report);
    write_json(fs::path(out_dir) / "labels.json", labels_json(result));
    return kExitOk;
}

int cmd_compare(const SequenceFlags& seq, const tdrs::DrsHyperParams& hyper,
                const std::string& out_dir) {
    const tdrs::TokenSequence tokens = tdrs::build_sequence(seq.vision, seq.instr, seq.dim, seq.seed);
    const tdrs::RotarySchedule schedule = tdrs::RotarySchedule::make(seq.dim);
    const tdrs::ComparisonReport report = tdrs::compare_variants(tokens, schedule, hyper);

    json j;
    j["distant_threshold"] = report.distant_threshold;
    json variants;
    for (const auto& [name, stats] : report.variants) variants[name] = stats_json(stats);
    j["variants"] = variants;
    j["agreement"] = report.agreement;

    fs::create_directories(out_dir);
    write_json(fs::path(out_dir) / "compare.json", j);
    return kExitOk;
}

void apply_config_file(const std::string& path, SequenceFlags& seq, tdrs::PipelineConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw tdrs::IoError("cannot open config: " + path);
    json j;
    in >> j;
    if (j.contains("vision")) seq.vision = j["vision"].get<std::size_t>();
    if (j.contains("instr")) seq.instr = j["instr"].get<std::size_t>();
    if (j.contains("dim")) seq.dim = j["dim"].get<std::size_t>();
    if (j.contains("seed")) seq.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("variant")) cfg.variant = parse_variant(j["variant"].get<std::string>());
    if (j.contains("auto_calibrate")) cfg.auto_calibrate = j["auto_calibrate"].get<bool>();
    if (j.contains("w_dc_multiplier")) cfg.w_dc_multiplier = j["w_dc_multiplier"].get<double>();
    if (j.contains("w_re_multiplier")) cfg.w_re_multiplier = j["w_re_multiplier"].get<double>();
    if (j.contains("causal_mask")) cfg.causal_mask = j["causal_mask"].get<bool>();
    if (j.contains("hyper")) {
        const json& h = j["hyper"];
        if (h.contains("w_min_dc")) cfg.hyper.w_min_dc = h["w_min_dc"].get<double>();
        if (h.contains("lambda_dc")) cfg.hyper.lambda_dc = h["lambda_dc"].get<double>();
        if (h.contains("w_min_re")) cfg.hyper.w_min_re = h["w_min_re"].get<double>();
        if (h.contains("lambda_re")) cfg.hyper.lambda_re = h["lambda_re"].get<double>();
        if (h.contains("scale_clamp_eps"))
            cfg.hyper.scale_clamp_eps = h["scale_clamp_eps"].get<double>();
        if (h.contains("fixed_point_tol"))
            cfg.hyper.fixed_point_tol = h["fixed_point_tol"].get<double>();
        if (h.contains("fixed_point_max_iters"))
            cfg.hyper.fixed_point_max_iters = h["fixed_point_max_iters"].get<int>();
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RoPE attention with three-stage decay-resilience modulation"};
    app.require_subcommand(1);

    // decay
    auto* decay = app.add_subcommand("decay", "sweep the decay curve and calibrated kernels");
    std::size_t decay_dim = 64;
    long max_gap = 512;
    tdrs::DrsHyperParams decay_hyper;
    std::string probe = "ones";
    std::uint64_t decay_seed = 0;
    int trials = 16;
    std::string decay_out = ".";
    decay->add_option("--dim", decay_dim, "embedding dimension (even)");
    decay->add_option("--max-gap", max_gap, "largest position gap to sweep");
    add_hyper_flags(decay, decay_hyper);
    decay->add_option("--probe", probe, "probe vectors: ones | random");
    decay->add_option("--seed", decay_seed, "seed for the random probe");
    decay->add_option("--trials", trials, "trials for the random probe");
    decay->add_option("--out", decay_out, "output directory");

    // run
    auto* run_cmd = app.add_subcommand("run", "single attention pass with one variant");
    SequenceFlags run_seq;
    tdrs::PipelineConfig run_cfg;
    std::string variant_str = "full";
    std::string config_path;
    std::string run_out = ".";
    add_sequence_flags(run_cmd, run_seq);
    add_hyper_flags(run_cmd, run_cfg.hyper);
    run_cmd->add_option("--variant", variant_str, "baseline | sd | no-rerd | full");
    run_cmd->add_flag("--auto-calibrate", run_cfg.auto_calibrate,
                      "derive w_min floors from |A|_min");
    run_cmd->add_flag("--causal", run_cfg.causal_mask, "apply a causal mask before softmax");
    run_cmd->add_option("--config", config_path, "JSON config mirroring the pipeline fields");
    run_cmd->add_option("--out", run_out, "output directory");

    // compare
    auto* compare = app.add_subcommand("compare", "run all four variants and compare");
    SequenceFlags cmp_seq;
    tdrs::DrsHyperParams cmp_hyper;
    std::string cmp_out = ".";
    add_sequence_flags(compare, cmp_seq);
    add_hyper_flags(compare, cmp_hyper);
    compare->add_option("--out", cmp_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (decay->parsed()) {
            return cmd_decay(decay_dim, max_gap, decay_hyper, probe, decay_seed, trials, decay_out);
        }
        if (run_cmd->parsed()) {
            if (!config_path.empty()) {
                // A config file replaces the explicit sequence/pipeline flags;
                // mixing the two is rejected.
                for (const auto* opt :
                     {"--vision", "--instr", "--dim", "--seed", "--variant", "--w-min-dc",
                      "--w-min-re", "--lambda-dc", "--lambda-re"}) {
                    if (run_cmd->count(opt) > 0) {
                        std::cerr << "error: --config conflicts with explicit flag " << opt << "\n";
                        return kExitUsage;
                    }
                }
                apply_config_file(config_path, run_seq, run_cfg);
            } else {
                run_cfg.variant = parse_variant(variant_str);
            }
            return cmd_run(run_seq, run_cfg, run_out);
        }
        if (compare->parsed()) {
            return cmd_compare(cmp_seq, cmp_hyper, cmp_out);
        }
    } catch (const tdrs::CalibrationError& e) {
        std::cerr << "calibration error: " << e.what() << "\n";
        return kExitCalibration;
    } catch (const tdrs::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
