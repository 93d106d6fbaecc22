// vidmem command-line front end.
//
// Subcommands: gen-scenario, simulate, select, retrieve. Every command is
// deterministic given its inputs and seeds. Exit codes are a stable
// contract for sweep scripts:
//   0  success
//   2  usage or config errors
//   3  data/format errors (trace/state files, context overflow)
//   4  empty or degenerate inputs

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vidmem/config.hpp"
#include "vidmem/pipeline.hpp"
#include "vidmem/trace_io.hpp"

using namespace vidmem;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitEmpty = 4;

std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << text;
    if (!out) throw IoError("write failed: " + path);
}

void print_notices(const std::vector<std::string>& notices) {
    for (const auto& n : notices) std::cerr << "notice: " << n << "\n";
}

SelectorKind parse_selector(const std::string& name) {
    if (name == "attention") return SelectorKind::Attention;
    if (name == "uniform") return SelectorKind::Uniform;
    if (name == "meanpool") return SelectorKind::MeanPool;
    if (name == "kmeans") return SelectorKind::KMeans;
    throw ConfigError("invalid selector '" + name +
                      "' (valid: attention, uniform, meanpool, kmeans, global_uniform)");
}

AggregationMode parse_aggregation(const std::string& name) {
    if (name == "avg") return AggregationMode::MeanOverHeads;
    if (name == "max") return AggregationMode::MaxOverHeads;
    throw ConfigError("invalid aggregation '" + name + "' (valid: avg, max)");
}

SimilarityMode parse_similarity(const std::string& name) {
    if (name == "pooled") return SimilarityMode::Pooled;
    if (name == "pairwise") return SimilarityMode::Pairwise;
    throw ConfigError("invalid similarity '" + name + "' (valid: pooled, pairwise)");
}

PipelineConfig pipeline_from_sections(const std::vector<ConfigSection>& sections,
                                      std::vector<std::string>* notices) {
    PipelineConfig c;
    const ConfigSection* s = config::find(sections, "pipeline");
    if (!s) return c;
    config::SectionView v(*s, notices);
    c.clip_size = static_cast<std::size_t>(v.get_u64("clip_size", c.clip_size));
    c.max_mem = static_cast<std::size_t>(v.get_u64("max_mem", c.max_mem));
    c.tokens_per_frame =
        static_cast<std::size_t>(v.get_u64("tokens_per_frame", c.tokens_per_frame));
    c.n_select = static_cast<std::size_t>(v.get_u64("n_select", c.n_select));
    c.window = static_cast<std::size_t>(v.get_u64("window", c.window));
    c.memory_half = static_cast<std::size_t>(v.get_u64("memory_half", 0));
    c.clip_half = static_cast<std::size_t>(v.get_u64("clip_half", 0));
    c.layer_subset = v.get_index_list("layer_subset", {});
    c.aggregation = parse_aggregation(v.get_string("aggregation", "avg"));
    c.selector = parse_selector(v.get_string("selector", "attention"));
    c.mmr_lambda = v.get_f64("mmr_lambda", 0.5);
    c.retrieval_budget =
        static_cast<std::size_t>(v.get_u64("retrieval_budget", c.retrieval_budget));
    c.retrieval_k = static_cast<std::size_t>(v.get_u64("retrieval_k", 0));
    c.similarity = parse_similarity(v.get_string("similarity", "pooled"));
    c.seed = v.get_u64("seed", 0);
    v.finish();
    return c;
}

MockModelConfig model_from_sections(const std::vector<ConfigSection>& sections,
                                    std::vector<std::string>* notices) {
    MockModelConfig m;
    const ConfigSection* s = config::find(sections, "model");
    if (!s) return m;
    config::SectionView v(*s, notices);
    m.dim = static_cast<std::size_t>(v.get_u64("dim", m.dim));
    m.n_layers = static_cast<std::size_t>(v.get_u64("n_layers", m.n_layers));
    m.n_heads = static_cast<std::size_t>(v.get_u64("n_heads", m.n_heads));
    m.head_dim = static_cast<std::size_t>(v.get_u64("head_dim", m.head_dim));
    m.caption_len = static_cast<std::size_t>(v.get_u64("caption_len", m.caption_len));
    m.seed = v.get_u64("seed", 0);
    v.finish();
    return m;
}

// --- gen-scenario ---

int cmd_gen_scenario(const std::string& config_path, const std::string& out_path) {
    std::vector<std::string> notices;
    const auto sections = config::parse(read_text_file(config_path));
    const ConfigSection* sc = config::find(sections, "scenario");
    if (!sc) throw ConfigError("missing [scenario] section");

    SyntheticScenario spec;
    config::SectionView v(*sc, &notices);
    spec.n_clips = static_cast<std::size_t>(v.require_u64("n_clips"));
    spec.t_frames = static_cast<std::size_t>(v.get_u64("t_frames", 16));
    spec.tokens_per_frame = static_cast<std::size_t>(v.get_u64("tokens_per_frame", 196));
    spec.dim = static_cast<std::size_t>(v.get_u64("dim", 16));
    spec.noise_scale = v.get_f64("noise_scale", 0.1);
    spec.seed = v.get_u64("seed", 0);
    v.finish();

    // Events come either from an [events] generator block or explicit
    // [event] sections.
    if (const ConfigSection* ev = config::find(sections, "events")) {
        config::SectionView g(*ev, &notices);
        const auto count = static_cast<std::size_t>(g.get_u64("count", 1));
        const auto per = static_cast<std::size_t>(g.get_u64("tokens_per_event", 4));
        g.finish();
        spec = backend::make_random_events(spec, count, per);
    }
    for (const ConfigSection& s : sections) {
        if (s.name != "event") continue;
        config::SectionView e(s, &notices);
        ScenarioEvent ev;
        ev.clip_id = e.require_u64("clip");
        for (std::size_t t : e.get_index_list("tokens", {})) ev.token_indices.push_back(t);
        ev.concept_vec = e.get_f64_list("concept");
        e.finish();
        spec.events.push_back(std::move(ev));
    }
    spec.validate();
    print_notices(notices);

    write_text_file(out_path, backend::scenario_to_text(spec));

    std::string truth;
    truth += "# ground truth: one line per planted event\n";
    truth += "# event\tclip\ttoken_indices\n";
    for (std::size_t i = 0; i < spec.events.size(); ++i) {
        truth += std::to_string(i) + "\t" + std::to_string(spec.events[i].clip_id) + "\t";
        for (std::size_t j = 0; j < spec.events[i].token_indices.size(); ++j) {
            if (j) truth += ",";
            truth += std::to_string(spec.events[i].token_indices[j]);
        }
        truth += "\n";
    }
    write_text_file(out_path + ".truth", truth);

    std::cout << "scenario: " << out_path << " (" << spec.n_clips << " clips, "
              << spec.events.size() << " events)\n";
    std::cout << "ground truth: " << out_path << ".truth\n";
    return 0;
}

// --- simulate ---

int cmd_simulate(const std::string& config_path, const std::string& scenario_path,
                 const std::string& selector_flag, const std::string& report_path,
                 const std::string& state_path, const std::string& trace_path) {
    std::vector<std::string> notices;
    std::vector<ConfigSection> sections;
    if (!config_path.empty()) sections = config::parse(read_text_file(config_path));
    PipelineConfig config = pipeline_from_sections(sections, &notices);
    MockModelConfig model = model_from_sections(sections, &notices);

    const auto scenario = backend::scenario_from_text(read_text_file(scenario_path), &notices);

    bool global_uniform = false;
    if (!selector_flag.empty()) {  // flag > file > default
        if (selector_flag == "global_uniform") global_uniform = true;
        else config.selector = parse_selector(selector_flag);
    }

    // The scenario fixes the stream shape; the pipeline follows it.
    if (config.tokens_per_frame != scenario.tokens_per_frame) {
        notices.push_back("[pipeline] tokens_per_frame set to scenario value " +
                          std::to_string(scenario.tokens_per_frame));
        config.tokens_per_frame = scenario.tokens_per_frame;
    }
    if (config.clip_size != scenario.t_frames) {
        notices.push_back("[pipeline] clip_size set to scenario t_frames " +
                          std::to_string(scenario.t_frames));
        config.clip_size = scenario.t_frames;
    }
    if (model.dim != scenario.dim) {
        notices.push_back("[model] dim set to scenario value " + std::to_string(scenario.dim));
        model.dim = scenario.dim;
    }
    if (model.dim % model.n_heads != 0) {
        throw ConfigError("model dim " + std::to_string(model.dim) +
                          " not divisible by n_heads " + std::to_string(model.n_heads));
    }
    model.head_dim = model.dim / model.n_heads;
    print_notices(notices);

    pipeline::SimulationResult result;
    if (global_uniform) {
        result = pipeline::run_global_uniform(scenario, config, model);
    } else {
        std::vector<BackendOutput> outputs;
        result = pipeline::run_simulation(scenario, config, model, {},
                                          trace_path.empty() ? nullptr : &outputs);
        if (!state_path.empty()) {
            traceio::write_state(state_path, {result.caption_store, result.visual_index});
            std::cout << "state: " << state_path << "\n";
        }
        if (!trace_path.empty()) {
            traceio::write_trace(trace_path, outputs);
            std::cout << "trace: " << trace_path << "\n";
        }
    }
    write_text_file(report_path, result.report);
    std::cout << "report: " << report_path << "\n";
    std::cout << "clips_processed=" << result.metrics.clips_processed << "\n";
    if (result.metrics.selection_recall) {
        std::cout << "selection_recall=" << *result.metrics.selection_recall << "\n";
    }
    if (result.metrics.retrieval_recall_at_k) {
        std::cout << "retrieval_recall_at_k=" << *result.metrics.retrieval_recall_at_k << "\n";
    }
    std::fprintf(stderr, "timing: %.3f ms/clip (not part of the report)\n",
                 result.metrics.wall_clock_per_clip_ms);
    return 0;
}

// --- select ---

int cmd_select(const std::string& trace_path, const std::string& layers_flag,
               const std::string& agg_flag, std::size_t n_select, const std::string& out_path) {
    const auto outputs = traceio::read_trace(trace_path);
    if (outputs.empty()) throw EmptyStore("trace file has no records");
    const AggregationMode mode = parse_aggregation(agg_flag);

    std::string listing;
    for (const BackendOutput& out : outputs) {
        const AttentionTrace& t = out.trace;
        std::vector<std::size_t> subset;
        if (layers_flag.empty() || layers_flag == "auto") {
            subset = attn::uniform_layer_subset(t.n_layers,
                                                std::min<std::size_t>(4, t.n_layers));
        } else {
            for (const std::string& tok : config::SectionView::split(layers_flag, ',')) {
                try {
                    subset.push_back(std::stoull(config::trim(tok)));
                } catch (const std::exception&) {
                    throw ConfigError("bad --layers entry '" + tok + "'");
                }
            }
        }
        if (n_select > t.layout.n_visual) {
            throw ConfigError("--n " + std::to_string(n_select) + " exceeds clip token count " +
                              std::to_string(t.layout.n_visual));
        }
        const ScoreVector scores = attn::compute_token_scores(t, subset, mode);
        std::vector<std::size_t> order = num::argsort_desc(scores.scores);
        std::vector<std::size_t> picked(order.begin(), order.begin() + n_select);
        std::sort(picked.begin(), picked.end());

        listing += "clip=" + std::to_string(t.clip_id) + "\n";
        listing += "n_visual=" + std::to_string(t.layout.n_visual) + "\n";
        listing += "indices=";
        for (std::size_t i = 0; i < picked.size(); ++i) {
            if (i) listing += ",";
            listing += std::to_string(picked[i]);
        }
        listing += "\nscores=";
        char buf[64];
        for (std::size_t i = 0; i < picked.size(); ++i) {
            if (i) listing += ",";
            std::snprintf(buf, sizeof(buf), "%.9g", scores.scores[picked[i]]);
            listing += buf;
        }
        listing += "\n\n";
    }
    write_text_file(out_path, listing);
    std::cout << "selection listing: " << out_path << " (" << outputs.size() << " clips)\n";
    return 0;
}

// --- retrieve ---

QueryEmbedding load_query_file(const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::vector<Vec> tokens;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string trimmed = config::trim(line);
        if (trimmed.empty() || trimmed[0] == '#') continue;
        Vec tok;
        std::istringstream ls(trimmed);
        double x;
        while (ls >> x) tok.push_back(x);
        if (!ls.eof()) throw ConfigError("bad number in query file", line_no);
        if (tok.empty()) continue;
        if (!tokens.empty() && tok.size() != tokens[0].size()) {
            throw ConfigError("ragged query embedding rows", line_no);
        }
        tokens.push_back(std::move(tok));
    }
    if (tokens.empty()) throw EmptyStore("query file has no embedding rows");
    return QueryEmbedding::make(std::move(tokens));
}

int cmd_retrieve(const std::string& state_path, const std::string& query_path, double lambda,
                 std::size_t budget, std::size_t fixed_k, const std::string& similarity,
                 const std::string& mode, std::uint64_t seed) {
    const auto state = traceio::read_state(state_path);
    const auto query = load_query_file(query_path);
    const SimilarityMode sim = parse_similarity(similarity);

    RetrievalResult res;
    if (mode == "mmr") {
        if (fixed_k > 0) {
            res = retrieval::mmr_retrieve(query, state.captions,
                                          std::min(fixed_k, state.captions.size()), lambda, sim);
        } else {
            res = retrieval::budgeted_retrieve(query, state.captions, lambda, budget,
                                               std::nullopt, sim);
        }
    } else if (mode == "random") {
        const std::size_t k = fixed_k > 0 ? std::min(fixed_k, state.captions.size())
                                          : state.captions.size();
        res = retrieval::baseline_retrieve_random(state.captions, k, Rng(seed));
    } else if (mode == "visual") {
        if (state.visual_index.empty()) {
            throw EmptyStore("state file carries no visual index");
        }
        const std::size_t k = fixed_k > 0 ? std::min(fixed_k, state.visual_index.size())
                                          : state.visual_index.size();
        res = retrieval::baseline_retrieve_visual(query.pooled, state.visual_index, k);
    } else {
        throw ConfigError("invalid mode '" + mode + "' (valid: mmr, random, visual)");
    }

    for (std::size_t i = 0; i < res.ranked.size(); ++i) {
        std::printf("rank=%zu clip=%llu score=%.9g\n", i + 1,
                    static_cast<unsigned long long>(res.ranked[i].first), res.ranked[i].second);
    }
    std::printf("tokens_used=%zu\n", res.tokens_used);
    if (res.budget > 0) std::printf("budget=%zu\n", res.budget);
    return 0;
}

int dispatch(int argc, char** argv) {
    CLI::App app{"vidmem: streaming video-memory engine harness"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-scenario", "generate a synthetic scenario");
    std::string gen_config, gen_out;
    gen->add_option("--config", gen_config, "scenario config file")->required();
    gen->add_option("--out", gen_out, "output scenario path")->required();

    auto* sim = app.add_subcommand("simulate", "stream a scenario through the pipeline");
    std::string sim_config, sim_scenario, sim_selector, sim_report, sim_state, sim_trace;
    sim->add_option("--config", sim_config, "pipeline/model config file");
    sim->add_option("--scenario", sim_scenario, "scenario file")->required();
    sim->add_option("--selector", sim_selector,
                    "attention|uniform|meanpool|kmeans|global_uniform (overrides config)");
    sim->add_option("--report", sim_report, "report output path")->required();
    sim->add_option("--state", sim_state, "persist the caption store here");
    sim->add_option("--trace-out", sim_trace, "persist backend traces here");

    auto* sel = app.add_subcommand("select", "offline selection over a trace file");
    std::string sel_trace, sel_layers = "auto", sel_agg = "avg", sel_out;
    std::size_t sel_n = 196;
    sel->add_option("--trace", sel_trace, "trace file")->required();
    sel->add_option("--layers", sel_layers, "comma list of layer ids, or 'auto'");
    sel->add_option("--agg", sel_agg, "avg|max");
    sel->add_option("--n", sel_n, "tokens to select per clip");
    sel->add_option("--out", sel_out, "selection listing output path")->required();

    auto* ret = app.add_subcommand("retrieve", "query a persisted caption store");
    std::string ret_state, ret_query, ret_similarity = "pooled", ret_mode = "mmr";
    double ret_lambda = 0.5;
    std::size_t ret_budget = 10000, ret_k = 0;
    std::uint64_t ret_seed = 0;
    ret->add_option("--state", ret_state, "state file")->required();
    ret->add_option("--query-file", ret_query, "query embedding file")->required();
    ret->add_option("--lambda", ret_lambda, "MMR relevance/diversity trade-off");
    ret->add_option("--budget", ret_budget, "token budget for retrieval");
    ret->add_option("--k", ret_k, "fixed top-k (0 = fill the budget)");
    ret->add_option("--similarity", ret_similarity, "pooled|pairwise");
    ret->add_option("--mode", ret_mode, "mmr|random|visual");
    ret->add_option("--seed", ret_seed, "seed for --mode random");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    }

    if (gen->parsed()) return cmd_gen_scenario(gen_config, gen_out);
    if (sim->parsed()) {
        return cmd_simulate(sim_config, sim_scenario, sim_selector, sim_report, sim_state,
                            sim_trace);
    }
    if (sel->parsed()) return cmd_select(sel_trace, sel_layers, sel_agg, sel_n, sel_out);
    if (ret->parsed()) {
        return cmd_retrieve(ret_state, ret_query, ret_lambda, ret_budget, ret_k, ret_similarity,
                            ret_mode, ret_seed);
    }
    return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const InvalidArgument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const UnsupportedVersion& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitData;
    } catch (const TraceFormatError& e) {
        std::cerr << "format error (trace io): " << e.what() << "\n";
        return kExitData;
    } catch (const ContextOverflow& e) {
        std::cerr << "data error (memory): " << e.what() << "\n";
        return kExitData;
    } catch (const MissingTrace& e) {
        std::cerr << "data error (attention scoring): " << e.what() << "\n";
        return kExitData;
    } catch (const InvalidDimension& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitData;
    } catch (const EmptyStore& e) {
        std::cerr << "empty input: " << e.what() << "\n";
        return kExitEmpty;
    } catch (const DegenerateVector& e) {
        std::cerr << "degenerate input: " << e.what() << "\n";
        return kExitEmpty;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}
