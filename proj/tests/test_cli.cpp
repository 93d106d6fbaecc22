#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "vidmem/backend.hpp"
#include "vidmem/trace_io.hpp"

// Binary path injected by CMake.
#ifndef VIDMEM_CLI_PATH
#error "VIDMEM_CLI_PATH must be defined"
#endif

using namespace vidmem;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

CmdResult run_cli(const std::string& args) {
    const std::string out_path = "cli_out.tmp";
    const std::string cmd =
        std::string(VIDMEM_CLI_PATH) + " " + args + " > " + out_path + " 2>&1";
    const int status = std::system(cmd.c_str());
    CmdResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out_path);
    std::stringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    std::remove(out_path.c_str());
    return r;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    out << text;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* kScenarioCfg =
    "[scenario]\n"
    "n_clips=4\n"
    "t_frames=4\n"
    "tokens_per_frame=16\n"
    "dim=16\n"
    "noise_scale=0.1\n"
    "\n"
    "[events]\n"
    "count=1\n"
    "tokens_per_event=4\n";

const char* kPipelineCfg =
    "[pipeline]\n"
    "clip_size=4\n"
    "max_mem=2\n"
    "tokens_per_frame=16\n"
    "n_select=8\n"
    "window=80\n"
    "seed=3\n"
    "\n"
    "[model]\n"
    "dim=16\n"
    "n_layers=4\n"
    "n_heads=2\n"
    "head_dim=8\n"
    "caption_len=3\n"
    "seed=5\n";

}  // namespace

TEST_CASE("cli: gen-scenario is deterministic and notices defaulted keys") {
    write_file("scen.cfg", kScenarioCfg);
    auto r1 = run_cli("gen-scenario --config scen.cfg --out scen_a.txt");
    CHECK(r1.exit_code == 0);
    CHECK(r1.output.find("seed defaulted to 0") != std::string::npos);

    auto r2 = run_cli("gen-scenario --config scen.cfg --out scen_b.txt");
    CHECK(r2.exit_code == 0);
    CHECK(slurp("scen_a.txt") == slurp("scen_b.txt"));
    CHECK(slurp("scen_a.txt.truth") == slurp("scen_b.txt.truth"));
    CHECK(slurp("scen_a.txt").find("[event]") != std::string::npos);
}

TEST_CASE("cli: gen-scenario rejects malformed config with a line number") {
    write_file("bad.cfg", "[scenario]\nn_clips=4\nthis line is wrong\n");
    auto r = run_cli("gen-scenario --config bad.cfg --out never.txt");
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("line 3") != std::string::npos);

    write_file("unknown.cfg", "[scenario]\nn_clips=4\nbogus_key=1\n");
    auto r2 = run_cli("gen-scenario --config unknown.cfg --out never.txt");
    CHECK(r2.exit_code == 2);
    CHECK(r2.output.find("bogus_key") != std::string::npos);
}

TEST_CASE("cli: simulate produces report, state, and trace; selectors comparable") {
    write_file("scen.cfg", kScenarioCfg);
    write_file("pipe.cfg", kPipelineCfg);
    REQUIRE(run_cli("gen-scenario --config scen.cfg --out scen.txt").exit_code == 0);

    auto r = run_cli(
        "simulate --config pipe.cfg --scenario scen.txt --report rep_att.txt "
        "--state state.bin --trace-out trace.bin");
    CHECK(r.exit_code == 0);
    const std::string rep = slurp("rep_att.txt");
    CHECK(rep.find("selector=attention") != std::string::npos);
    CHECK(rep.find("clips_processed=4") != std::string::npos);

    auto r2 = run_cli(
        "simulate --config pipe.cfg --scenario scen.txt --selector uniform "
        "--report rep_uni.txt");
    CHECK(r2.exit_code == 0);
    CHECK(slurp("rep_uni.txt").find("selector=uniform") != std::string::npos);
    CHECK(slurp("rep_uni.txt") != rep);

    // Byte-identical on rerun.
    auto r3 = run_cli("simulate --config pipe.cfg --scenario scen.txt --report rep_att2.txt");
    CHECK(r3.exit_code == 0);
    CHECK(slurp("rep_att2.txt") == rep);

    auto bad = run_cli("simulate --scenario scen.txt --selector bogus --report never.txt");
    CHECK(bad.exit_code == 2);
    CHECK(bad.output.find("attention, uniform, meanpool, kmeans, global_uniform") !=
          std::string::npos);
}

TEST_CASE("cli: simulate with paper defaults echoes the paper budget") {
    write_file("paper_scen.cfg",
               "[scenario]\n"
               "n_clips=2\n"
               "t_frames=16\n"
               "tokens_per_frame=196\n"
               "dim=8\n"
               "seed=1\n"
               "[events]\n"
               "count=1\n"
               "tokens_per_event=4\n");
    REQUIRE(run_cli("gen-scenario --config paper_scen.cfg --out paper_scen.txt").exit_code == 0);
    write_file("paper_pipe.cfg", "[model]\ndim=8\nn_layers=2\nn_heads=2\nhead_dim=4\n"
                                 "caption_len=2\nseed=2\n");
    auto r = run_cli(
        "simulate --config paper_pipe.cfg --scenario paper_scen.txt --report paper_rep.txt");
    CHECK(r.exit_code == 0);
    const std::string rep = slurp("paper_rep.txt");
    CHECK(rep.find("window=6272") != std::string::npos);
    CHECK(rep.find("memory_half=3136") != std::string::npos);
    CHECK(rep.find("clip_half=3136") != std::string::npos);
    CHECK(rep.find("n_select=196") != std::string::npos);
    CHECK(rep.find("max_mem=16") != std::string::npos);

    auto g = run_cli(
        "simulate --config paper_pipe.cfg --scenario paper_scen.txt "
        "--selector global_uniform --report paper_global.txt");
    CHECK(g.exit_code == 0);
    CHECK(slurp("paper_global.txt").find("mode=global_uniform") != std::string::npos);
}

TEST_CASE("cli: select honors layer lists and rejects oversized n") {
    // Trace from a 28-layer mock so the headline layer list is valid.
    SyntheticScenario s;
    s.n_clips = 1;
    s.t_frames = 2;
    s.tokens_per_frame = 8;
    s.dim = 8;
    s.noise_scale = 0.1;
    s.seed = 12;
    auto clip = backend::generate_clip(s, 0);
    ShortTermMemory mem(0);
    auto budget = ContextBudget::make(16, 0, 16);
    MockModelConfig deep;
    deep.dim = 8;
    deep.n_layers = 28;
    deep.n_heads = 2;
    deep.head_dim = 4;
    deep.caption_len = 2;
    deep.seed = 9;
    traceio::write_trace("deep.bin",
                         {backend::mock_process_clip(deep, mem::assemble_context(mem, clip, budget))});

    auto r = run_cli("select --trace deep.bin --layers 5,9,14,20 --agg avg --n 4 --out sel.txt");
    CHECK(r.exit_code == 0);
    CHECK(slurp("sel.txt").find("indices=") != std::string::npos);

    auto big = run_cli("select --trace deep.bin --layers 5,9,14,20 --agg avg --n 99 --out x.txt");
    CHECK(big.exit_code == 2);

    // Single-head trace: head-max equals head-mean, selections identical.
    MockModelConfig one = deep;
    one.n_heads = 1;
    one.head_dim = 8;
    traceio::write_trace("one.bin",
                         {backend::mock_process_clip(one, mem::assemble_context(mem, clip, budget))});
    REQUIRE(run_cli("select --trace one.bin --agg avg --n 4 --out avg.txt").exit_code == 0);
    REQUIRE(run_cli("select --trace one.bin --agg max --n 4 --out max.txt").exit_code == 0);
    CHECK(slurp("avg.txt") == slurp("max.txt"));

    auto missing = run_cli("select --trace not_there.bin --out y.txt");
    CHECK(missing.exit_code == 3);
}

TEST_CASE("cli: select rejects corrupted and future-versioned traces") {
    const std::string good = slurp("deep.bin");
    write_file("trunc.bin", good.substr(0, good.size() / 2));
    auto r = run_cli("select --trace trunc.bin --n 2 --out never.txt");
    CHECK(r.exit_code == 3);
    CHECK(r.output.find("byte offset") != std::string::npos);

    std::string vbad = good;
    vbad[8] = 99;
    write_file("v99.bin", vbad);
    auto r2 = run_cli("select --trace v99.bin --n 2 --out never.txt");
    CHECK(r2.exit_code == 3);
    CHECK(r2.output.find("version") != std::string::npos);
}

TEST_CASE("cli: retrieve ranks, reduces at lambda=1, and flags empty stores") {
    // State produced by the simulate test above.
    REQUIRE(run_cli("simulate --config pipe.cfg --scenario scen.txt --report rr.txt "
                    "--state store.bin").exit_code == 0);
    write_file("query.txt", "# single-token query\n1 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0\n");

    auto r = run_cli("retrieve --state store.bin --query-file query.txt --lambda 1.0");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("rank=1 clip=") != std::string::npos);
    CHECK(r.output.find("tokens_used=") != std::string::npos);

    // lambda=1 budget-fill equals fixed-k ordering for the same k.
    auto k4 = run_cli("retrieve --state store.bin --query-file query.txt --lambda 1.0 --k 4");
    CHECK(k4.exit_code == 0);
    std::istringstream full(r.output), topk(k4.output);
    std::string a, b;
    for (int i = 0; i < 4; ++i) {
        std::getline(full, a);
        std::getline(topk, b);
        CHECK(a == b);
    }

    auto rnd = run_cli("retrieve --state store.bin --query-file query.txt --mode random --k 2 "
                       "--seed 9");
    auto rnd2 = run_cli("retrieve --state store.bin --query-file query.txt --mode random --k 2 "
                        "--seed 9");
    CHECK(rnd.exit_code == 0);
    CHECK(rnd.output == rnd2.output);

    traceio::write_state("empty.bin", {});
    auto e = run_cli("retrieve --state empty.bin --query-file query.txt");
    CHECK(e.exit_code == 4);

    auto miss = run_cli("retrieve --state gone.bin --query-file query.txt");
    CHECK(miss.exit_code == 3);
}
