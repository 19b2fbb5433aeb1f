// relay-client: streams frames to a relay server and prints the transcript.

#include <csignal>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "relay/client.hpp"

namespace {
std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }
}  // namespace

int main(int argc, char** argv) {
    relay::client::ClientOptions opt;
    std::string processor;
    std::string tts_cmd;

    CLI::App app{"Frame relay client"};
    app.add_option("--server", opt.server, "HOST:PORT")->capture_default_str();
    app.add_option("--source", opt.source, "dir:<path> | synthetic:bars | synthetic:text=<STRING> | synthetic:moving_box")
        ->required();
    app.add_option("--fps", opt.fps, "Frames per second")->capture_default_str();
    auto* proc_opt = app.add_option("--processor", processor, "Processor id to select");
    app.add_option("--options", opt.options, "Processor options k=v;k=v");
    app.add_flag("--loop", opt.loop, "Repeat a directory source");
    auto* tts_opt = app.add_option("--tts-cmd", tts_cmd, "Shell command receiving each description on stdin");
    app.add_option("--name", opt.name, "Session name")->capture_default_str();
    app.add_option("--stats-interval-s", opt.stats_interval_s, "Print server counters every N seconds");
    app.add_option("--count", opt.max_frames, "Stop after N frames (0 = until the source ends)");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : relay::client::kExitBadArgs;
    }
    if (proc_opt->count()) opt.processor = processor;
    if (tts_opt->count()) opt.tts_cmd = tts_cmd;
    if (opt.stats_interval_s < 0) {
        std::cerr << "error: --stats-interval-s must be non-negative\n";
        return relay::client::kExitBadArgs;
    }

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    auto report = relay::client::run_session(opt, std::cout, std::cerr, &g_stop);
    return report.exit_code;
}
