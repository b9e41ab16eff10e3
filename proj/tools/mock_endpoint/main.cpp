#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "mock_endpoint.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Scripted OpenAI-compatible chat endpoint for offline tests"};
    int port = 8080;
    std::string script = "valid";
    app.add_option("--port", port, "TCP port on 127.0.0.1")->check(CLI::Range(1, 65535));
    app.add_option("--script", script,
                   "Comma-separated replies cycled per request: valid, prose, wrong-type, duplicate-class, "
                   "copy-exemplar, empty-text, malformed, server-error");
    CLI11_PARSE(app, argc, argv);
    try {
        medsynth::mock::MockEndpoint endpoint(medsynth::mock::parse_script(script));
        std::cout << "serving http://127.0.0.1:" << port << "/v1/chat/completions" << std::endl;
        endpoint.serve(port);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
