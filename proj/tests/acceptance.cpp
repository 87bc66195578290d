// One line per criterion; exit status 0 iff every selected criterion passes.
#include <iostream>

#include <CLI11.hpp>

#include "aphi/acceptance.hpp"

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    aphi::AcceptanceOptions opt;
    app.add_option("--criterion", opt.only, "criterion ids to run (default: all)");
    app.add_option("--profile", opt.profile)->check(CLI::IsMember({"quick", "full"}));
    app.add_option("--seed", opt.seed);
    app.add_option("--workers", opt.workers);
    CLI11_PARSE(app, argc, argv);

    opt.on_result = [](const aphi::CheckResult& r) {
        std::cout << aphi::one_line(r) << "\n" << "      " << r.values.dump() << std::endl;
    };
    bool ok = true;
    for (const auto& r : aphi::run_acceptance(opt)) ok &= r.passed;
    std::cout << (ok ? "ALL PASSED" : "SOME CRITERIA FAILED") << std::endl;
    return ok ? 0 : 1;
}
