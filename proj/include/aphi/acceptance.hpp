#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

namespace aphi {

struct CheckResult {
    int id = 0;
    std::string name;
    bool passed = false;
    nlohmann::json values;  // measured quantities and thresholds
};

struct AcceptanceOptions {
    std::string profile = "full";  // quick | full
    std::uint64_t seed = 1;
    int workers = 1;
    std::vector<int> only;         // criterion ids to run; empty means all
    bool determinism = true;       // criterion 9 reruns the quick profile twice
    std::function<void(const CheckResult&)> on_result;
};

std::vector<CheckResult> run_acceptance(const AcceptanceOptions& opt);

// Report body: profile, seed and checks. Contains no timing, so equal inputs give equal bytes.
nlohmann::json acceptance_report(const AcceptanceOptions& opt, const std::vector<CheckResult>& r);
std::string one_line(const CheckResult& r);

}  // namespace aphi
