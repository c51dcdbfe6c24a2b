// Runs every primary acceptance criterion and prints one line per criterion.
//   r2r_acceptance [--artifacts DIR] [--only SUBSTRING]

#include "acceptance.hpp"

#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>

namespace r2r::acceptance {

namespace {
std::filesystem::path g_artifacts = "acceptance_artifacts";
}

const std::filesystem::path& artifact_dir() { return g_artifacts; }

}  // namespace r2r::acceptance

int main(int argc, char** argv) {
    using namespace r2r::acceptance;
    std::string only;
    for (int i = 1; i + 1 < argc; i += 2) {
        const std::string flag = argv[i];
        if (flag == "--artifacts") g_artifacts = argv[i + 1];
        else if (flag == "--only") only = argv[i + 1];
        else {
            std::cerr << "usage: r2r_acceptance [--artifacts DIR] [--only SUBSTRING]\n";
            return 2;
        }
    }
    std::filesystem::create_directories(g_artifacts);

    auto criteria = core_criteria();
    for (auto& c : toy_criteria()) criteria.push_back(std::move(c));

    std::ofstream report(g_artifacts / "acceptance.txt");
    int failed = 0, ran = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && c.name.find(only) == std::string::npos) continue;
        ++ran;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (!o.pass) ++failed;
        char line[1024];
        std::snprintf(line, sizeof line, "%s  %-28s %s  [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.name.c_str(),
                      o.detail.c_str(), s);
        std::fputs(line, stdout);
        std::fflush(stdout);
        report << line << std::flush;
    }
    std::printf("%d/%d criteria passed\n", ran - failed, ran);
    report << ran - failed << '/' << ran << " criteria passed\n";
    return failed == 0 ? 0 : 1;
}
