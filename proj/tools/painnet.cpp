#include <iostream>
#include <string>
#include <vector>

#include "painnet/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    if (args.empty() || args[0] == "--help" || args[0] == "-h") {
        std::cout << "painnet <command> [flags]\n"
                     "\n"
                     "commands:\n"
                     "  synth      generate a synthetic AU dataset (--out <dir>)\n"
                     "  train      train one cross-validation trial (--data, --out, --trial)\n"
                     "  crossval   run the full k-fold protocol (--data, --out)\n"
                     "  predict    score one feature CSV (--data, --ckpt, --video)\n"
                     "  gradcheck  finite-difference check of every layer\n"
                     "\n"
                     "global flags: --config <file>, --seed <n>, --out <dir>; any config key\n"
                     "can be overridden as --<section>.<key> <value> (see README for aliases).\n";
        return args.empty() ? 1 : 0;
    }
    return painnet::cli::run(args, std::cout, std::cerr);
}
