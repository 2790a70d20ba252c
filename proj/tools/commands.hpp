#pragma once

#include "run_config.hpp"

namespace ctpipe::cli {

int cmd_synth(const RunConfig& cfg);
int cmd_train(const RunConfig& cfg);
int cmd_eval(const RunConfig& cfg);
int cmd_sweep(const RunConfig& cfg);
int cmd_report(const RunConfig& cfg);

}  // namespace ctpipe::cli
