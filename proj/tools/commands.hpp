#pragma once

#include "dcan/config.hpp"

namespace dcan::cli {

// Subcommand bodies; each returns a process exit code and assumes the
// effective config has already been validated.
int cmd_synth(const RunConfig& cfg);
int cmd_preprocess(const RunConfig& cfg);
int cmd_train(const RunConfig& cfg);
int cmd_evaluate(const RunConfig& cfg);
int cmd_predict(const RunConfig& cfg);

}  // namespace dcan::cli
