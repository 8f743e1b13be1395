#pragma once

namespace privdistill::cli {

// Returns the process exit code: 0 on success, 1 when a check fails,
// 2 for usage or configuration errors, 3 for data or I/O errors.
int run(int argc, char** argv);

}  // namespace privdistill::cli
