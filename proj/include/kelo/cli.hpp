/**
 * \file cli.hpp
 * \brief Command-line entry point (subcommand dispatch).
 *
 * Exit codes: 0 success, 1 IO/config/usage failure, 2 pipeline failure.
 */
#pragma once

namespace kelo {

int cli_main(int argc, const char* const* argv);

}  // namespace kelo
