#ifndef DEPMT_ERROR_HPP
#define DEPMT_ERROR_HPP

#include <stdexcept>
#include <string>

namespace depmt {

// Library-wide error with a machine-parseable category. The CLI prints
// failures as a single "error:<category>: <message>" line on stderr.
// Categories in use: usage, missing_input, conflict, bad_config, data_error,
// model_error, io_error.
struct Error : std::runtime_error {
  std::string category;
  Error(std::string cat, const std::string& msg) : std::runtime_error(msg), category(std::move(cat)) {}
};

}  // namespace depmt

#endif
