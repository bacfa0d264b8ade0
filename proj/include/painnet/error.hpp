#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace painnet {

// Error with a stable category tag. The CLI prints failures as a single
// line "error: <category>: <message>" and exits nonzero.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& message)
        : std::runtime_error(message), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

    static Error config(const std::string& m) { return {"config", m}; }
    static Error io(const std::string& m) { return {"io", m}; }
    static Error data(const std::string& m) { return {"data", m}; }
    static Error numeric(const std::string& m) { return {"numeric", m}; }
    static Error checkpoint(const std::string& m) { return {"checkpoint", m}; }

private:
    std::string category_;
};

} // namespace painnet
