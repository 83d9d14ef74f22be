#include "lager/errors.hpp"

#include <fmt/format.h>

namespace lager {

ParseError::ParseError(const std::string& what, std::size_t line)
    : ValidationError(fmt::format("line {}: {}", line, what)), line_(line) {}

void rethrow_with_prefix(const std::string& prefix) {
    try {
        throw;
    } catch (const ParseError& e) {
        throw ParseError(fmt::format("{}: {}", prefix, e.what()), e.line());
    } catch (const ValidationError& e) {
        throw ValidationError(fmt::format("{}: {}", prefix, e.what()));
    } catch (const ArgumentError& e) {
        throw ArgumentError(fmt::format("{}: {}", prefix, e.what()));
    } catch (const IoError& e) {
        throw IoError(fmt::format("{}: {}", prefix, e.what()));
    } catch (const NumericError& e) {
        throw NumericError(fmt::format("{}: {}", prefix, e.what()));
    } catch (const Error& e) {
        throw Error(fmt::format("{}: {}", prefix, e.what()));
    }
}

int exit_code(const Error& e) {
    if (dynamic_cast<const IoError*>(&e)) return 2;
    if (dynamic_cast<const NumericError*>(&e)) return 3;
    return 1;
}

}  // namespace lager
