#pragma once

#include <stdexcept>
#include <string>

namespace plumber {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define PLUMBER_ERROR(Name)                      \
    struct Name : Error {                        \
        using Error::Error;                      \
    }

PLUMBER_ERROR(ComponentOutOfRange);
PLUMBER_ERROR(InvalidGeometry);
PLUMBER_ERROR(UnknownDirective);
PLUMBER_ERROR(MalformedAttribute);
PLUMBER_ERROR(ExpansionTooLarge);
PLUMBER_ERROR(UnsatisfiableRelation);
PLUMBER_ERROR(StoreExhausted);
PLUMBER_ERROR(UnknownKey);
PLUMBER_ERROR(BadRange);
PLUMBER_ERROR(DegenerateTable);
PLUMBER_ERROR(NoConsistentRelation);
PLUMBER_ERROR(UnboundSymbol);
PLUMBER_ERROR(MissingBinding);
PLUMBER_ERROR(SchemaVersionMismatch);
PLUMBER_ERROR(BadBackreference);
PLUMBER_ERROR(BadQuantifier);
PLUMBER_ERROR(InsufficientTrace);
PLUMBER_ERROR(LengthMismatch);
PLUMBER_ERROR(ScenarioConfigError);
PLUMBER_ERROR(ConfigError);

#undef PLUMBER_ERROR

struct SyntaxError : Error {
    int line, col;
    std::string expected;
    SyntaxError(int l, int c, std::string exp)
        : Error("syntax error at " + std::to_string(l) + ":" + std::to_string(c) +
                ": expected " + exp),
          line(l), col(c), expected(std::move(exp)) {}
};

// Carries a JSON-pointer-like path to the offending element.
struct ParseError : Error {
    std::string path;
    ParseError(std::string p, const std::string& what)
        : Error(p + ": " + what), path(std::move(p)) {}
};

}  // namespace plumber
