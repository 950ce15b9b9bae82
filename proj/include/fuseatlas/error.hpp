#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fuseatlas {

/// Base of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

class InvalidDimensionToken : public Error {
public:
    explicit InvalidDimensionToken(std::string token)
        : Error("invalid dimension token '" + token + "'"), token_(std::move(token)) {}

    const std::string& token() const noexcept { return token_; }

private:
    std::string token_;
};

class UnknownTask : public Error {
public:
    explicit UnknownTask(std::string term)
        : Error("unknown task '" + term + "'"), term_(std::move(term)) {}

    const std::string& term() const noexcept { return term_; }

private:
    std::string term_;
};

/// Malformed vocabulary mapping file.
class VocabError : public Error {
public:
    using Error::Error;
};

/// Recipe text that is not a well-formed document.
class RecipeParseError : public Error {
public:
    RecipeParseError(const std::string& what, std::size_t position)
        : Error(what), position_(position) {}

    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

/// Recipe that decodes but carries an invalid value.
class RecipeFieldError : public Error {
public:
    RecipeFieldError(std::string field, const std::string& what)
        : Error(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class FacetError : public Error {
public:
    using Error::Error;
};

class AxisError : public Error {
public:
    using Error::Error;
};

class WeightError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Manifest document that cannot be loaded (bad version, missing fields).
class ManifestError : public Error {
public:
    using Error::Error;
};

/// A precondition of an operation was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

}  // namespace fuseatlas
