#pragma once

#include <stdexcept>
#include <string>

namespace fowf
{
    /// Base of all errors raised by the library.
    class Error : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    class ConfigError : public Error
    {
    public:
        using Error::Error;
    };

    /// Argument outside the domain of a physical relation (e.g. induction factor).
    class DomainError : public Error
    {
    public:
        using Error::Error;
    };

    /// Mooring line cannot span the requested distance.
    class NoSolutionError : public Error
    {
    public:
        using Error::Error;
    };

    class DivergedError : public Error
    {
    public:
        using Error::Error;
    };

    class TrainingError : public Error
    {
    public:
        using Error::Error;
    };

    class IoError : public Error
    {
    public:
        using Error::Error;
    };
} // namespace fowf
