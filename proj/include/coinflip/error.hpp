#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace coinflip {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A parameter lies outside the domain of the operation it feeds.
class DomainError : public Error {
  public:
    using Error::Error;
};

/// comb() was asked to combine sub-protocols whose honest values are out of order.
class ParameterOrderError : public Error {
  public:
    using Error::Error;
};

/// Both parties were given cheating strategies; the threat model has one cheater.
class ModelError : public Error {
  public:
    using Error::Error;
};

class ParseError : public Error {
  public:
    using Error::Error;
};

class ChannelError : public Error {
  public:
    using Error::Error;
};

class MalformedTranscript : public Error {
  public:
    using Error::Error;
};

/// Grammar or fingerprint mismatch; carries the sequence number of the offending record.
class ProtocolViolation : public Error {
  public:
    ProtocolViolation(const std::string& what, std::uint64_t seq)
        : Error(what), seq_(seq) {}
    std::uint64_t seq() const noexcept { return seq_; }

  private:
    std::uint64_t seq_;
};

class Timeout : public Error {
  public:
    Timeout(const std::string& what, std::uint64_t seq) : Error(what), seq_(seq) {}
    std::uint64_t seq() const noexcept { return seq_; }

  private:
    std::uint64_t seq_;
};

} // namespace coinflip
