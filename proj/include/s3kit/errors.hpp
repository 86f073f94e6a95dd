#pragma once

#include <stdexcept>
#include <string>

namespace s3kit {

// Base class for every error thrown by the toolkit.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class SizeMismatch : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class MalformedRle : public Error {
public:
    using Error::Error;
};

class EmptyMask : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

// Schema violations carry the path of the offending record, e.g.
// "instances[3].segmentation.counts".
class SchemaError : public Error {
public:
    SchemaError(const std::string& path, const std::string& what)
        : Error(path + ": " + what), path_(path) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

class IoError : public Error {
public:
    using Error::Error;
};

class VersionMismatch : public Error {
public:
    using Error::Error;
};

class EmptyDataset : public Error {
public:
    using Error::Error;
};

class ZeroVector : public Error {
public:
    using Error::Error;
};

class NonFiniteValue : public Error {
public:
    using Error::Error;
};

class BadTarget : public Error {
public:
    using Error::Error;
};

class SingularAngle : public Error {
public:
    using Error::Error;
};

class EmptyMaskRegion : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Non-finite training loss; carries where the run died.
class DivergedLoss : public Error {
public:
    DivergedLoss(const std::string& phase, int epoch)
        : Error("training loss diverged in phase '" + phase + "', epoch " +
                std::to_string(epoch)),
          phase_(phase),
          epoch_(epoch) {}
    const std::string& phase() const { return phase_; }
    int epoch() const { return epoch_; }

private:
    std::string phase_;
    int epoch_;
};

}  // namespace s3kit
