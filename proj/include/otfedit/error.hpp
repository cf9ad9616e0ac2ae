// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace otf {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Timestep pair is not adjacent on the schedule grid, or a schedule is malformed.
class GridError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// The language model completion could not be split into caption lists.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::string raw_completion)
        : Error(what), raw_(std::move(raw_completion)) {}

    const std::string& raw_completion() const noexcept { return raw_; }

private:
    std::string raw_;
};

// A noise predictor threw while a sampling or inversion loop was running.
class PredictorError : public Error {
public:
    PredictorError(int step_index, int timestep, const std::string& what)
        : Error("predictor failed at step " + std::to_string(step_index) + " (t=" +
                std::to_string(timestep) + "): " + what),
          step_index_(step_index),
          timestep_(timestep) {}

    int step_index() const noexcept { return step_index_; }
    int timestep() const noexcept { return timestep_; }

private:
    int step_index_;
    int timestep_;
};

// A backend could not be brought up; names the component that failed.
class LoadError : public Error {
public:
    LoadError(std::string component, const std::string& what)
        : Error(component + ": " + what), component_(std::move(component)) {}

    const std::string& component() const noexcept { return component_; }

private:
    std::string component_;
};

// A backend call failed at run time; names the component.
class BackendError : public Error {
public:
    BackendError(std::string component, const std::string& what)
        : Error(component + ": " + what), component_(std::move(component)) {}

    const std::string& component() const noexcept { return component_; }

private:
    std::string component_;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Pipeline failure tagged with the single stage it occurred in: request,
// captioning, inversion, generation or editing.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error(stage + ": " + what), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace otf
