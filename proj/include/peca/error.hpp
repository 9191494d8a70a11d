#pragma once

#include <stdexcept>
#include <string>

namespace peca {

// Root of the library's exception hierarchy. The CLI maps subclasses to exit
// codes: contract-like failures exit 2, numerics failures exit 3.
class PecaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ContractError : public PecaError {
public:
    using PecaError::PecaError;
};

class ShapeError : public ContractError {
public:
    using ContractError::ContractError;
};

class EmptyMemoryError : public ContractError {
public:
    using ContractError::ContractError;
};

class NumericsError : public PecaError {
public:
    using PecaError::PecaError;
};

// Raised by the finite-difference oracle when the probed function is not
// deterministic.
class OracleError : public PecaError {
public:
    using PecaError::PecaError;
};

}  // namespace peca
