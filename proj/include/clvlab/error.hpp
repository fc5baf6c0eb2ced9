#pragma once

#include <stdexcept>
#include <string>

namespace clvlab {

// Every failure raised by the library derives from Error so callers can
// catch one type; the subclasses carry the failure category.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

// Non-finite values produced while integrating an ODE or its variational
// equation.
class IntegrationError : public Error {
 public:
  using Error::Error;
};

class ConditioningError : public Error {
 public:
  using Error::Error;
};

// Rank collapse in a stabilized cocycle product.
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

class NoIntersectionError : public Error {
 public:
  NoIntersectionError(int index, const std::string& what)
      : Error(what), index_(index) {}
  int index() const { return index_; }

 private:
  int index_;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class DegenerateClusteringError : public Error {
 public:
  using Error::Error;
};

}  // namespace clvlab
