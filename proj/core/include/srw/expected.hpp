#pragma once

#include <string>
#include <type_traits>
#include <utility>
#include <variant>

namespace srw {

/// Error carried across module boundaries. `code` is a stable machine token
/// (it is what ends up in `error` envelopes); `message` is for humans.
struct Error {
  std::string code;
  std::string message;

  bool operator==(const Error&) const = default;
};

inline Error make_error(std::string code, std::string message = {}) {
  return Error{std::move(code), std::move(message)};
}

/// Minimal value-or-error holder. GCC 11 ships no std::expected.
template <class T, class E = Error>
class Expected {
 public:
  Expected(const T& value) : storage_(std::in_place_index<0>, value) {}
  Expected(T&& value) : storage_(std::in_place_index<0>, std::move(value)) {}
  Expected(const E& error) : storage_(std::in_place_index<1>, error) {}
  Expected(E&& error) : storage_(std::in_place_index<1>, std::move(error)) {}

  bool has_value() const noexcept { return storage_.index() == 0; }
  explicit operator bool() const noexcept { return has_value(); }

  T& value() & { return std::get<0>(storage_); }
  const T& value() const& { return std::get<0>(storage_); }
  T&& value() && { return std::get<0>(std::move(storage_)); }

  const E& error() const& { return std::get<1>(storage_); }
  E&& error() && { return std::get<1>(std::move(storage_)); }

  T& operator*() & { return value(); }
  const T& operator*() const& { return value(); }
  T&& operator*() && { return std::move(*this).value(); }
  T* operator->() { return &value(); }
  const T* operator->() const { return &value(); }

 private:
  std::variant<T, E> storage_;
};

template <class E>
class Expected<void, E> {
 public:
  Expected() = default;
  Expected(const E& error) : error_(error), ok_(false) {}
  Expected(E&& error) : error_(std::move(error)), ok_(false) {}

  bool has_value() const noexcept { return ok_; }
  explicit operator bool() const noexcept { return ok_; }
  const E& error() const& { return error_; }

 private:
  E error_{};
  bool ok_ = true;
};

}  // namespace srw
