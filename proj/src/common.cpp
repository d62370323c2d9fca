#include "mmplug/common.hpp"

#include <charconv>

namespace mmplug {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::Size: return "size";
    case ErrorCode::Schedule: return "schedule";
    case ErrorCode::Alignment: return "alignment";
    case ErrorCode::State: return "state";
    case ErrorCode::Stratification: return "stratification";
    case ErrorCode::Config: return "config";
    case ErrorCode::Io: return "io";
    case ErrorCode::Network: return "network";
    case ErrorCode::Timeout: return "timeout";
    case ErrorCode::NotConnected: return "not_connected";
    case ErrorCode::Protocol: return "protocol";
  }
  return "unknown";
}

void Matrix::append_row(std::span<const double> values) {
  if (rows_ == 0 && cols_ == 0) cols_ = values.size();
  if (values.size() != cols_) {
    throw Error(ErrorCode::Size, "matrix row has " + std::to_string(values.size()) +
                                     " columns, expected " + std::to_string(cols_));
  }
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace mmplug
