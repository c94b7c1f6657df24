#pragma once

#include <atomic>
#include <string>

#include "sentrygate/config.hpp"
#include "sentrygate/runtime.hpp"

namespace sentrygate {

/// Forwards requests to the protected application over plain HTTP.
class HttpUpstream : public Upstream {
  public:
    HttpUpstream(std::string host, int port, int timeout_s = 30);
    HttpResponse forward(const RawRequest& req) override;

  private:
    std::string host_;
    int port_;
    int timeout_s_;
};

/// Runs the proxy until `stop` becomes true or the listener fails. Returns
/// false when the listen address cannot be bound.
bool serve(const Config& config, std::atomic<bool>& stop);

}  // namespace sentrygate
