#pragma once

#include <functional>
#include <iostream>
#include <string>
#include <string_view>

namespace swan {

using LogSink = std::function<void(std::string_view)>;

/// Process-wide diagnostic sink; defaults to stderr. Set an empty function to silence.
inline LogSink& log_sink() {
    static LogSink sink = [](std::string_view msg) { std::clog << "[swan] " << msg << '\n'; };
    return sink;
}

inline void log(std::string_view msg) {
    if (auto& sink = log_sink()) sink(msg);
}

} // namespace swan
