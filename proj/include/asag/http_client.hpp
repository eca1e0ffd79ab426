#pragma once

// Separately included so only binaries that actually talk HTTP pay for
// httplib; everything else uses the ChatClient interface or the mock.

#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

#include "asag/llmharness.hpp"

namespace asag {

inline Completion HttpChatClient::complete(
    const std::string& model, const std::vector<ChatMessage>& messages,
    double temperature) {
  httplib::Client cli(host_port_);
  cli.set_read_timeout(120, 0);
  httplib::Headers headers;
  if (const char* key = std::getenv("ASAG_API_KEY"))
    headers.emplace("Authorization", std::string("Bearer ") + key);

  nlohmann::json body;
  body["model"] = model;
  body["temperature"] = temperature;
  auto msgs = nlohmann::json::array();
  for (const auto& m : messages)
    msgs.push_back({{"role", m.role}, {"content", m.content}});
  body["messages"] = msgs;

  auto res = cli.Post(path_, headers, body.dump(), "application/json");
  if (!res)
    throw std::runtime_error("transport failure to " + host_port_);
  if (res->status != 200)
    throw std::runtime_error("HTTP " + std::to_string(res->status));
  auto j = nlohmann::json::parse(res->body);
  Completion out;
  out.text = j.at("choices").at(0).at("message").at("content")
                 .get<std::string>();
  if (j.contains("usage")) {
    out.prompt_tokens = j["usage"].value("prompt_tokens", 0L);
    out.completion_tokens = j["usage"].value("completion_tokens", 0L);
  }
  return out;
}

}  // namespace asag
