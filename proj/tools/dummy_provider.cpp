// Reference implementation of the evalkit provider and external-module
// line protocols, plus misbehaving modes used by the test suite.
//
//   dummy-provider --mode echo-int          parse inputs.text as the label
//   dummy-provider --mode constant --value N constant integer label
//   dummy-provider --mode echo-tags         tags := inputs.tokens
//   dummy-provider --mode qa-first-word     first token of inputs.context
//   dummy-provider --mode slow --delay-ms D echo-int with a per-item delay
//   dummy-provider --mode out-of-order      respond per flush, reversed
//   dummy-provider --mode duplicate-id      answer each request twice
//   dummy-provider --mode error-response    report an error for every id
//   dummy-provider --mode crash --after N   exit(3) after N responses
//   dummy-provider --mode hang              never respond
//   dummy-provider --mode module-accuracy   external-module scoring demo

#include <chrono>
#include <cstdint>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

using json = nlohmann::json;

namespace {

struct Options {
  std::string mode = "echo-int";
  long long value = 0;
  int delay_ms = 0;
  long long crash_after = 0;
  std::string model = "dummy";
};

void send(const json& j) {
  std::cout << j.dump() << "\n";
  std::cout.flush();
}

json predict(const Options& opt, const json& inputs) {
  if (opt.mode == "constant") return opt.value;
  if (opt.mode == "echo-tags") return inputs.value("tokens", json::array());
  if (opt.mode == "qa-first-word") {
    std::string context = inputs.value("context", "");
    auto space = context.find(' ');
    return space == std::string::npos ? context : context.substr(0, space);
  }
  // echo-int and friends: the dataset encodes the label in the text
  std::string text = inputs.value("text", "");
  try {
    return std::stoll(text);
  } catch (...) {
    return text;
  }
}

int run_provider(const Options& opt) {
  std::string line;
  if (!std::getline(std::cin, line)) return 1;
  json hello = json::parse(line, nullptr, false);
  if (hello.is_discarded() || hello.value("type", "") != "hello") {
    std::cerr << "dummy-provider: bad handshake\n";
    return 1;
  }
  send(json{{"type", "ready"}, {"model", opt.model}});

  long long responded = 0;
  std::vector<json> pending;  // for out-of-order mode
  while (std::getline(std::cin, line)) {
    if (line.empty()) continue;
    json msg = json::parse(line, nullptr, false);
    if (msg.is_discarded()) continue;
    std::string type = msg.value("type", "");
    if (type == "shutdown") break;
    if (type == "flush") {
      for (auto it = pending.rbegin(); it != pending.rend(); ++it) send(*it);
      pending.clear();
      continue;
    }
    if (type != "request") continue;

    if (opt.mode == "hang") {
      std::this_thread::sleep_for(std::chrono::hours(24));
      continue;
    }
    std::uint64_t id = msg.value("id", 0ull);
    if (opt.mode == "error-response") {
      send(json{{"type", "response"}, {"id", id}, {"error", "simulated failure"}});
      continue;
    }
    if (opt.delay_ms > 0)
      std::this_thread::sleep_for(std::chrono::milliseconds(opt.delay_ms));

    json response{{"type", "response"},
                  {"id", id},
                  {"prediction", predict(opt, msg.value("inputs", json::object()))}};
    if (opt.mode == "out-of-order") {
      pending.push_back(std::move(response));
      continue;
    }
    send(response);
    if (opt.mode == "duplicate-id") send(response);
    ++responded;
    if (opt.mode == "crash" && responded >= opt.crash_after) {
      std::cerr << "dummy-provider: simulated crash\n";
      return 3;
    }
  }
  return 0;
}

int run_module(const Options& opt, const json& hello) {
  long long rows = hello.value("rows", 0ll);
  std::vector<long long> preds, refs;
  std::string line;
  for (long long i = 0; i < rows && std::getline(std::cin, line);) {
    json msg = json::parse(line, nullptr, false);
    if (msg.is_discarded() || msg.value("type", "") != "row") continue;
    const json& cols = msg.value("columns", json::object());
    preds.push_back(cols.value("predictions", 0ll));
    refs.push_back(cols.value("references", 0ll));
    ++i;
  }
  if (opt.mode == "module-error") {
    send(json{{"type", "error"}, {"message", "simulated module failure"}});
    return 0;
  }
  long long correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == refs[i]) ++correct;
  double accuracy = preds.empty() ? 0.0 : double(correct) / double(preds.size());
  send(json{{"type", "result"}, {"values", {{"score", accuracy}}}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    auto next = [&]() -> std::string {
      if (i + 1 >= argc) {
        std::cerr << "dummy-provider: missing value for " << arg << "\n";
        exit(1);
      }
      return argv[++i];
    };
    if (arg == "--mode") opt.mode = next();
    else if (arg == "--value") opt.value = std::stoll(next());
    else if (arg == "--delay-ms") opt.delay_ms = std::stoi(next());
    else if (arg == "--after") opt.crash_after = std::stoll(next());
    else if (arg == "--model") opt.model = next();
    else {
      std::cerr << "dummy-provider: unknown flag " << arg << "\n";
      return 1;
    }
  }

  if (opt.mode.rfind("module-", 0) == 0) {
    std::string line;
    if (!std::getline(std::cin, line)) return 1;
    json hello = json::parse(line, nullptr, false);
    if (hello.is_discarded()) return 1;
    return run_module(opt, hello);
  }
  return run_provider(opt);
}
