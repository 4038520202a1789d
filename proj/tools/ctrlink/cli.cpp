#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <csignal>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "ctrlink/catalog.hpp"
#include "ctrlink/device_host.hpp"
#include "ctrlink/record.hpp"
#include "ctrlink/session.hpp"
#include "ctrlink/trigger.hpp"

namespace ctrlink::cli {

namespace {

using nlohmann::ordered_json;
using namespace std::chrono_literals;

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted.store(true); }

void install_signal_handlers() {
  g_interrupted = false;
  struct sigaction sa {};
  sa.sa_handler = on_signal;
  sigemptyset(&sa.sa_mask);
  ::sigaction(SIGINT, &sa, nullptr);
  ::sigaction(SIGTERM, &sa, nullptr);
}

struct GlobalOptions {
  std::string endpoint = "tcp:127.0.0.1:7900";
  unsigned timeout_ms = 250;
  unsigned retries = 3;
  bool json = false;
};

struct StreamOptions {
  std::vector<unsigned> channels;
  unsigned period_ms = 100;
  std::uint64_t count = 0;
  std::uint64_t duration_ms = 0;
  unsigned keepalive_ms = 10;
  std::vector<std::string> modules;
};

struct SimOptions {
  std::string config;
  bool virtual_time = false;
  unsigned step_ms = 10;
};

std::map<std::uint8_t, std::uint8_t> parse_module_hints(const std::vector<std::string>& hints) {
  std::map<std::uint8_t, std::uint8_t> out;
  for (const auto& hint : hints) {
    const auto eq = hint.find('=');
    if (eq == std::string::npos) fail(Errc::ConfigError, "expected CH=TYPE, got '" + hint + "'");
    unsigned channel = 0;
    try {
      std::size_t used = 0;
      channel = static_cast<unsigned>(std::stoul(hint.substr(0, eq), &used));
      if (used != eq || channel > 255) throw std::out_of_range("channel");
    } catch (const std::exception&) {
      fail(Errc::ConfigError, "bad channel in '" + hint + "'");
    }
    const auto type = module_id_from_name(hint.substr(eq + 1));
    if (!type) fail(Errc::UnknownModuleType, hint.substr(eq + 1));
    out[static_cast<std::uint8_t>(channel)] = *type;
  }
  return out;
}

std::unique_ptr<Session> connect(const GlobalOptions& g, const std::vector<std::string>& module_hints = {}) {
  const auto hints = parse_module_hints(module_hints);
  SessionConfig config;
  config.reply_timeout = std::chrono::milliseconds(g.timeout_ms);
  config.retries = g.retries;
  auto session = open_session(open_endpoint(parse_endpoint(g.endpoint), std::chrono::milliseconds(g.timeout_ms)),
                              config);
  for (const auto& [channel, type] : hints) session->adopt_channel(channel, type);
  return session;
}

ordered_json value_json(std::uint8_t channel, const ChannelValue& value) {
  // Same field layout as a record line, minus the timestamp.
  auto j = ordered_json::parse(write_record_line({0, channel, value}));
  j.erase("t_ms");
  return j;
}

/// Subscribes to every channel and hands events to `consume` until the count,
/// the duration or an interrupt ends the stream. Keepalive PINGs keep a
/// virtual-time simulator moving.
template <class F>
void stream_events(Session& session, const StreamOptions& opts, std::ostream& err, F&& consume) {
  if (opts.channels.empty()) fail(Errc::ConfigError, "no channel to stream");
  for (const auto ch : opts.channels) {
    if (ch > 255) fail(Errc::ConfigError, "channel " + std::to_string(ch) + " out of range");
    session.subscribe(static_cast<std::uint8_t>(ch), static_cast<std::uint16_t>(opts.period_ms));
  }
  const auto start = std::chrono::steady_clock::now();
  std::uint64_t seen = 0;
  const auto done = [&] { return opts.count > 0 && seen >= opts.count; };
  const auto drain = [&] {
    const auto events = session.poll_events(1024);
    for (const auto& ev : events) {
      if (done()) break;
      consume(ev);
      ++seen;
    }
    return !events.empty();
  };

  while (!done()) {
    if (g_interrupted) {
      drain();
      break;
    }
    if (opts.duration_ms > 0 &&
        std::chrono::steady_clock::now() - start >= std::chrono::milliseconds(opts.duration_ms)) {
      break;
    }
    if (drain()) continue;
    session.ping();
    if (!drain() && opts.keepalive_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(opts.keepalive_ms));
  }
  if (const auto dropped = session.dropped_events(); dropped > 0) {
    err << "warning: " << dropped << " events dropped by a full queue" << std::endl;
  }
}

std::uint64_t nominal_time(const SessionEvent& ev, unsigned period_ms) { return ev.index * period_ms; }

void serve_simulator(sim::DeviceConfig config, const GlobalOptions& g, const SimOptions& opts, std::ostream& out,
                     std::ostream& err) {
  const auto endpoint = parse_endpoint(g.endpoint);
  const auto* tcp = std::get_if<TcpEndpoint>(&endpoint);
  if (tcp == nullptr) fail(Errc::ConfigError, "the simulator listens on tcp:<host>:<port> endpoints only");
  if (opts.step_ms == 0) fail(Errc::ConfigError, "--step-ms must be positive");
  if (opts.virtual_time) config.ping_step_ms = opts.step_ms;

  sim::DeviceHost host{sim::Device(std::move(config))};
  TcpListener listener(tcp->host, tcp->port);
  install_signal_handlers();
  const auto bound = to_string(Endpoint{TcpEndpoint{tcp->host, listener.port()}});
  if (g.json) {
    ordered_json j;
    j["listening"] = bound;
    out << j.dump() << std::endl;
  } else {
    out << bound << std::endl;
  }

  std::jthread watcher([&host](std::stop_token stop) {
    while (!stop.stop_requested() && !g_interrupted) std::this_thread::sleep_for(20ms);
    if (g_interrupted) host.stop();
  });

  sim::HostOptions host_opts;
  host_opts.clock = opts.virtual_time ? sim::ClockMode::Manual : sim::ClockMode::WallClock;
  host_opts.step_ms = opts.step_ms;
  while (!g_interrupted) {
    auto conn = listener.accept(100ms);
    if (!conn) continue;
    err << "client connected" << std::endl;
    host.serve(*conn, host_opts);
    err << "client disconnected" << std::endl;
  }
  watcher.request_stop();
}

std::uint8_t default_module_for(ValueKind kind, std::uint8_t channel) {
  switch (kind) {
    case ValueKind::Digital: return static_cast<std::uint8_t>(ModuleType::PushButton);
    case ValueKind::Analog: return static_cast<std::uint8_t>(ModuleType::Potentiometer);
    default:
      fail(Errc::ConfigError, "channel " + std::to_string(channel) + " holds " + std::string(to_string(kind)) +
                                  " values; name its module with --module CH=TYPE");
  }
}

sim::DeviceConfig replay_config(const std::vector<RecordLine>& records, const SimOptions& opts,
                                const std::vector<std::string>& module_hints) {
  std::map<std::uint8_t, std::vector<RecordLine>> by_channel;
  for (const auto& r : records) by_channel[r.channel].push_back(r);
  if (by_channel.empty()) fail(Errc::ConfigError, "the recording is empty");
  const auto hints = parse_module_hints(module_hints);

  sim::DeviceConfig config;
  if (!opts.config.empty()) {
    config = sim::load_device_config(opts.config);
  } else {
    std::uint8_t next_pin = 2;
    const auto last = by_channel.rbegin()->first;
    for (unsigned ch = 0; ch <= last; ++ch) {
      const auto c = static_cast<std::uint8_t>(ch);
      std::uint8_t type = static_cast<std::uint8_t>(ModuleType::PushButton);
      if (const auto h = hints.find(c); h != hints.end()) {
        type = h->second;
      } else if (const auto rec = by_channel.find(c); rec != by_channel.end()) {
        type = default_module_for(kind_of(rec->second.front().value), c);
      }
      sim::ChannelSpec spec{type, {}, std::nullopt};
      for (unsigned i = 0; i < descriptor_of(type).pin_count; ++i) {
        if (next_pin == 255) fail(Errc::ConfigError, "the recording needs more pins than exist");
        spec.pins.push_back(next_pin++);
      }
      config.channels.push_back(std::move(spec));
    }
  }

  for (const auto& [ch, recs] : by_channel) {
    if (ch >= config.channels.size()) {
      fail(Errc::ConfigError, "recorded channel " + std::to_string(ch) + " is not in the simulator config");
    }
    auto& spec = config.channels[ch];
    if (const auto h = hints.find(ch); h != hints.end() && h->second != spec.module_type) {
      fail(Errc::ConfigError, "channel " + std::to_string(ch) + " is " + module_name(spec.module_type) +
                                  " in the config but " + module_name(h->second) + " on the command line");
    }
    if (descriptor_of(spec.module_type).direction != Direction::Sensor) {
      fail(Errc::ConfigError, "recorded channel " + std::to_string(ch) + " is an actuator");
    }
    spec.signal = trace_from_records(spec.module_type, recs);
  }
  return config;
}

void add_stream_flags(CLI::App& cmd, StreamOptions& opts, bool channel_required) {
  auto* ch = cmd.add_option("-c,--channel", opts.channels, "Channel to subscribe (repeatable)");
  if (channel_required) ch->required();
  cmd.add_option("--period-ms", opts.period_ms, "Sampling period")->check(CLI::Range(10u, 60000u));
  cmd.add_option("--count", opts.count, "Stop after this many events (0: no limit)");
  cmd.add_option("--duration-ms", opts.duration_ms, "Stop after this much wall time (0: no limit)");
  cmd.add_option("--keepalive-ms", opts.keepalive_ms, "Pause between keepalive PINGs while idle");
  cmd.add_option("--module", opts.modules, "Declare a channel's module, CH=TYPE (repeatable)");
}

void add_sim_flags(CLI::App& cmd, SimOptions& opts) {
  cmd.add_flag("--virtual-time", opts.virtual_time, "Advance the clock by --step-ms on each inbound PING");
  cmd.add_option("--step-ms", opts.step_ms, "Clock granularity")->check(CLI::Range(1u, 60000u));
}

}  // namespace

int exit_code_for(Errc code) noexcept {
  switch (code) {
    case Errc::Timeout:
    case Errc::HandshakeTimeout:
      return kExitTimeout;
    case Errc::UnknownOpcode:
    case Errc::MalformedPayload:
    case Errc::VersionMismatch:
    case Errc::TransportError:
    case Errc::DeviceError:
    case Errc::SessionClosed:
    case Errc::NotReady:
    case Errc::BadChannel:
      return kExitProtocol;
    default:
      return kExitUsage;
  }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Talk to sensor/actuator controllers and simulate them", "ctrlink"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("-e,--endpoint", g.endpoint, "tcp:HOST:PORT, serial:PATH[?baud=N] or loopback:")
      ->capture_default_str();
  app.add_option("--timeout-ms", g.timeout_ms, "Reply timeout per attempt")->capture_default_str();
  app.add_option("--retries", g.retries, "Transmissions per request")->check(CLI::Range(1u, 100u))->capture_default_str();
  app.add_flag("--json", g.json, "Machine-readable output, one JSON object per line");

  std::function<void()> action;

  auto* ping = app.add_subcommand("ping", "Measure a PING round trip");
  unsigned ping_count = 1;
  ping->add_option("--count", ping_count, "Number of PINGs")->check(CLI::Range(1u, 100000u));
  ping->callback([&] {
    action = [&] {
      auto s = connect(g);
      for (unsigned i = 0; i < ping_count; ++i) {
        const auto rtt = s->ping().count();
        if (g.json) {
          ordered_json j;
          j["rtt_ms"] = rtt;
          out << j.dump() << '\n';
        } else {
          out << "pong " << rtt << " ms\n";
        }
      }
    };
  });

  auto* info = app.add_subcommand("info", "Show the device's handshake information");
  info->callback([&] {
    action = [&] {
      auto s = connect(g);
      const auto& d = s->device_info();
      std::vector<std::string> caps;
      for (std::uint8_t id = 0; id < kCatalogSize; ++id) {
        if (d.supports(id)) caps.push_back(module_name(id));
      }
      if (g.json) {
        ordered_json j;
        j["protocol_version"] = d.protocol_version;
        j["firmware_version"] = d.firmware_version;
        j["capabilities"] = caps;
        out << j.dump() << '\n';
      } else {
        out << "protocol " << unsigned{d.protocol_version} << ", firmware " << (d.firmware_version >> 8) << '.'
            << (d.firmware_version & 0xFF) << '\n';
        for (const auto& c : caps) out << "  " << c << '\n';
      }
    };
  });

  auto* attach = app.add_subcommand("attach", "Attach a module and print its channel");
  std::string attach_module;
  std::vector<unsigned> attach_pins;
  attach->add_option("-m,--module", attach_module, "Module name or id")->required();
  attach->add_option("-p,--pins", attach_pins, "Pins, comma separated")->delimiter(',')->required();
  attach->callback([&] {
    action = [&] {
      const auto type = module_id_from_name(attach_module);
      if (!type) fail(Errc::UnknownModuleType, attach_module);
      std::vector<std::uint8_t> pins;
      for (const auto p : attach_pins) {
        if (p > 255) fail(Errc::ConfigError, "pin " + std::to_string(p) + " out of range");
        pins.push_back(static_cast<std::uint8_t>(p));
      }
      auto s = connect(g);
      const auto ch = s->attach(*type, pins);
      if (g.json) {
        ordered_json j;
        j["channel"] = ch;
        j["module"] = module_name(*type);
        out << j.dump() << '\n';
      } else {
        out << "channel " << unsigned{ch} << '\n';
      }
    };
  });

  auto* read = app.add_subcommand("read", "Read a sensor channel once");
  unsigned read_channel = 0;
  std::vector<std::string> read_modules;
  read->add_option("-c,--channel", read_channel, "Channel")->required()->check(CLI::Range(0u, 255u));
  read->add_option("--module", read_modules, "Declare a channel's module, CH=TYPE (repeatable)");
  read->callback([&] {
    action = [&] {
      auto s = connect(g, read_modules);
      const auto ch = static_cast<std::uint8_t>(read_channel);
      const auto value = s->read(ch);
      if (g.json) {
        out << value_json(ch, value).dump() << '\n';
      } else {
        out << format_value(value) << '\n';
      }
    };
  });

  auto* write = app.add_subcommand("write", "Set an actuator channel");
  unsigned write_channel = 0;
  std::string write_value;
  std::vector<std::string> write_modules;
  write->add_option("-c,--channel", write_channel, "Channel")->required()->check(CLI::Range(0u, 255u));
  write->add_option("-v,--value", write_value, "KIND:VALUE, e.g. digital:1, scalar:90000, text:Hi\\nthere")
      ->required();
  write->add_option("--module", write_modules, "Declare a channel's module, CH=TYPE (repeatable)");
  write->callback([&] {
    action = [&] {
      const auto value = parse_value(write_value);
      auto s = connect(g, write_modules);
      s->write(static_cast<std::uint8_t>(write_channel), value);
      if (g.json) {
        ordered_json j;
        j["ok"] = true;
        out << j.dump() << '\n';
      } else {
        out << "ok\n";
      }
    };
  });

  auto* monitor = app.add_subcommand("monitor", "Subscribe and print values as they arrive");
  StreamOptions monitor_opts;
  add_stream_flags(*monitor, monitor_opts, true);
  monitor->callback([&] {
    action = [&] {
      install_signal_handlers();
      auto s = connect(g, monitor_opts.modules);
      stream_events(*s, monitor_opts, err, [&](const SessionEvent& ev) {
        const RecordLine line{nominal_time(ev, monitor_opts.period_ms), ev.channel, ev.value};
        if (g.json) {
          out << write_record_line(line) << '\n';
        } else {
          out << line.t_ms << " ch" << unsigned{line.channel} << ' ' << format_value(line.value) << '\n';
        }
        out.flush();
      });
    };
  });

  auto* record = app.add_subcommand("record", "Monitor into a recording file");
  StreamOptions record_opts;
  std::string record_output;
  add_stream_flags(*record, record_opts, true);
  record->add_option("-o,--output", record_output, "Recording file")->required();
  record->callback([&] {
    action = [&] {
      install_signal_handlers();
      std::vector<RecordLine> lines;
      {
        auto s = connect(g, record_opts.modules);
        stream_events(*s, record_opts, err, [&](const SessionEvent& ev) {
          lines.push_back({nominal_time(ev, record_opts.period_ms), ev.channel, ev.value});
        });
      }
      std::stable_sort(lines.begin(), lines.end(),
                       [](const RecordLine& a, const RecordLine& b) { return a.t_ms < b.t_ms; });
      std::ofstream file(record_output);
      if (!file) fail(Errc::ConfigError, "cannot write " + record_output);
      write_records(file, lines);
      if (g.json) {
        ordered_json j;
        j["recorded"] = lines.size();
        j["output"] = record_output;
        out << j.dump() << '\n';
      } else {
        out << "recorded " << lines.size() << " events to " << record_output << '\n';
      }
    };
  });

  auto* replay = app.add_subcommand("replay", "Host a simulator that plays a recording back");
  std::string replay_input;
  std::vector<std::string> replay_modules;
  SimOptions replay_opts;
  replay->add_option("-i,--input", replay_input, "Recording file")->required();
  replay->add_option("--config", replay_opts.config, "Simulator config whose channels receive the traces");
  replay->add_option("--module", replay_modules, "Module of a recorded channel, CH=TYPE (repeatable)");
  add_sim_flags(*replay, replay_opts);
  replay->callback([&] {
    action = [&] {
      const auto records = load_records(replay_input);
      serve_simulator(replay_config(records, replay_opts, replay_modules), g, replay_opts, out, err);
    };
  });

  auto* simulate = app.add_subcommand("simulate", "Host a simulated device on a TCP endpoint");
  SimOptions sim_opts;
  simulate->add_option("--config", sim_opts.config, "Simulator config (JSON)");
  add_sim_flags(*simulate, sim_opts);
  simulate->callback([&] {
    action = [&] {
      auto config = sim_opts.config.empty() ? sim::DeviceConfig{} : sim::load_device_config(sim_opts.config);
      serve_simulator(std::move(config), g, sim_opts, out, err);
    };
  });

  auto* map = app.add_subcommand("map", "Turn sensor streams into game actions with trigger rules");
  StreamOptions map_opts;
  std::string rules_path;
  add_stream_flags(*map, map_opts, false);
  map->add_option("-r,--rules", rules_path, "Rule file")->required();
  map->callback([&] {
    action = [&] {
      const auto rules = load_rules(rules_path);
      std::map<std::uint8_t, std::vector<TriggerRule>> per_channel;
      for (const auto& r : rules) per_channel[r.channel].push_back(r);
      std::map<std::uint8_t, TriggerEngine> engines;
      for (auto& [ch, list] : per_channel) engines.emplace(ch, TriggerEngine(std::move(list)));
      if (map_opts.channels.empty()) {
        for (const auto& [ch, engine] : engines) map_opts.channels.push_back(ch);
      }
      install_signal_handlers();
      auto s = connect(g, map_opts.modules);
      stream_events(*s, map_opts, err, [&](const SessionEvent& ev) {
        const auto it = engines.find(ev.channel);
        if (it == engines.end()) return;
        for (const auto& a : it->second.evaluate_sample(nominal_time(ev, map_opts.period_ms), ev.channel, ev.value)) {
          out << to_json_line(a) << '\n';
        }
        out.flush();
      });
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (action) action();
    out.flush();
    return kExitOk;
  } catch (const Error& e) {
    out.flush();
    err << "ctrlink: " << e.what() << std::endl;
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    out.flush();
    err << "ctrlink: " << e.what() << std::endl;
    return kExitProtocol;
  }
}

}  // namespace ctrlink::cli
