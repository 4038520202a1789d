#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ctrlink/device.hpp"
#include "expect_error.hpp"
#include "oracles.hpp"

using namespace ctrlink;
using namespace ctrlink::sim;
namespace pc = ctrlink::protocol::cmd;

namespace {

std::vector<protocol::Frame> frames_of(const std::vector<std::uint8_t>& bytes, std::size_t* resyncs = nullptr) {
  protocol::FrameDecoder d;
  std::vector<protocol::Frame> out;
  for (auto& o : d.feed(bytes)) {
    if (auto* f = std::get_if<protocol::Frame>(&o)) {
      out.push_back(*f);
    } else if (resyncs) {
      ++*resyncs;
    }
  }
  return out;
}

std::vector<std::uint8_t> wire(std::uint8_t seq, const protocol::Command& c) {
  return protocol::encode_frame(protocol::encode_command(seq, c));
}

/// Sends one request and returns the decoded single reply.
/// Each call uses a fresh seq so the device's retransmit cache never answers.
protocol::Command call(Device& d, const protocol::Command& c) {
  static std::uint8_t next_seq = 0;
  const auto seq = ++next_seq;
  const auto replies = frames_of(d.run_step(wire(seq, c)));
  REQUIRE(replies.size() == 1);
  CHECK(replies[0].seq == seq);
  return protocol::decode_command(replies[0]);
}

std::uint8_t error_code(const protocol::Command& reply) { return std::get<pc::Error>(reply).code; }

constexpr auto code(DeviceErrc e) { return static_cast<std::uint8_t>(e); }

std::uint8_t attach(Device& d, ModuleType t, std::vector<std::uint8_t> pins) {
  return std::get<pc::AckAttach>(call(d, pc::Attach{static_cast<std::uint8_t>(t), std::move(pins)})).channel;
}

}  // namespace

TEST_CASE("HELLO returns the configured device info") {
  DeviceConfig config;
  config.firmware_version = 0x0203;
  Device d(config);
  const auto out = d.run_step(oracle::frame_bytes(0, 0x02, {0x01}));
  CHECK(out == oracle::frame_bytes(0, 0x82, {0x01, 0x03, 0x02, 0xFF, 0xFF, 0x01, 0x00}));
}

TEST_CASE("default config advertises every catalog module") {
  Device d;
  for (std::uint8_t id = 0; id < 17; ++id) CHECK(d.info().supports(id));
}

TEST_CASE("protocol_version passes through") {
  DeviceConfig config;
  config.protocol_version = 2;
  Device d(config);
  CHECK(std::get<pc::AckHello>(call(d, pc::Hello{})).info.protocol_version == 2);
}

TEST_CASE("capability gate") {
  DeviceConfig config;
  config.capabilities = kAllCatalogCapabilities & ~(1U << 3);
  Device d(config);
  CHECK(error_code(call(d, pc::Attach{3, {0xA0}})) == code(DeviceErrc::UnknownModuleType));
  CHECK(std::holds_alternative<pc::AckAttach>(call(d, pc::Attach{5, {0xA0}})));
  CHECK(error_code(call(d, pc::Attach{0x20, {1}})) == code(DeviceErrc::UnknownModuleType));
  CHECK(std::holds_alternative<pc::AckAttach>(call(d, pc::Attach{0x41, {2}})));
}

TEST_CASE("READ on a constant lm35 returns the raw sample") {
  Device d;
  const auto ch = attach(d, ModuleType::Lm35, {0xA0});
  d.set_signal(ch, Constant{205});
  const auto value = std::get<pc::Value>(call(d, pc::Read{ch}));
  CHECK(value.channel == ch);
  CHECK(value.value == ChannelValue{Analog{205}});
}

TEST_CASE("corrupted CRC produces no output") {
  Device d;
  auto bytes = wire(1, pc::Ping{});
  bytes.back() ^= 0x01;
  CHECK(d.run_step(bytes).empty());
}

TEST_CASE("attach assigns dense channels and guards pins") {
  Device d;
  CHECK(attach(d, ModuleType::Lm35, {0xA0}) == 0);
  CHECK(attach(d, ModuleType::Led5mm, {13}) == 1);
  CHECK(error_code(call(d, pc::Attach{3, {0xA0}})) == code(DeviceErrc::PinConflict));
  CHECK(error_code(call(d, pc::Attach{7, {1, 2, 2}})) == code(DeviceErrc::PinConflict));
  CHECK(error_code(call(d, pc::Attach{3, {}})) == code(DeviceErrc::BadPins));
  CHECK(error_code(call(d, pc::Attach{0x33, {9}})) == code(DeviceErrc::UnknownModuleType));
  CHECK(std::holds_alternative<pc::AckDetach>(call(d, pc::Detach{0})));
  CHECK(attach(d, ModuleType::Lm35, {0xA0}) == 2);  // no reuse, pin freed
  CHECK(error_code(call(d, pc::Detach{0})) == code(DeviceErrc::BadChannel));
  CHECK(d.tables_consistent());
}

TEST_CASE("channel table fills at 64") {
  Device d;
  for (int i = 0; i < 64; ++i) attach(d, ModuleType::PushButton, {static_cast<std::uint8_t>(i)});
  CHECK(error_code(call(d, pc::Attach{0, {200}})) == code(DeviceErrc::TableFull));
}

TEST_CASE("request errors") {
  Device d;
  const auto led = attach(d, ModuleType::Led5mm, {13});
  const auto pot = attach(d, ModuleType::Potentiometer, {14});
  CHECK(error_code(call(d, pc::Read{9})) == code(DeviceErrc::BadChannel));
  CHECK(error_code(call(d, pc::Read{led})) == code(DeviceErrc::WrongDirection));
  CHECK(error_code(call(d, pc::Write{pot, Digital{true}})) == code(DeviceErrc::WrongDirection));
  CHECK(error_code(call(d, pc::Write{led, Analog{3}})) == code(DeviceErrc::BadValue));
  CHECK(error_code(call(d, pc::Subscribe{pot, 5})) == code(DeviceErrc::BadValue));
  CHECK(error_code(call(d, pc::Subscribe{led, 50})) == code(DeviceErrc::WrongDirection));
  CHECK(error_code(call(d, pc::Unsubscribe{4})) == code(DeviceErrc::BadSubscription));
  CHECK(error_code(call(d, pc::AckPing{})) == code(DeviceErrc::UnknownOpcode));

  const auto unknown = frames_of(d.run_step(oracle::frame_bytes(3, 0x60, {})));
  REQUIRE(unknown.size() == 1);
  CHECK(protocol::decode_command(unknown[0]) == protocol::Command{pc::Error{code(DeviceErrc::UnknownOpcode), 0x60}});
  const auto malformed = frames_of(d.run_step(oracle::frame_bytes(4, 0x05, {})));
  REQUIRE(malformed.size() == 1);
  CHECK(protocol::decode_command(malformed[0]) == protocol::Command{pc::Error{code(DeviceErrc::MalformedPayload), 0x05}});
}

TEST_CASE("writes update the actuator snapshot") {
  Device d;
  const auto servo = attach(d, ModuleType::ServoSg90, {9});
  const auto lcd = attach(d, ModuleType::Lcd16x2, {1, 2, 3, 4, 5, 6});
  const auto seg = attach(d, ModuleType::SevenSegment, {20, 21, 22, 23, 24, 25, 26});
  CHECK(std::holds_alternative<pc::AckWrite>(call(d, pc::Write{servo, Scalar{90000}})));
  CHECK(std::holds_alternative<pc::AckWrite>(call(d, pc::Write{lcd, Text{"Hello\nWorld"}})));
  CHECK(std::holds_alternative<pc::AckWrite>(call(d, pc::Write{seg, Text{"4"}})));
  const auto snap = d.actuator_snapshot();
  CHECK(snap.at(servo) == ActuatorState{Servo{90000}});
  CHECK(snap.at(lcd) == ActuatorState{Lcd{{"Hello", "World"}}});
  CHECK(snap.at(seg) == ActuatorState{SevenSeg{'4'}});
  CHECK(error_code(call(d, pc::Write{servo, Scalar{181000}})) == code(DeviceErrc::BadValue));
  CHECK(d.actuator_snapshot().at(servo) == ActuatorState{Servo{90000}});
}

TEST_CASE("tick: one 50 ms subscription over 1000 ms gives 20 events") {
  Device d;
  const auto ch = attach(d, ModuleType::Lm35, {0xA0});
  d.set_signal(ch, Constant{205});
  const auto sub = std::get<pc::AckSubscribe>(call(d, pc::Subscribe{ch, 50})).subscription;
  const auto events = frames_of(d.tick(1000));
  CHECK(events.size() == 1000 / 50);
  for (const auto& f : events) {
    CHECK(f.seq == sub);
    CHECK(protocol::decode_command(f) == protocol::Command{pc::Event{sub, Analog{205}}});
  }
  CHECK(d.clock_ms() == 1000);
}

TEST_CASE("tick without subscriptions is silent") {
  Device d;
  CHECK(d.tick(10000).empty());
}

TEST_CASE("tick merges subscriptions by due time, then id") {
  Device d;
  const auto a = attach(d, ModuleType::Potentiometer, {1});
  const auto b = attach(d, ModuleType::Potentiometer, {2});
  std::vector<std::uint16_t> ramp(1000);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<std::uint16_t>(i);
  d.set_signal(a, Step{ramp, 1});
  d.set_signal(b, Step{ramp, 1});
  const auto s0 = std::get<pc::AckSubscribe>(call(d, pc::Subscribe{a, 50})).subscription;
  const auto s1 = std::get<pc::AckSubscribe>(call(d, pc::Subscribe{b, 70})).subscription;
  REQUIRE(s0 == 0);
  REQUIRE(s1 == 1);

  // Brute-force schedule: every ms, list which subscriptions are due.
  std::vector<std::pair<std::uint16_t, std::uint8_t>> expected;
  for (std::uint16_t t = 1; t <= 140; ++t) {
    if (t % 50 == 0) expected.push_back({t, 0});
    if (t % 70 == 0) expected.push_back({t, 1});
  }
  std::vector<std::pair<std::uint16_t, std::uint8_t>> got;
  for (const auto& f : frames_of(d.tick(140))) {
    const auto ev = std::get<pc::Event>(protocol::decode_command(f));
    got.push_back({std::get<Analog>(ev.value).raw, ev.subscription});
  }
  CHECK(got == expected);
  CHECK(got.size() == 4);
}

TEST_CASE("ties at the same due time go to the lower id") {
  Device d;
  const auto a = attach(d, ModuleType::Potentiometer, {1});
  call(d, pc::Subscribe{a, 30});
  call(d, pc::Subscribe{a, 20});
  std::vector<std::uint8_t> ids;
  for (const auto& f : frames_of(d.tick(60))) ids.push_back(f.seq);
  CHECK(ids == std::vector<std::uint8_t>{1, 0, 1, 0, 1});
}

TEST_CASE("subscription table bound, lowest free id, unsubscribe silences") {
  Device d;
  const auto ch = attach(d, ModuleType::Potentiometer, {1});
  for (int i = 0; i < 16; ++i) CHECK(std::get<pc::AckSubscribe>(call(d, pc::Subscribe{ch, 100})).subscription == i);
  CHECK(error_code(call(d, pc::Subscribe{ch, 100})) == code(DeviceErrc::TableFull));
  CHECK(std::holds_alternative<pc::AckUnsubscribe>(call(d, pc::Unsubscribe{5})));
  CHECK(std::get<pc::AckSubscribe>(call(d, pc::Subscribe{ch, 100})).subscription == 5);
  for (std::uint8_t i = 0; i < 16; ++i) call(d, pc::Unsubscribe{i});
  CHECK(d.tick(5000).empty());
}

TEST_CASE("HELLO clears subscriptions") {
  Device d;
  const auto ch = attach(d, ModuleType::Potentiometer, {1});
  call(d, pc::Subscribe{ch, 10});
  call(d, pc::Hello{});
  CHECK(d.subscriptions().empty());
  CHECK(d.tick(100).empty());
}

TEST_CASE("a repeated request gets the cached reply without re-executing") {
  Device d;
  const auto req = wire(5, pc::Attach{0, {3}});
  const auto first = d.run_step(req);
  const auto second = d.run_step(req);
  CHECK(first == second);
  CHECK(d.pin_table().size() == 1);
  CHECK(attach(d, ModuleType::PushButton, {4}) == 1);
}

TEST_CASE("sine source matches the half-even oracle") {
  Device d;
  const auto ch = attach(d, ModuleType::Potentiometer, {1});
  d.set_signal(ch, Sine{0, 1023, 1000});
  d.tick(250);
  CHECK(d.sample(ch) == 1023);
  CHECK(oracle::sine_raw(0, 1023, 1000, 250) == 1023);
  for (std::uint64_t t = 250; t < 3000; t += 7) {
    REQUIRE(d.sample(ch) == oracle::sine_raw(0, 1023, 1000, t));
    d.tick(7);
  }
  for (std::uint64_t t = 0; t < 2000; ++t) {
    REQUIRE(sample_signal(Sine{100, 900, 333}, t) == oracle::sine_raw(100, 900, 333, t));
  }
}

TEST_CASE("signals start from the clock at installation") {
  Device d;
  const auto ch = attach(d, ModuleType::Potentiometer, {1});
  d.tick(1234);
  d.set_signal(ch, Step{{10, 20, 30}, 100});
  CHECK(d.sample(ch) == 10);
  d.tick(100);
  CHECK(d.sample(ch) == 20);
  d.tick(200);
  CHECK(d.sample(ch) == 10);
}

TEST_CASE("trace playback holds, loops and clamps") {
  const Trace hold{{{10, 1}, {20, 2}, {40, 4}}, false};
  CHECK(sample_signal(hold, 0) == 1);
  CHECK(sample_signal(hold, 19) == 1);
  CHECK(sample_signal(hold, 20) == 2);
  CHECK(sample_signal(hold, 39) == 2);
  CHECK(sample_signal(hold, 10000) == 4);
  Trace loop = hold;
  loop.loop = true;
  // span = 40 + (40 - 20) = 60
  CHECK(sample_signal(loop, 59) == 4);
  CHECK(sample_signal(loop, 60) == 1);
  CHECK(sample_signal(loop, 80) == 2);

  Device d;
  const auto ch = attach(d, ModuleType::Potentiometer, {1});
  d.set_signal(ch, Constant{5000});
  CHECK(d.sample(ch) == 1023);
}

TEST_CASE("set_signal errors and degenerate sources") {
  Device d;
  const auto led = attach(d, ModuleType::Led5mm, {13});
  CHECK(errc_of([&] { d.set_signal(led, Constant{1}); }) == Errc::WrongDirection);
  CHECK(errc_of([&] { d.set_signal(40, Constant{1}); }) == Errc::BadChannel);
  CHECK(errc_of([] { validate_signal(Step{{}, 10}); }) == Errc::ConfigError);
  CHECK(errc_of([] { validate_signal(Sine{10, 5, 100}); }) == Errc::ConfigError);
  CHECK(errc_of([] { validate_signal(Sine{1, 5, 0}); }) == Errc::ConfigError);
  CHECK(errc_of([] { validate_signal(Trace{{{5, 1}, {4, 1}}, false}); }) == Errc::ConfigError);
}

TEST_CASE("manual source") {
  Device d;
  const auto ch = attach(d, ModuleType::PushButton, {2});
  d.set_manual(ch, 1);
  CHECK(std::get<pc::Value>(call(d, pc::Read{ch})).value == ChannelValue{Digital{true}});
  d.set_manual(ch, 0);
  CHECK(std::get<pc::Value>(call(d, pc::Read{ch})).value == ChannelValue{Digital{false}});
}

TEST_CASE("random request streams: determinism, conformance, one reply per request, table safety") {
  oracle::Rng rng(99);
  for (int round = 0; round < 50; ++round) {
    Device a;
    Device b;
    std::vector<std::uint8_t> out_a;
    std::vector<std::uint8_t> out_b;
    for (int step = 0; step < 200; ++step) {
      if (oracle::uniform<int>(rng, 0, 5) == 0) {
        const auto ms = oracle::uniform<std::uint32_t>(rng, 0, 300);
        auto ea = a.tick(ms);
        auto eb = b.tick(ms);
        out_a.insert(out_a.end(), ea.begin(), ea.end());
        out_b.insert(out_b.end(), eb.begin(), eb.end());
        continue;
      }
      protocol::Command c;
      switch (oracle::uniform<int>(rng, 0, 6)) {
        case 0: c = pc::Attach{oracle::uniform<std::uint8_t>(rng, 0, 18), {oracle::uniform<std::uint8_t>(rng, 0, 30)}}; break;
        case 1: c = pc::Read{oracle::uniform<std::uint8_t>(rng, 0, 8)}; break;
        case 2: c = pc::Subscribe{oracle::uniform<std::uint8_t>(rng, 0, 8), oracle::uniform<std::uint16_t>(rng, 0, 200)}; break;
        case 3: c = pc::Unsubscribe{oracle::uniform<std::uint8_t>(rng, 0, 16)}; break;
        case 4: c = pc::Detach{oracle::uniform<std::uint8_t>(rng, 0, 8)}; break;
        case 5: c = pc::Write{oracle::uniform<std::uint8_t>(rng, 0, 8), oracle::random_value(rng, 4)}; break;
        default: c = oracle::random_command(rng); break;
      }
      const auto req = wire(static_cast<std::uint8_t>(step), c);
      const auto ra = a.run_step(req);
      const auto rb = b.run_step(req);
      std::size_t resyncs = 0;
      const auto replies = frames_of(ra, &resyncs);
      REQUIRE(resyncs == 0);
      REQUIRE(replies.size() == 1);
      REQUIRE(replies[0].seq == req[2]);
      REQUIRE(a.tables_consistent());
      out_a.insert(out_a.end(), ra.begin(), ra.end());
      out_b.insert(out_b.end(), rb.begin(), rb.end());
    }
    REQUIRE(out_a == out_b);
    std::size_t resyncs = 0;
    frames_of(out_a, &resyncs);
    CHECK(resyncs == 0);
  }
}

TEST_CASE("config file parsing") {
  const auto config = parse_device_config(R"({
    "protocol_version": 1,
    "firmware_version": 513,
    "capabilities": ["lm35", "led5mm", 12],
    "channels": [
      {"module": "lm35", "pins": [160], "signal": {"type": "constant", "raw": 205}},
      {"module": "led5mm", "pins": [13]},
      {"module": 12, "pins": [14], "signal": {"type": "sine", "min": 0, "max": 1023, "period_ms": 1000}},
      {"module": "potentiometer", "pins": [15], "signal": {"type": "trace", "samples": [[0, 1], [10, 2]], "loop": true}},
      {"module": "potentiometer", "pins": [16], "signal": {"type": "step", "values": [1, 2], "dwell_ms": 5}},
      {"module": "push_button", "pins": [17], "signal": {"type": "manual"}}
    ]})");
  CHECK(config.firmware_version == 513);
  CHECK(config.capabilities == ((1U << 3) | (1U << 13) | (1U << 12)));
  REQUIRE(config.channels.size() == 6);
  CHECK(config.channels[0].signal == std::optional<SignalSource>{Constant{205}});
  CHECK(config.channels[3].signal == std::optional<SignalSource>{Trace{{{0, 1}, {10, 2}}, true}});

  DeviceConfig ok = config;
  ok.capabilities = kAllCatalogCapabilities;
  Device d(ok);
  CHECK(d.module_of(0) == std::optional<std::uint8_t>{3});
  CHECK(d.sample(0) == 205);

  for (const char* bad : {
           "[]", "{\"channels\": 3}", "{\"channels\": [{\"module\": \"gyro\", \"pins\": [1]}]}",
           "{\"channels\": [{\"module\": \"led5mm\", \"pins\": [1], \"signal\": {\"type\": \"constant\", \"raw\": 1}}]}",
           "{\"channels\": [{\"module\": \"lm35\", \"pins\": [300]}]}",
           "{\"channels\": [{\"module\": \"lm35\", \"pins\": [1], \"signal\": {\"type\": \"noise\"}}]}",
           "{\"firmware_version\": 70000}", "{\"capabilities\": [\"0x40\"]}", "not json",
       }) {
    CAPTURE(bad);
    CHECK(errc_of([&] { parse_device_config(bad); }) == Errc::ConfigError);
  }
  // Attach failures surface when the device is built.
  const auto clash = parse_device_config(R"({"channels": [{"module": "lm35", "pins": [1]}, {"module": "ldr", "pins": [1]}]})");
  CHECK(errc_of([&] { Device{clash}; }) == Errc::ConfigError);
}
