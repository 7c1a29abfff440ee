#include <filesystem>
#include <random>

#include <benchmark/benchmark.h>

#include "srw/pipeline.hpp"
#include "srw/protocol.hpp"
#include "srw/providers.hpp"
#include "srw/store.hpp"

namespace {

srw::Envelope sample_reply() {
  srw::Envelope env;
  env.session_id = "brave-otter-042";
  env.seq = 17;
  env.ts = 1760000000000;
  env.payload = srw::RobotReply{"brave-otter-042#4", "echo: tell me about the weather", std::nullopt,
                                srw::LatencyBreakdown{std::nullopt, 3.25, 1.5}, std::nullopt};
  return env;
}

void BM_EncodeEnvelope(benchmark::State& state) {
  const auto env = sample_reply();
  for (auto _ : state) benchmark::DoNotOptimize(srw::encode(env));
}
BENCHMARK(BM_EncodeEnvelope);

void BM_DecodeEnvelope(benchmark::State& state) {
  const auto frame = *srw::encode(sample_reply());
  for (auto _ : state) benchmark::DoNotOptimize(srw::decode(frame));
}
BENCHMARK(BM_DecodeEnvelope);

void BM_AssemblePrompt(benchmark::State& state) {
  std::vector<srw::ChatMessage> history;
  for (std::int64_t i = 0; i < state.range(0); ++i) {
    srw::ChatMessage m;
    m.turn_index = static_cast<std::uint64_t>(i);
    m.author = i % 2 == 0 ? srw::Author::user : srw::Author::robot;
    m.text = "message number " + std::to_string(i);
    history.push_back(m);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(srw::assemble_prompt("You are a friendly robot.", history, "next"));
  }
}
BENCHMARK(BM_AssemblePrompt)->Arg(0)->Arg(40)->Arg(400);

void BM_MockTts(benchmark::State& state) {
  srw::MockTts tts;
  const std::string text(static_cast<std::size_t>(state.range(0)), 'a');
  for (auto _ : state) benchmark::DoNotOptimize(tts.synthesize(text, "en-US", srw::VoiceGender::female));
}
BENCHMARK(BM_MockTts)->Arg(10)->Arg(200);

void BM_StoreAppend(benchmark::State& state) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("srw-bench-" + std::to_string(std::random_device{}()));
  auto store = std::move(*srw::Store::open(dir));
  srw::CommunicationSession session;
  session.id = "bench-session-001";
  (void)store->save_communication(session);
  srw::ChatMessage m;
  m.session_id = session.id;
  m.modality = srw::Modality::text;
  m.text = "hello robot";
  for (auto _ : state) benchmark::DoNotOptimize(store->append_chat_message(m));
  store.reset();
  std::filesystem::remove_all(dir);
}
BENCHMARK(BM_StoreAppend);

}  // namespace
BENCHMARK_MAIN();
