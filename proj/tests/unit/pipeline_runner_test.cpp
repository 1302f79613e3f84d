#include <doctest.h>

#include <fmt/format.h>

#include "capforge/dataset_store.hpp"
#include "capforge/pipeline_runner.hpp"
#include "test_support.hpp"

using namespace capforge;
using capforge::testing::errc_of;
using capforge::testing::ScriptedTransport;
using capforge::testing::TempDir;

namespace {

struct Batch {
  TempDir dir;
  std::vector<AssetRecord> assets;
  PipelineConfig config;
  PipelineOptions options;

  explicit Batch(int count)
  {
    config.seed = 7;
    for (int i = 0; i < count; ++i) {
      const auto uid = fmt::format("obj-{:03}", i);
      assets.push_back(capforge::testing::make_asset(uid));
      capforge::testing::write_renders(dir.path(), uid, config.views_per_object);
    }
    options.image_root = dir.path();
  }

  [[nodiscard]] auto run(const Backends& backends) const -> PipelineResult
  {
    return run_pipeline(assets, config, backends, options);
  }
  [[nodiscard]] auto run() const -> PipelineResult { return run(make_mock_backends(config.seed, 512)); }
};

auto manifest_bytes(const PipelineResult& r) -> std::string
{
  return serialize_manifest({kManifestVersion, r.config_hash}, r.entries);
}

auto with_summarizer(std::shared_ptr<Transport> transport, std::uint64_t seed) -> Backends
{
  auto backends = make_mock_backends(seed, 512);
  BackendEndpoint endpoint;
  endpoint.base_url = "test://";
  endpoint.qps_limit = 1e9;
  endpoint.max_retries = 0;
  backends.summarizer =
      std::make_shared<SummarizerClient>(std::make_shared<RequestExecutor>(endpoint, std::move(transport)));
  return backends;
}

}  // namespace

TEST_SUITE("pipeline_runner")
{
  TEST_CASE("ten assets produce a complete, byte-identical manifest")
  {
    Batch batch(10);
    const auto first = batch.run();
    CHECK_FALSE(first.interrupted);
    CHECK(first.quarantined.empty());
    REQUIRE(first.entries.size() == 10);
    for (const auto& e : first.entries) {
      REQUIRE(e.final_caption.has_value());
      CHECK_FALSE(e.final_caption->text.empty());
      CHECK(e.final_caption->source_view_captions.size() == 8);
      CHECK(e.asset.captions.size() == 8);
      CHECK(e.asset.image_paths.size() == 8);
      CHECK(e.asset.camera_poses.size() == 8);
    }
    CHECK(first.summarized == 10);
    CHECK(first.usage.prompt_tokens > 0);

    Batch again(10);
    again.options.workers = 1;
    CHECK(manifest_bytes(again.run()) == manifest_bytes(first));
    again.options.workers = 8;
    CHECK(manifest_bytes(again.run()) == manifest_bytes(first));
  }

  TEST_CASE("interrupted run resumes to the uninterrupted result")
  {
    Batch batch(12);
    const auto reference = batch.run();

    TempDir checkpoints;
    Batch resumed(12);
    resumed.options.checkpoint_dir = checkpoints.path();
    resumed.options.commit_every = 2;
    resumed.options.stop_after = 5;
    const auto partial = resumed.run();
    CHECK(partial.interrupted);
    CHECK(partial.entries.empty());

    resumed.options.stop_after.reset();
    const auto full = resumed.run();
    CHECK_FALSE(full.interrupted);
    CHECK(manifest_bytes(full) == manifest_bytes(reference));
    CHECK(full.usage == reference.usage);
    CHECK(full.cost.total == reference.cost.total);

    resumed.config.seed = 8;
    CHECK(errc_of([&] { (void)resumed.run(); }) == Errc::checkpoint_mismatch);
  }

  TEST_CASE("summarizer refusal quarantines the asset for review")
  {
    Batch batch(3);
    batch.options.workers = 1;
    auto transport = std::make_shared<ScriptedTransport>(
        std::deque<ScriptedTransport::Step>{{HttpResponse{200, R"({"refusal":"cannot describe this"})"}}},
        MockBackend(batch.config.seed, 512));
    const auto result = batch.run(with_summarizer(transport, batch.config.seed));
    REQUIRE(result.quarantined.size() == 1);
    const auto& q = result.quarantined.front();
    CHECK(q.uid == "obj-000");
    CHECK(q.stage == "consolidate");
    CHECK(q.reason == "needs-review");
    CHECK(q.detail.find("cannot describe this") != std::string::npos);
    CHECK(result.entries.size() == 2);
  }

  TEST_CASE("unavailable summarizer quarantines every asset without aborting")
  {
    Batch batch(2);
    auto failing = std::make_shared<capforge::testing::FailingTransport>();
    const auto result = batch.run(with_summarizer(failing, batch.config.seed));
    CHECK(result.entries.empty());
    REQUIRE(result.quarantined.size() == 2);
    CHECK(result.quarantined[0].reason == "backend-unavailable");
  }

  TEST_CASE("missing renders are quarantined")
  {
    Batch batch(3);
    std::filesystem::remove_all(batch.dir / "obj-001");
    const auto result = batch.run();
    REQUIRE(result.quarantined.size() == 1);
    CHECK(result.quarantined[0].uid == "obj-001");
    CHECK(result.quarantined[0].stage == "caption");
    CHECK(result.entries.size() == 2);
  }

  TEST_CASE("assets with too few explicit images are quarantined")
  {
    Batch batch(1);
    batch.assets[0].image_paths = {"obj-000/0.png"};
    batch.assets[0].camera_poses = {CameraPose{}};
    const auto result = batch.run();
    REQUIRE(result.quarantined.size() == 1);
    CHECK(result.quarantined[0].reason == "missing-renders");
  }

  TEST_CASE("outcome JSON round trip")
  {
    AssetOutcome o;
    o.uid = "u";
    o.quarantine = QuarantineRecord{"u", "select", "protocol_violation", "bad dim"};
    o.usage.prompt_tokens = 12;
    o.flags = {"qa-fallback:view-2"};
    const auto back = outcome_from_json(nlohmann::json::parse(outcome_to_json(o).dump()));
    CHECK(back.quarantine == o.quarantine);
    CHECK(back.usage == o.usage);
    CHECK(back.flags == o.flags);
    CHECK_FALSE(back.entry.has_value());
  }

  TEST_CASE("invalid manifest and config are rejected")
  {
    Batch batch(2);
    batch.assets[1].uid = batch.assets[0].uid;
    CHECK(errc_of([&] { (void)batch.run(); }) == Errc::parse_error);
    Batch bad(1);
    bad.config.views_per_object = 0;
    CHECK(errc_of([&] { (void)bad.run(); }) == Errc::config_error);
  }
}
