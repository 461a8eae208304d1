#include <doctest.h>

#include "steerkit/config.hpp"
#include "steerkit/errors.hpp"

#include <filesystem>
#include <string>

using namespace steerkit;

namespace {

std::string error_key(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "";
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("empty document gives the desk defaults") {
    const auto c = parse_config("{}");
    CHECK(c.seed == 1);
    CHECK(c.model.dim == 2);
    CHECK(c.model.cutoff == 2);
    CHECK(c.model.d_model == 16);
    CHECK(c.model.heads == 2);
    CHECK(c.model.input_size == 16);
    CHECK(c.model.classes == 4);
    CHECK(c.model.dropout == 0.7);
    CHECK(c.optimizer.lr == 5e-3);
    CHECK(c.optimizer.lr_decay == 0.5);
    CHECK(c.optimizer.decay_every == 20);
    CHECK(c.optimizer.weight_decay == 5e-4);
    CHECK(c.dataset.train == 2000);
    CHECK(c.dataset.test == 500);
  }

  TEST_CASE("round trip through JSON") {
    auto c = parse_config(R"({"seed": 9, "cutoff": 1, "mixing": {"first": "full-matrix"},
                             "variants": {"ln_sqrt": true}, "optimizer": {"epochs": 3}})");
    CHECK(c.seed == 9);
    CHECK(c.model.mix1 == MixingMode::FullMatrix);
    CHECK(c.model.ln_sqrt);
    const auto text = config_to_json(c);
    CHECK(config_to_json(parse_config(text)) == text);
  }

  TEST_CASE("unknown keys are errors naming the path") {
    CHECK(error_key(R"({"sed": 1})") == "sed");
    CHECK(error_key(R"({"optimizer": {"lrr": 0.1}})") == "optimizer.lrr");
    CHECK(error_key(R"({"architecture": {"pool": 2, "poool": 2}})") == "architecture.poool");
  }

  TEST_CASE("type errors name the path") {
    CHECK(error_key(R"({"heads": "two"})") == "heads");
    CHECK(error_key(R"({"heads": 2.5})") == "heads");
    CHECK(error_key(R"({"seed": -1})") == "seed");
    CHECK(error_key(R"({"variants": {"ln_sqrt": 1}})") == "variants.ln_sqrt");
    CHECK(error_key(R"({"mixing": {"second": "diagonal"}})") == "mixing.second");
    CHECK(error_key(R"({"optimizer": []})") == "optimizer");
    CHECK(error_key("{not json") == "config");
  }

  TEST_CASE("validation errors name the key") {
    CHECK(error_key(R"({"heads": 3})") == "heads");
    CHECK(error_key(R"({"optimizer": {"batch": 0}})") == "optimizer.batch");
    CHECK(error_key(R"({"dataset": {"classes": 7}})") == "dataset.classes");
    CHECK(error_key(R"({"dataset": {"kind": "mnist"}})") == "dataset.kind");
    CHECK(error_key(R"({"dataset": {"kind": "idx"}})") == "dataset.train_images");
    CHECK(error_key(R"({"audit": {"fd_step": 0}})") == "audit.fd_step");
    CHECK(error_key(R"({"architecture": {"input_size": 17}})") == "architecture.pool");
  }

  TEST_CASE("shipped configs parse") {
    const auto dir = std::filesystem::path(STEERKIT_TEST_DIR).parent_path() / "configs";
    int count = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      if (e.path().extension() != ".json") continue;
      INFO(e.path().string());
      CHECK_NOTHROW(load_config(e.path()));
      ++count;
    }
    CHECK(count >= 4);
    CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
  }
}
