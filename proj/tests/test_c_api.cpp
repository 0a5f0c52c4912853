// Exercises the library only through its C header.
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "omni/omni.h"

namespace {

const char* kTinyConfig = R"(
[corpus]
n_utts = 30
max_words = 1
video_frames_per_char = 2
[backbone]
d_model = 16
n_layers = 1
n_heads = 2
d_ff = 24
max_len = 160
[lora]
rank = 4
[frontend]
d_enc = 8
d_proj = 16
[pretrain]
steps = 10
batch_size = 2
eval_every = 5
[optim]
steps = 3
batch_size = 2
valid_utts = 2
[decode]
beam_width = 2
max_new_tokens = 6
)";

struct Dir {
    std::filesystem::path path;
    Dir() {
        path = std::filesystem::temp_directory_path() / ("omni-capi-" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~Dir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string operator/(const char* name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("cost rows through the C interface") {
    omni_cost_row rows[OMNI_COST_METHODS];
    char* table = nullptr;
    REQUIRE(omni_cost(3, 2, 2, rows, &table) == OMNI_OK);
    CHECK(std::string(rows[0].method) == "Llama-AVSR");
    CHECK(rows[0].trained_models == 8);
    CHECK(rows[0].passes_per_batch == 8);
    CHECK(rows[1].trained_models == 3);
    CHECK(rows[1].passes_per_batch == 8);
    CHECK(rows[2].trained_models == 4);
    CHECK(rows[2].passes_per_batch == 12);
    CHECK(std::string(rows[3].method) == "Omni-AVSR");
    CHECK(rows[3].trained_models == 1);
    CHECK(rows[3].passes_per_batch == 3);
    CHECK(std::string(table).find("Omni-AVSR\t1\t3") != std::string::npos);
    omni_string_free(table);
    CHECK(omni_cost(0, 2, 2, rows, nullptr) == OMNI_ERR_VALIDATION);
    CHECK(std::strlen(omni_last_error()) > 0);
}

TEST_CASE("config handles parse, reseed and serialize") {
    omni_config* c = nullptr;
    REQUIRE(omni_config_parse(kTinyConfig, &c) == OMNI_OK);
    CHECK(omni_config_set_seed(c, 42) == OMNI_OK);
    std::uint64_t seed = 0;
    CHECK(omni_config_get_seed(c, &seed) == OMNI_OK);
    CHECK(seed == 42);
    char* text = nullptr;
    REQUIRE(omni_config_serialize(c, &text) == OMNI_OK);
    omni_config* again = nullptr;
    REQUIRE(omni_config_parse(text, &again) == OMNI_OK);
    char* text2 = nullptr;
    REQUIRE(omni_config_serialize(again, &text2) == OMNI_OK);
    CHECK(std::string(text) == std::string(text2));
    omni_string_free(text);
    omni_string_free(text2);
    omni_config_free(again);
    omni_config_free(c);

    omni_config* bad = nullptr;
    CHECK(omni_config_parse("[corpus]\nnope = 1\n", &bad) == OMNI_ERR_VALIDATION);
    CHECK(bad == nullptr);
    CHECK(std::string(omni_last_error()).find("nope") != std::string::npos);
    CHECK(omni_config_load("/nonexistent/omni.cfg", &bad) == OMNI_ERR_IO);
    CHECK(omni_config_default(nullptr) == OMNI_ERR_VALIDATION);
}

TEST_CASE("eval requests validate their cells") {
    omni_eval_request* r = nullptr;
    REQUIRE(omni_eval_request_new(&r) == OMNI_OK);
    CHECK(omni_eval_request_add_cell(r, OMNI_TASK_ASR, 4, 0, INFINITY) == OMNI_OK);
    CHECK(omni_eval_request_add_cell(r, OMNI_TASK_ASR, 4, 2, INFINITY) == OMNI_ERR_VALIDATION);
    CHECK(omni_eval_request_add_cell(r, OMNI_TASK_VSR, 0, 0, 0.0) == OMNI_ERR_VALIDATION);
    CHECK(omni_eval_request_add_cell(r, OMNI_TASK_AVSR, 4, 2, NAN) == OMNI_ERR_VALIDATION);
    CHECK(omni_eval_request_set_decode(r, 0, -1.0, 0) == OMNI_ERR_VALIDATION);
    CHECK(omni_eval_request_set_decode(r, 3, NAN, 0) == OMNI_OK);
    omni_eval_request_free(r);
}

TEST_CASE("full pipeline through the C interface") {
    Dir dir;
    omni_config* c = nullptr;
    REQUIRE(omni_config_parse(kTinyConfig, &c) == OMNI_OK);
    REQUIRE(omni_gen_data(c, (dir / "data").c_str(), 0) == OMNI_OK);
    CHECK(omni_gen_data(c, (dir / "data").c_str(), 0) == OMNI_ERR_IO);
    CHECK(omni_gen_data(c, (dir / "data").c_str(), 1) == OMNI_OK);

    double p0 = 0, p1 = 0;
    int lines = 0;
    auto count = [](const char*, void* user) { ++*static_cast<int*>(user); };
    REQUIRE(omni_pretrain(c, (dir / "data").c_str(), (dir / "base").c_str(), 0, count, &lines, &p0, &p1) == OMNI_OK);
    CHECK(lines > 0);
    CHECK(p1 < p0);
    CHECK(omni_pretrain(c, (dir / "absent").c_str(), (dir / "b2").c_str(), 0, nullptr, nullptr, nullptr, nullptr) ==
          OMNI_ERR_IO);

    const std::string base = dir / "base/base.omni";
    omni_train_options opts{0, 0, 0};
    std::size_t final_step = 0;
    REQUIRE(omni_train(c, (dir / "data").c_str(), base.c_str(), (dir / "run").c_str(), &opts, nullptr, nullptr,
                       &final_step) == OMNI_OK);
    CHECK(final_step == 3);

    omni_config* wide = nullptr;
    std::string wide_text = std::string(kTinyConfig) + "";
    wide_text.replace(wide_text.find("d_model = 16"), 12, "d_model = 32");
    REQUIRE(omni_config_parse(wide_text.c_str(), &wide) == OMNI_OK);
    CHECK(omni_train(wide, (dir / "data").c_str(), base.c_str(), (dir / "run2").c_str(), &opts, nullptr, nullptr,
                     nullptr) == OMNI_ERR_COMPATIBILITY);
    omni_config_free(wide);

    omni_eval_request* req = nullptr;
    REQUIRE(omni_eval_request_new(&req) == OMNI_OK);
    REQUIRE(omni_eval_request_add_sweep(req, INFINITY) == OMNI_OK);
    REQUIRE(omni_eval_request_add_cell(req, OMNI_TASK_ASR, 8, 0, -5.0) == OMNI_OK);
    REQUIRE(omni_eval_request_set_limit(req, 2) == OMNI_OK);
    omni_eval_report* rep = nullptr;
    const std::string ckpt = dir / "run/omni.omni";
    REQUIRE(omni_eval(ckpt.c_str(), (dir / "data").c_str(), req, nullptr, nullptr, &rep) == OMNI_OK);
    REQUIRE(omni_eval_report_rows(rep) == 9);
    omni_eval_row row;
    REQUIRE(omni_eval_report_row(rep, 8, &row) == OMNI_OK);
    CHECK(row.task == OMNI_TASK_ASR);
    CHECK(row.audio_rate == 8);
    CHECK(row.on_menu == 0);
    CHECK(row.utterances == 2);
    CHECK(omni_eval_report_row(rep, 9, &row) == OMNI_ERR_VALIDATION);
    std::uint64_t before = 0, after = 1;
    CHECK(omni_eval_report_hashes(rep, &before, &after) == OMNI_OK);
    CHECK(before == after);
    CHECK(std::string(omni_eval_report_text(rep)).starts_with("task\t"));
    omni_eval_report_free(rep);
    CHECK(omni_eval((dir / "nothing.omni").c_str(), (dir / "data").c_str(), req, nullptr, nullptr, &rep) ==
          OMNI_ERR_IO);
    omni_eval_request_free(req);
    omni_config_free(c);
}
