#pragma once

#include "omni/config.hpp"

namespace omni::test {

// A run small enough to pretrain, train and evaluate in a few seconds.
inline RunConfig tiny_run_config(std::uint64_t seed = 1) {
    RunConfig c = default_run_config();
    c.seed = seed;
    c.corpus.n_utts = 40;
    c.corpus.max_words = 1;
    c.corpus.video_frames_per_char = 2;
    c.backbone.d_model = 16;
    c.backbone.n_layers = 1;
    c.backbone.n_heads = 2;
    c.backbone.d_ff = 24;
    c.backbone.max_len = 160;
    c.lora.rank = 4;
    c.frontend = {16, 8, 16};
    c.pretrain.optim.total_steps = 20;
    c.pretrain.batch_size = 4;
    c.pretrain.eval_every = 10;
    c.train.optim.total_steps = 6;
    c.train.batch_size = 2;
    c.train.validate_every = 3;
    c.train.valid_utts = 2;
    c.train.checkpoint_every = 3;
    c.decode.beam_width = 2;
    c.decode.max_new_tokens = 8;
    return c;
}

}  // namespace omni::test
