//! A configuration small enough to train in seconds.

use microgrid_core::config::RunConfig;

pub fn smoke_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.data.synth_days = 8;
    cfg.data.min_test_days = 2;
    let t = &mut cfg.train;
    t.episodes = 3;
    t.warmup_steps = 100;
    t.batch_size = 32;
    t.hidden = 16;
    t.gru_embed = 8;
    t.gru_hidden = 8;
    t.gru_layers = 1;
    t.replay_capacity = 1000;
    cfg
}
