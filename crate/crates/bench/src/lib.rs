//! Shared fixtures for the benchmarks in `benches/`.

use tstok_core::embed::{base_stats_from_rows, init_ts_block, standin_base_table, BaseStats, InitScheme, InitSpec};
use tstok_core::model::{Model, ModelConfig};
use tstok_core::synth::{encode_sample, generate_one, Specials, TaskKind};
use tstok_core::ts_processor::build_vocab;
use tstok_core::EmbeddingMatrix;

pub const DIM: usize = 64;
pub const N_TS: usize = 2001;

pub fn base_stats() -> BaseStats {
    base_stats_from_rows(&standin_base_table(1024, DIM, 0), DIM).expect("stand-in table is full rank")
}

/// A Slerp TS block of the default vocabulary size.
pub fn slerp_block() -> Vec<f64> {
    init_ts_block(N_TS, &base_stats(), &InitSpec::new(InitScheme::Slerp, 1)).expect("valid spec")
}

/// The default micro model and one encoded sample of `len` series values.
pub fn model_and_input(len_index: usize) -> (Model<f32>, Vec<usize>, usize) {
    let vocab = build_vocab(0.001, Specials::COUNT).expect("valid epsilon");
    let cfg = ModelConfig::for_ts_tokens(vocab.n_tokens);
    let base = standin_base_table(1024, DIM, 0);
    let emb = EmbeddingMatrix::with_ts_block(&base[..Specials::COUNT * DIM], DIM, slerp_block()).expect("shapes agree");
    let model = Model::init(&cfg, &emb, base_stats().avg_radius, 0).expect("valid config");
    // Sample indices cycle through lengths; pick one of the requested length.
    let sample = (0..)
        .map(|i| generate_one(TaskKind::Trend, 0, i))
        .find(|s| s.values().len() == tstok_core::synth::LENGTHS[len_index])
        .expect("every length occurs");
    let (ids, target) = encode_sample(&sample, &vocab, &Specials::default(), cfg.context).expect("fits context");
    (model, ids, target)
}
