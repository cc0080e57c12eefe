//! Trains masked-channel and plain RVQ codebooks on a synthetic correlated
//! corpus and prints residual energy per stage for both.
//!
//! cargo run --release -p lcodec --example rate_distortion -- [frames] [codebook_size]

use std::time::Instant;

use lcodec::quantizer::{
    channel_information_profile, mcrvq_encode, train_codebooks, train_rvq_codebooks, McrvqConfig,
    TrainSchedule,
};
use lcodec::synth::CorrelatedGaussian;

fn main() -> lcodec::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let frames = args.first().copied().unwrap_or(10_000);
    let k = args.get(1).copied().unwrap_or(1024);
    let z = CorrelatedGaussian::new(frames, 512, 1).generate()?;
    let cfg = McrvqConfig::new(8, 3, k, 512)?;
    let schedule = TrainSchedule::default();

    let t = Instant::now();
    let cbs = train_codebooks(&z, &cfg, &schedule)?;
    println!("mcrvq training: {:.1?}", t.elapsed());
    let t = Instant::now();
    let rvq = train_rvq_codebooks(&z, 8, k, &schedule)?;
    println!("rvq training:   {:.1?}", t.elapsed());

    let r = mcrvq_encode(&z, &cbs, &cfg)?;
    println!("mcrvq residual energy per stage: {:?}", r.stage_residual_energy);
    let p = channel_information_profile(&z, &cbs, &cfg, &rvq)?;
    println!("mcrvq stage captured: {:?}", p.mcrvq.stage_captured);
    println!("rvq stage captured:   {:?}", p.rvq.stage_captured);
    println!("mcrvq prefixes: {:?}", p.mcrvq.prefix_captured);
    println!("rvq prefixes:   {:?}", p.rvq.prefix_captured);
    Ok(())
}
