use klmc_core::metrics::{plugin_w2_to_target, MomentAccumulator};
use klmc_core::sampler::run_chains;
use klmc_core::{Algorithm, DiagonalQuadraticTarget, SamplerConfig};

fn main() -> klmc_core::Result<()> {
    let target = DiagonalQuadraticTarget::new(vec![1.0, 4.0])?;
    let config = SamplerConfig::new(Algorithm::Klmc, 5f64.sqrt(), 0.01, 2000, 42);
    for w in config.warnings(&target) {
        eprintln!("warning: {w}");
    }
    let chains = run_chains(&config, &target, 64)?;
    let per_chain: Vec<MomentAccumulator> = chains
        .iter()
        .map(|c| {
            let mut acc = MomentAccumulator::new(2);
            acc.push(&c.last().unwrap().theta);
            acc
        })
        .collect();
    let w2 = plugin_w2_to_target(&per_chain, &target)?;
    println!("W2 ≈ {:.3} ± {:.3}", w2.distance, w2.std_error);
    Ok(())
}
